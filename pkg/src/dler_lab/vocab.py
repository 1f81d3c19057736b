"""Token vocabulary with semantic roles.

Roles drive the verifiable task rule: a correct response contains enough
`step` tokens followed by the right `answer(k)` token, terminated by `eos`.
`filler` tokens are inert padding the policy can learn to drop; `transition`
and `step_delimiter` tokens exist so synthetic rollouts can be rendered as
text traces (transitions map to hedging keywords, delimiters to the blank
line between steps).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FILLER = "filler"
STEP = "step"
TRANSITION = "transition"
STEP_DELIMITER = "step_delimiter"
EOS = "eos"


def answer_role(level: int) -> str:
    return f"answer:{level}"


def is_answer_role(role: str) -> bool:
    return role.startswith("answer:")


def answer_level(role: str) -> int:
    return int(role.split(":", 1)[1])


@dataclass(frozen=True)
class Vocab:
    """Total role assignment over token ids [0, size)."""

    size: int
    role_map: dict[int, str] = field(repr=False)

    def __post_init__(self):
        if self.size < 2:
            raise ValueError("vocab needs at least an answer token and eos")
        if sorted(self.role_map) != list(range(self.size)):
            raise ValueError("role_map must cover exactly the ids [0, size)")
        eos_ids = [t for t, r in self.role_map.items() if r == EOS]
        if len(eos_ids) != 1:
            raise ValueError("exactly one eos token required")

    @property
    def eos_id(self) -> int:
        return next(t for t, r in self.role_map.items() if r == EOS)

    def ids_with_role(self, role: str) -> list[int]:
        return [t for t, r in self.role_map.items() if r == role]

    def answer_id(self, level: int) -> int:
        ids = self.ids_with_role(answer_role(level))
        if not ids:
            raise ValueError(f"no answer token for difficulty {level}")
        return ids[0]

    def answer_levels(self) -> list[int]:
        return sorted(answer_level(r) for r in self.role_map.values() if is_answer_role(r))

    # Boolean masks used by the vectorized verifier and samplers.
    def role_masks(self) -> dict[str, np.ndarray]:
        masks = {
            FILLER: np.zeros(self.size, dtype=bool),
            STEP: np.zeros(self.size, dtype=bool),
            TRANSITION: np.zeros(self.size, dtype=bool),
            STEP_DELIMITER: np.zeros(self.size, dtype=bool),
            "answer": np.zeros(self.size, dtype=bool),
        }
        for tok, role in self.role_map.items():
            if is_answer_role(role):
                masks["answer"][tok] = True
            elif role in masks:
                masks[role][tok] = True
        return masks


def default_vocab() -> Vocab:
    """16 tokens: 6 fillers, 1 step, 3 transitions, 4 answer levels, 1 step delimiter, 1 eos."""
    roles: dict[int, str] = {}
    for t in range(6):
        roles[t] = FILLER
    roles[6] = STEP
    for t in range(7, 10):
        roles[t] = TRANSITION
    for lvl, t in enumerate(range(10, 14), start=1):
        roles[t] = answer_role(lvl)
    roles[14] = STEP_DELIMITER
    roles[15] = EOS
    return Vocab(size=16, role_map=roles)
