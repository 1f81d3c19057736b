"""Response-level advantage estimators.

Two normalizations of group rewards: per-group standardization, and group
centering followed by batch-wide standardization. Both produce one scalar
per response, broadcast to its tokens. Population statistics throughout;
eps_std keeps degenerate groups finite.
"""

from dataclasses import dataclass

import numpy as np

from dler_lab.tasks import Prompt

GRPO = "grpo"
BATCH_NORM = "batch_norm"
ADVANTAGE_MODES = (GRPO, BATCH_NORM)

DEFAULT_EPS_STD = 1e-8


@dataclass(frozen=True, eq=False)
class Group:
    """G rollouts for one prompt with their scored rewards."""

    prompt: Prompt
    rollouts: tuple
    rewards: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rewards, dtype=np.float64)
        if len(self.rollouts) < 2:
            raise ValueError("groups need G >= 2 rollouts")
        if r.shape != (len(self.rollouts),):
            raise ValueError("one reward per rollout required")
        object.__setattr__(self, "rollouts", tuple(self.rollouts))
        object.__setattr__(self, "rewards", r)

    @property
    def size(self) -> int:
        return len(self.rollouts)


@dataclass(frozen=True, eq=False)
class AdvantageSet:
    """One scalar advantage per rollout; tokens inherit their rollout's value."""

    values: np.ndarray
    mode: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if not np.isfinite(v).all():
            raise ValueError("advantages must be finite")
        object.__setattr__(self, "values", v)

    def per_token(self, lengths) -> np.ndarray:
        return np.repeat(self.values, np.asarray(lengths, dtype=np.int64))


def grpo_advantage(group: Group, eps_std: float = DEFAULT_EPS_STD) -> AdvantageSet:
    """Standardize rewards inside the group: (R - mean) / (popstd + eps_std)."""
    r = group.rewards
    values = (r - r.mean()) / (r.std() + eps_std)
    return AdvantageSet(values=values, mode=GRPO)


def batch_norm_advantage(batch, eps_std: float = DEFAULT_EPS_STD) -> AdvantageSet:
    """Center within each group, then standardize the centered values batch-wide."""
    if not batch:
        raise ValueError("batch must contain at least one group")
    centered = np.concatenate([g.rewards - g.rewards.mean() for g in batch])
    values = (centered - centered.mean()) / (centered.std() + eps_std)
    return AdvantageSet(values=values, mode=BATCH_NORM)


def reward_variance_probe(batch) -> float:
    """Mean over groups of the within-group population reward variance."""
    if not batch:
        raise ValueError("batch must contain at least one group")
    return float(np.mean([g.rewards.var() for g in batch]))
