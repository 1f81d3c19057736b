"""Reward composition: rule-based correctness plus a pluggable length penalty.

The built-in truncation penalty zeroes the reward of any rollout that hit
its sampling cutoff; untruncated rollouts keep their correctness score.
Alternative penalties register a scoring rule under a new kind name.
"""

from dataclasses import dataclass

from dler_lab.tasks import Prompt, verify


class PenaltyRegistrationError(ValueError):
    pass


class ContractViolationError(ValueError):
    """Rollout incompatible with the penalty it is scored against."""


@dataclass(frozen=True)
class RewardRecord:
    correctness: int
    penalty_applied: bool
    final_reward: float


@dataclass(frozen=True)
class PenaltySpec:
    kind: str = "truncation"
    target_length: int = 24

    def __post_init__(self):
        if self.target_length < 1:
            raise ValueError("target_length must be >= 1")


# kind -> rule(correctness, rollout, spec) -> (penalty_applied, final_reward)
_PENALTY_RULES = {}


def register_penalty(kind: str, rule) -> None:
    """Add a scoring rule; write-once, duplicates are rejected."""
    if kind in _PENALTY_RULES:
        raise PenaltyRegistrationError(f"penalty kind {kind!r} already registered")
    _PENALTY_RULES[kind] = rule


def _truncation_rule(correctness, rollout, spec):
    if rollout.truncated:
        return True, 0.0
    return False, float(correctness)


register_penalty("truncation", _truncation_rule)


def score(prompt: Prompt, rollout, penalty: PenaltySpec, vocab=None) -> RewardRecord:
    """Correctness composed with the penalty rule.

    Rollouts must have been sampled with max_len = penalty.target_length;
    the cutoff is a sampling-time contract, not a post-hoc filter.
    """
    if rollout.length > penalty.target_length:
        raise ContractViolationError(
            f"rollout length {rollout.length} exceeds penalty target_length "
            f"{penalty.target_length}; sample with max_len = target_length"
        )
    rule = _PENALTY_RULES.get(penalty.kind)
    if rule is None:
        raise ValueError(f"unknown penalty kind {penalty.kind!r}")
    correctness = 1 if verify(prompt, rollout, vocab) else 0
    applied, final = rule(correctness, rollout, penalty)
    return RewardRecord(correctness=correctness,
                        penalty_applied=bool(applied),
                        final_reward=float(final))
