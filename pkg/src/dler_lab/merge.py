"""Weight merging between a base snapshot and a fine-tuned snapshot.

select_merge keeps only the largest-magnitude parameter deltas (globally
ranked, ties to the lower index) and adds them back scaled; linear_merge is
the naive interpolation baseline. Snapshots are flat float64 vectors tied
to the binary checkpoint format.
"""

import math
from dataclasses import dataclass

import numpy as np

from dler_lab import checkpoint
from dler_lab.policy import PolicyParams
from dler_lab.vocab import Vocab


class IncompatibleSnapshotError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ParamSnapshot:
    vector: np.ndarray
    state_count: int
    vocab_size: int
    version: int = checkpoint.FORMAT_VERSION

    def __post_init__(self):
        vec = np.array(self.vector, dtype=np.float64).reshape(-1)
        if vec.size != self.state_count * self.vocab_size:
            raise ValueError(
                f"vector length {vec.size} != state_count * vocab_size "
                f"({self.state_count} * {self.vocab_size})"
            )
        if not np.isfinite(vec).all():
            raise ValueError("snapshot entries must be finite")
        vec.flags.writeable = False
        object.__setattr__(self, "vector", vec)

    @classmethod
    def from_params(cls, params: PolicyParams) -> "ParamSnapshot":
        return cls(vector=params.logits.reshape(-1),
                   state_count=params.n_states,
                   vocab_size=params.vocab.size)

    def to_params(self, vocab: Vocab, diff_min: int = 1) -> PolicyParams:
        if vocab.size != self.vocab_size:
            raise IncompatibleSnapshotError(
                f"snapshot vocab size {self.vocab_size} != vocab size {vocab.size}"
            )
        return PolicyParams(self.vector.reshape(self.state_count, self.vocab_size),
                            vocab, diff_min=diff_min)


def _check_compatible(base: ParamSnapshot, tuned: ParamSnapshot):
    if (base.state_count, base.vocab_size) != (tuned.state_count, tuned.vocab_size):
        raise IncompatibleSnapshotError(
            f"snapshot shapes differ: ({base.state_count}, {base.vocab_size}) "
            f"vs ({tuned.state_count}, {tuned.vocab_size})"
        )
    if base.version != tuned.version:
        raise IncompatibleSnapshotError(
            f"snapshot format versions differ: {base.version} vs {tuned.version}"
        )


def select_merge(base: ParamSnapshot, tuned: ParamSnapshot,
                 top_fraction: float = 0.25, scale: float = 0.7) -> ParamSnapshot:
    """Apply only the top |delta| coordinates of (tuned - base), scaled.

    Keeps ceil(top_fraction * len) coordinates under a global magnitude
    ranking with ties broken toward the lower index.
    """
    _check_compatible(base, tuned)
    if not 0.0 < top_fraction <= 1.0:
        raise ValueError("top_fraction must lie in (0, 1]")
    delta = tuned.vector - base.vector
    keep = np.argsort(-np.abs(delta), kind="stable")[:math.ceil(top_fraction * delta.size)]
    merged = base.vector.copy()
    if scale == 1.0:
        merged[keep] = tuned.vector[keep]
    else:
        merged[keep] = base.vector[keep] + scale * delta[keep]
    return ParamSnapshot(vector=merged, state_count=base.state_count,
                         vocab_size=base.vocab_size, version=base.version)


def linear_merge(base: ParamSnapshot, tuned: ParamSnapshot,
                 alpha: float) -> ParamSnapshot:
    """(1 - alpha) * base + alpha * tuned; endpoints are returned exactly."""
    _check_compatible(base, tuned)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if alpha == 0.0:
        vec = base.vector.copy()
    elif alpha == 1.0:
        vec = tuned.vector.copy()
    else:
        vec = (1.0 - alpha) * base.vector + alpha * tuned.vector
    return ParamSnapshot(vector=vec, state_count=base.state_count,
                         vocab_size=base.vocab_size, version=base.version)


def read_snapshot(path) -> ParamSnapshot:
    vec, state_count, vocab_size, version = checkpoint.read_checkpoint(path)
    return ParamSnapshot(vector=vec, state_count=state_count,
                         vocab_size=vocab_size, version=version)


def write_snapshot(path, snapshot: ParamSnapshot) -> None:
    checkpoint.write_checkpoint(path, snapshot.vector, snapshot.state_count,
                                snapshot.vocab_size, snapshot.version)
