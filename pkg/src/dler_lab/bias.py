"""Monte Carlo verification that group-normalized advantages are biased.

Setup: a group of N rewards r_j = theta + eps_j. One member's noise eps is
held fixed while the other N-1 are fresh Normal(0, sigma^2) draws. The
normalized advantage is A = (eps - mean of the noises) / D with D the
population std of the noises; theta cancels. The conditional mean E[A|eps]
does not equal eps, and the gap widens as sigma grows. The numerator and
D^2 have closed-form conditional means used as cross-checks:

    E[eps - mean | eps] = (1 - 1/N) eps
    E[D^2 | eps]        = ((N-1)^2 / N^2) sigma^2 + ((N-1) / N^2) eps^2
"""

from dataclasses import dataclass

import numpy as np

_CHUNK = 250_000


@dataclass(frozen=True)
class BiasExperiment:
    group_size: int = 16
    sigma: float = 1.0
    epsilon_values: tuple = (0.0, 0.5, 1.0)
    samples: int = 1_000_000
    seed: int = 0

    def __post_init__(self):
        if self.group_size < 2:
            raise ValueError("group_size must be >= 2")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if len(tuple(self.epsilon_values)) == 0:
            raise ValueError("epsilon_values must be non-empty")
        object.__setattr__(self, "epsilon_values",
                           tuple(float(e) for e in self.epsilon_values))


@dataclass(frozen=True)
class BiasPoint:
    epsilon: float
    numerator_mean: float
    numerator_se: float
    d2_mean: float
    d2_se: float
    advantage_mean: float
    advantage_se: float
    bias: float
    bias_se: float
    analytic_numerator: float
    analytic_d2: float
    samples_used: int
    skipped: int


@dataclass(frozen=True, eq=False)
class BiasResult:
    experiment: BiasExperiment
    points: tuple


@dataclass(frozen=True)
class CurvePoint:
    sigma: float
    bias_abs: float
    se: float
    samples_used: int
    skipped: int


def analytic_moments(group_size: int, sigma: float, epsilon: float):
    """Closed-form conditional means of the numerator and of D^2."""
    if group_size < 2:
        raise ValueError("group_size must be >= 2")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    n = group_size
    numerator = (1.0 - 1.0 / n) * epsilon
    alpha = ((n - 1) ** 2 / n ** 2) * sigma ** 2
    beta = (n - 1) / n ** 2
    return numerator, alpha + beta * epsilon ** 2


class _StreamStats:
    """Running mean and standard error from chunked draws."""

    def __init__(self):
        self.n = 0
        self.total = 0.0
        self.total_sq = 0.0

    def add(self, values: np.ndarray):
        self.n += values.size
        self.total += float(values.sum())
        self.total_sq += float((values * values).sum())

    @property
    def mean(self) -> float:
        return self.total / self.n if self.n else float("nan")

    @property
    def se(self) -> float:
        if self.n < 2:
            return float("inf")
        var = (self.total_sq - self.total ** 2 / self.n) / (self.n - 1)
        return float(np.sqrt(max(var, 0.0) / self.n))


def _group_moments(group_size: int, sigma: float, epsilon: float, z: np.ndarray):
    """Per-draw numerator, D^2, and advantage (where D > 0) for one chunk.

    z holds the N-1 free noises as standard normals; the fixed member
    contributes epsilon.
    """
    noise = sigma * z
    mean_eps = (epsilon + noise.sum(axis=1)) / group_size
    numerator = epsilon - mean_eps
    d2 = (numerator ** 2 + ((noise - mean_eps[:, None]) ** 2).sum(axis=1)) / group_size
    valid = d2 > 0
    adv = numerator[valid] / np.sqrt(d2[valid])
    return numerator, d2, adv, int((~valid).sum())


def mc_conditional_moments(experiment: BiasExperiment) -> BiasResult:
    """Estimate E[numerator|eps], E[D^2|eps], E[A|eps] for each epsilon."""
    n = experiment.group_size
    points = []
    for i, eps in enumerate(experiment.epsilon_values):
        rng = np.random.default_rng((experiment.seed, i))
        num_stats, d2_stats, adv_stats = _StreamStats(), _StreamStats(), _StreamStats()
        skipped = 0
        remaining = experiment.samples
        while remaining:
            take = min(_CHUNK, remaining)
            remaining -= take
            z = rng.standard_normal((take, n - 1))
            numerator, d2, adv, bad = _group_moments(n, experiment.sigma, eps, z)
            num_stats.add(numerator)
            d2_stats.add(d2)
            adv_stats.add(adv)
            skipped += bad
        analytic_num, analytic_d2 = analytic_moments(n, experiment.sigma, eps)
        points.append(BiasPoint(
            epsilon=eps,
            numerator_mean=num_stats.mean, numerator_se=num_stats.se,
            d2_mean=d2_stats.mean, d2_se=d2_stats.se,
            advantage_mean=adv_stats.mean, advantage_se=adv_stats.se,
            bias=adv_stats.mean - eps, bias_se=adv_stats.se,
            analytic_numerator=analytic_num, analytic_d2=analytic_d2,
            samples_used=adv_stats.n, skipped=skipped,
        ))
    return BiasResult(experiment=experiment, points=tuple(points))


def bias_curve(group_size: int, sigma_list, epsilon: float,
               samples: int, seed: int) -> tuple:
    """|E[A|eps] - eps| per sigma, with common random numbers across sigmas.

    Every sigma reuses the same underlying standard-normal draws, so the
    cross-sigma comparison is low-variance and the ordering check is a
    paired one.
    """
    sigmas = tuple(float(s) for s in sigma_list)
    if not sigmas:
        raise ValueError("sigma_list must be non-empty")
    if any(s <= 0 for s in sigmas):
        raise ValueError("sigmas must be positive")
    if any(b <= a for a, b in zip(sigmas, sigmas[1:])):
        raise ValueError("sigma_list must be strictly ascending")
    if group_size < 2:
        raise ValueError("group_size must be >= 2")
    if samples < 1:
        raise ValueError("samples must be >= 1")

    adv_stats = [_StreamStats() for _ in sigmas]
    skipped = [0] * len(sigmas)
    rng = np.random.default_rng((seed, 0))
    remaining = samples
    while remaining:
        take = min(_CHUNK, remaining)
        remaining -= take
        z = rng.standard_normal((take, group_size - 1))
        for si, sigma in enumerate(sigmas):
            _, _, adv, bad = _group_moments(group_size, sigma, epsilon, z)
            adv_stats[si].add(adv)
            skipped[si] += bad
    return tuple(
        CurvePoint(sigma=s, bias_abs=abs(st.mean - epsilon), se=st.se,
                   samples_used=st.n, skipped=sk)
        for s, st, sk in zip(sigmas, adv_stats, skipped)
    )
