"""Training loop: batch collection with dynamic sampling, tiered truncation
budgets, advantage normalization, one full-batch surrogate ascent step per
iteration, and per-step metrics.

Per-step metrics describe the pre-update sampling distribution (so step 0
reflects the initial policy), except the clip fractions, which re-evaluate
the collected batch under the post-update parameters; ratios at update time
are identically one and would make the fractions vacuous.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from dler_lab.advantage import (ADVANTAGE_MODES, BATCH_NORM, GRPO,
                                AdvantageSet, Group, batch_norm_advantage,
                                grpo_advantage)
from dler_lab.analysis import clip_stats
from dler_lab.policy import (PolicyParams, apply_update, make_base_params,
                             sample_rollouts, surrogate_gradient)
from dler_lab.rewards import PenaltySpec, score
from dler_lab.tasks import TaskSuiteConfig, make_prompt_pool, verify
from dler_lab.vocab import Vocab, default_vocab

VARIANTS = ("grpo", "dler", "da_dler", "custom")


@dataclass(frozen=True)
class DifficultyTiers:
    """Correctness-ratio thresholds and the truncation budget per tier.

    lengths[i] applies below thresholds[i]; a ratio equal to a threshold
    falls in the easier tier above it, and easier tiers get shorter budgets.
    """

    thresholds: tuple
    lengths: tuple

    def __post_init__(self):
        thr = tuple(float(t) for t in self.thresholds)
        lens = tuple(int(l) for l in self.lengths)
        if len(lens) != len(thr) + 1:
            raise ValueError("tier lengths must have exactly one more entry than thresholds")
        if any(not 0.0 < t < 1.0 for t in thr) or any(b <= a for a, b in zip(thr, thr[1:])):
            raise ValueError("tier thresholds must be strictly ascending within (0, 1)")
        if any(l < 1 for l in lens):
            raise ValueError("tier lengths must be >= 1")
        if any(b > a for a, b in zip(lens, lens[1:])):
            raise ValueError(
                "tier lengths must be non-increasing (higher correctness ratio gets a shorter budget)"
            )
        object.__setattr__(self, "thresholds", thr)
        object.__setattr__(self, "lengths", lens)


@dataclass(frozen=True)
class TrainerConfig:
    batch_size: int = 64
    group_size: int = 8
    eps_low: float = 0.2
    eps_high: float = 0.28
    lr: float = 10.0
    kl_coef: float = 5e-4
    max_steps: int = 80
    advantage_mode: str = BATCH_NORM
    penalty: PenaltySpec = field(default_factory=PenaltySpec)
    dynamic_sampling: bool = True
    tiers: DifficultyTiers = None
    max_resample_rounds: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.group_size < 2:
            raise ValueError("group_size must be >= 2")
        if self.eps_low <= 0:
            raise ValueError("eps_low must be positive")
        if self.eps_high < self.eps_low:
            raise ValueError("eps_high must be >= eps_low")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.kl_coef < 0:
            raise ValueError("kl_coef must be >= 0")
        if self.max_steps < 0:
            raise ValueError("max_steps must be >= 0")
        if self.advantage_mode not in ADVANTAGE_MODES:
            raise ValueError(
                f"advantage_mode must be one of {ADVANTAGE_MODES}, got {self.advantage_mode!r}"
            )
        if self.max_resample_rounds < 1:
            raise ValueError("max_resample_rounds must be >= 1")


@dataclass(frozen=True)
class MetricsRecord:
    step: int
    mean_response_length: float
    mean_accuracy: float
    mean_token_entropy: float
    zero_reward_group_ratio: float
    all_one_group_ratio: float
    clip_high_token_fraction: float
    clip_low_token_fraction: float
    resample_rounds_used: int


@dataclass(frozen=True)
class BatchStats:
    """Pre-filter statistics over every group drawn while filling the batch."""

    mean_response_length: float
    mean_accuracy: float
    mean_token_entropy: float
    zero_reward_group_ratio: float
    all_one_group_ratio: float
    rounds_used: int
    groups_drawn: int
    groups_accepted: int


class PartialBatchError(RuntimeError):
    """Resample budget ran out before the batch filled; carries what was accepted."""

    def __init__(self, message, groups, stats):
        super().__init__(message)
        self.groups = groups
        self.stats = stats
        self.step = None
        self.partial_metrics = ()


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def assign_truncation(correctness_ratio: float, tiers: DifficultyTiers) -> int:
    """Truncation budget for a prompt with the given group correctness ratio."""
    if not 0.0 <= correctness_ratio <= 1.0:
        raise ValueError("correctness_ratio must lie in [0, 1]")
    i = 0
    while i < len(tiers.thresholds) and correctness_ratio >= tiers.thresholds[i]:
        i += 1
    return tiers.lengths[i]


def collect_batch(params: PolicyParams, pool, config: TrainerConfig, rng):
    """Draw prompt groups until the batch fills or the resample budget runs out.

    With tiers set, every group is sampled at the longest tier budget, its
    correctness ratio picks the tier, and rewards require both correctness
    and fitting inside the tier budget. Rewards otherwise come from the
    configured penalty. With dynamic sampling, all-zero and all-positive
    groups are discarded and their prompts redrawn.
    """
    if not pool:
        raise ValueError("prompt pool is empty")
    gen = _as_generator(rng)
    g = config.group_size
    b = config.batch_size
    tiers = config.tiers
    sample_len = max(tiers.lengths) if tiers is not None else config.penalty.target_length
    vocab = params.vocab

    accepted = []
    rounds = 0
    groups_drawn = zero_groups = one_groups = 0
    rollouts_drawn = 0
    length_sum = 0
    correct_sum = 0
    entropy_sum = 0.0

    while len(accepted) < b and rounds < config.max_resample_rounds:
        rounds += 1
        need = b - len(accepted) if config.dynamic_sampling else b
        draw = gen.integers(0, len(pool), size=need)
        prompts = [pool[int(i)] for i in draw]
        class_ids = np.repeat(
            np.array([params.class_of(p.difficulty) for p in prompts], dtype=np.int64), g)
        keys = gen.integers(0, 2 ** 64, size=need * g, dtype=np.uint64)
        rollouts = sample_rollouts(params, class_ids, sample_len, keys)

        for gi, prompt in enumerate(prompts):
            rolls = rollouts[gi * g:(gi + 1) * g]
            if tiers is not None:
                correct = [verify(prompt, ro, vocab) for ro in rolls]
                budget = assign_truncation(float(np.mean(correct)), tiers)
                rewards = np.array([1.0 if ok and ro.length <= budget else 0.0
                                    for ok, ro in zip(correct, rolls)])
            else:
                records = [score(prompt, ro, config.penalty, vocab) for ro in rolls]
                correct = [rec.correctness == 1 for rec in records]
                rewards = np.array([rec.final_reward for rec in records])

            groups_drawn += 1
            rollouts_drawn += g
            length_sum += sum(ro.length for ro in rolls)
            correct_sum += sum(correct)
            entropy_sum += sum(float(ro.old_entropies.sum()) for ro in rolls)
            all_zero = bool((rewards == 0).all())
            all_pos = bool((rewards > 0).all())
            zero_groups += all_zero
            one_groups += all_pos
            if config.dynamic_sampling and (all_zero or all_pos):
                continue
            if len(accepted) < b:
                accepted.append(Group(prompt=prompt, rollouts=tuple(rolls), rewards=rewards))
        if not config.dynamic_sampling:
            break

    stats = BatchStats(
        mean_response_length=length_sum / rollouts_drawn,
        mean_accuracy=correct_sum / rollouts_drawn,
        mean_token_entropy=entropy_sum / max(length_sum, 1),
        zero_reward_group_ratio=zero_groups / groups_drawn,
        all_one_group_ratio=one_groups / groups_drawn,
        rounds_used=rounds,
        groups_drawn=groups_drawn,
        groups_accepted=len(accepted),
    )
    if config.dynamic_sampling and len(accepted) < b:
        raise PartialBatchError(
            f"dynamic sampling accepted {len(accepted)}/{b} groups "
            f"after {rounds} resample rounds",
            accepted, stats)
    return accepted, stats


def _batch_advantages(groups, mode: str) -> AdvantageSet:
    if mode == GRPO:
        values = np.concatenate([grpo_advantage(gr).values for gr in groups])
        return AdvantageSet(values=values, mode=GRPO)
    return batch_norm_advantage(groups)


def train_step(params: PolicyParams, pool, config: TrainerConfig, rng,
               step_index: int, ref_params: PolicyParams = None):
    """One collect / normalize / ascend cycle. Returns (new params, metrics)."""
    groups, stats = collect_batch(params, pool, config, rng)
    advantages = _batch_advantages(groups, config.advantage_mode)
    ref = ref_params if ref_params is not None else params
    grad = surrogate_gradient(params, groups, advantages,
                              config.eps_low, config.eps_high,
                              config.kl_coef, ref)
    new_params = apply_update(params, grad, config.lr)
    cs = clip_stats(groups, new_params, advantages, config.eps_low, config.eps_high)
    total = cs.total
    record = MetricsRecord(
        step=step_index,
        mean_response_length=stats.mean_response_length,
        mean_accuracy=stats.mean_accuracy,
        mean_token_entropy=stats.mean_token_entropy,
        zero_reward_group_ratio=stats.zero_reward_group_ratio,
        all_one_group_ratio=stats.all_one_group_ratio,
        clip_high_token_fraction=cs.clipped_high.count / total if total else 0.0,
        clip_low_token_fraction=cs.clipped_low.count / total if total else 0.0,
        resample_rounds_used=stats.rounds_used,
    )
    return new_params, record


def apply_variant(config: TrainerConfig, variant: str) -> TrainerConfig:
    """Resolve a named recipe onto a config.

    grpo: per-group advantages, symmetric clip at eps_low, no filtering.
    dler: batch-normalized advantages, decoupled clip as configured,
    dynamic sampling, one fixed truncation budget.
    da_dler: dler plus per-prompt tiered budgets (config must set tiers).
    custom: config taken as-is.
    """
    if variant == "custom":
        return config
    if variant == "grpo":
        return replace(config, advantage_mode=GRPO, eps_high=config.eps_low,
                       dynamic_sampling=False, tiers=None)
    if variant == "dler":
        return replace(config, advantage_mode=BATCH_NORM,
                       dynamic_sampling=True, tiers=None)
    if variant == "da_dler":
        if config.tiers is None:
            raise ValueError("da_dler variant requires tiers")
        return replace(config, advantage_mode=BATCH_NORM, dynamic_sampling=True)
    raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


@dataclass(frozen=True, eq=False)
class TrainingResult:
    metrics: tuple
    final_params: PolicyParams
    base_params: PolicyParams
    pool: tuple
    config: TrainerConfig


def run_training(config: TrainerConfig, variant: str = "custom",
                 task_config: TaskSuiteConfig = None, vocab: Vocab = None,
                 on_metrics=None, on_checkpoint=None,
                 checkpoint_every: int = 0) -> TrainingResult:
    """Run max_steps training steps from a fresh base policy.

    The whole run is a deterministic function of (config, variant, task
    config): the prompt pool, every step's draws, and the update sequence
    all derive from config.seed. A partial batch aborts the run; metrics
    already emitted stay emitted and ride on the raised error.
    """
    cfg = apply_variant(config, variant)
    tc = task_config if task_config is not None else TaskSuiteConfig()
    voc = vocab if vocab is not None else default_vocab()
    pool = make_prompt_pool(tc, np.random.default_rng((cfg.seed, 0)), voc)
    base = make_base_params(voc, tc)

    params = base
    metrics = []
    last_checkpoint_step = None
    for step in range(cfg.max_steps):
        step_rng = np.random.default_rng((cfg.seed, 1, step))
        try:
            params, record = train_step(params, pool, cfg, step_rng, step,
                                         ref_params=base)
        except PartialBatchError as err:
            err.step = step
            err.partial_metrics = tuple(metrics)
            raise
        metrics.append(record)
        if on_metrics is not None:
            on_metrics(record)
        if on_checkpoint is not None and checkpoint_every > 0 \
                and (step + 1) % checkpoint_every == 0:
            on_checkpoint(step + 1, params)
            last_checkpoint_step = step + 1
    if on_checkpoint is not None and last_checkpoint_step != cfg.max_steps:
        on_checkpoint(cfg.max_steps, params)
    return TrainingResult(metrics=tuple(metrics), final_params=params,
                          base_params=base, pool=tuple(pool), config=cfg)
