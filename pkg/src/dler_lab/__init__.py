"""Desk-scale laboratory for length-efficient reasoning RL.

Small tabular autoregressive softmax policies are trained with
group-relative or batch-normalized advantages under a clipped surrogate
objective, hard truncation length penalties, dynamic sampling, and
difficulty-aware truncation tiers, plus the companion analyses:
Monte Carlo verification of the group-normalization bias, clipped-token
statistics, entropy histograms, reasoning-trace statistics, pass@k, and
update-selective weight merging.
"""

from dler_lab.vocab import Vocab, default_vocab
from dler_lab.tasks import Prompt, TaskSuiteConfig, make_prompt_pool, verify
from dler_lab.policy import (
    PolicyParams,
    Rollout,
    make_base_params,
    sample_rollout,
    log_prob,
    token_entropy,
    surrogate_objective,
    surrogate_gradient,
    apply_update,
)
from dler_lab.rewards import RewardRecord, PenaltySpec, score, register_penalty
from dler_lab.advantage import (
    Group,
    AdvantageSet,
    grpo_advantage,
    batch_norm_advantage,
    reward_variance_probe,
)
from dler_lab.trainer import (
    TrainerConfig,
    DifficultyTiers,
    MetricsRecord,
    PartialBatchError,
    collect_batch,
    assign_truncation,
    train_step,
    run_training,
)
from dler_lab.analysis import (
    ClipStats,
    TraceStats,
    clip_stats,
    entropy_histogram,
    trace_stats,
    pass_at_k,
)
from dler_lab.bias import (
    BiasExperiment,
    BiasResult,
    analytic_moments,
    mc_conditional_moments,
    bias_curve,
)
from dler_lab.merge import ParamSnapshot, select_merge, linear_merge

__version__ = "0.1.0"

__all__ = [
    "Vocab",
    "default_vocab",
    "Prompt",
    "TaskSuiteConfig",
    "make_prompt_pool",
    "verify",
    "PolicyParams",
    "Rollout",
    "make_base_params",
    "sample_rollout",
    "log_prob",
    "token_entropy",
    "surrogate_objective",
    "surrogate_gradient",
    "apply_update",
    "RewardRecord",
    "PenaltySpec",
    "score",
    "register_penalty",
    "Group",
    "AdvantageSet",
    "grpo_advantage",
    "batch_norm_advantage",
    "reward_variance_probe",
    "TrainerConfig",
    "DifficultyTiers",
    "MetricsRecord",
    "PartialBatchError",
    "collect_batch",
    "assign_truncation",
    "train_step",
    "run_training",
    "ClipStats",
    "TraceStats",
    "clip_stats",
    "entropy_histogram",
    "trace_stats",
    "pass_at_k",
    "BiasExperiment",
    "BiasResult",
    "analytic_moments",
    "mc_conditional_moments",
    "bias_curve",
    "ParamSnapshot",
    "select_merge",
    "linear_merge",
]
