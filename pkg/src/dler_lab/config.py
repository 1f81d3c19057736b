"""Experiment configuration: JSON documents with nested module sections.

Unknown keys are rejected, validation failures carry the offending section
and message, and command-line overrides address keys by dotted path
(trainer.eps_high=0.28) with JSON-parsed values. DLER_SEED supplies the
trainer seed when the config omits one.
"""

import json
import os
from dataclasses import dataclass, field

from dler_lab.rewards import PenaltySpec
from dler_lab.tasks import TaskSuiteConfig
from dler_lab.trainer import VARIANTS, DifficultyTiers, TrainerConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    run_id: str = "run"
    output_dir: str = "runs"
    variants: tuple = ("dler",)
    checkpoint_every: int = 0
    analysis_reports: bool = True
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    tasks: TaskSuiteConfig = field(default_factory=TaskSuiteConfig)

    def __post_init__(self):
        if not self.run_id:
            raise ConfigError("run_id must be non-empty")
        if not self.variants:
            raise ConfigError("variants must name at least one recipe")
        for v in self.variants:
            if v not in VARIANTS:
                raise ConfigError(f"unknown variant {v!r}; expected one of {VARIANTS}")
        if len(set(self.variants)) != len(self.variants):
            raise ConfigError("variants must be distinct")
        if "da_dler" in self.variants and self.trainer.tiers is None:
            raise ConfigError("variant da_dler requires trainer.tiers")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be >= 0")


def _reject_unknown(section: dict, allowed, context: str):
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(
            f"unknown key {unknown[0]!r} in {context} "
            f"(allowed: {', '.join(sorted(allowed))})"
        )


def _build_tiers(section, context: str):
    if section is None:
        return None
    _reject_unknown(section, ("thresholds", "lengths"), context)
    try:
        return DifficultyTiers(thresholds=tuple(section.get("thresholds", ())),
                               lengths=tuple(section.get("lengths", ())))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{context}: {exc}") from exc


def _build_penalty(section, context: str):
    if section is None:
        return PenaltySpec()
    _reject_unknown(section, ("kind", "target_length"), context)
    try:
        return PenaltySpec(kind=section.get("kind", "truncation"),
                           target_length=section.get("target_length", 24))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{context}: {exc}") from exc


_TRAINER_KEYS = ("batch_size", "group_size", "eps_low", "eps_high", "lr",
                 "kl_coef", "max_steps", "advantage", "penalty",
                 "dynamic_sampling", "tiers", "max_resample_rounds", "seed")


def _build_trainer(section) -> TrainerConfig:
    _reject_unknown(section, _TRAINER_KEYS, "trainer")
    advantage = section.get("advantage", None) or {}
    _reject_unknown(advantage, ("mode",), "trainer.advantage")
    defaults = TrainerConfig.__dataclass_fields__

    seed = section.get("seed")
    if seed is None:
        env_seed = os.environ.get("DLER_SEED")
        if env_seed is not None:
            try:
                seed = int(env_seed)
            except ValueError as exc:
                raise ConfigError(f"DLER_SEED={env_seed!r} is not an integer") from exc
        else:
            seed = 0

    try:
        return TrainerConfig(
            batch_size=section.get("batch_size", defaults["batch_size"].default),
            group_size=section.get("group_size", defaults["group_size"].default),
            eps_low=section.get("eps_low", defaults["eps_low"].default),
            eps_high=section.get("eps_high", defaults["eps_high"].default),
            lr=section.get("lr", defaults["lr"].default),
            kl_coef=section.get("kl_coef", defaults["kl_coef"].default),
            max_steps=section.get("max_steps", defaults["max_steps"].default),
            advantage_mode=advantage.get("mode", defaults["advantage_mode"].default),
            penalty=_build_penalty(section.get("penalty"), "trainer.penalty"),
            dynamic_sampling=section.get("dynamic_sampling",
                                         defaults["dynamic_sampling"].default),
            tiers=_build_tiers(section.get("tiers"), "trainer.tiers"),
            max_resample_rounds=section.get("max_resample_rounds",
                                            defaults["max_resample_rounds"].default),
            seed=seed,
        )
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"trainer: {exc}") from exc


def _build_tasks(section) -> TaskSuiteConfig:
    _reject_unknown(section, ("difficulty_range", "prompts_per_level",
                              "init_verbosity_bias"), "tasks")
    try:
        return TaskSuiteConfig(
            difficulty_range=tuple(section.get("difficulty_range", (1, 4))),
            prompts_per_level=section.get("prompts_per_level", 8),
            init_verbosity_bias=section.get("init_verbosity_bias", 2.0),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"tasks: {exc}") from exc


def apply_overrides(document: dict, overrides) -> dict:
    """Set dotted-path keys, parsing values as JSON with a string fallback."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key.path=value")
        dotted, raw = item.split("=", 1)
        parts = [p for p in dotted.strip().split(".") if p]
        if not parts:
            raise ConfigError(f"override {item!r} has an empty key path")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = document
        for part in parts[:-1]:
            nxt = node.get(part)
            if not isinstance(nxt, dict):
                nxt = {}
                node[part] = nxt
            node = nxt
        node[parts[-1]] = value
    return document


_TOP_KEYS = ("run_id", "output_dir", "variants", "checkpoint_every",
             "analysis_reports", "trainer", "tasks")


def build_experiment_config(document: dict) -> ExperimentConfig:
    _reject_unknown(document, _TOP_KEYS, "config")
    return ExperimentConfig(
        run_id=document.get("run_id", "run"),
        output_dir=document.get("output_dir", "runs"),
        variants=tuple(document.get("variants", ("dler",))),
        checkpoint_every=document.get("checkpoint_every", 0),
        analysis_reports=bool(document.get("analysis_reports", True)),
        trainer=_build_trainer(document.get("trainer", {}) or {}),
        tasks=_build_tasks(document.get("tasks", {}) or {}),
    )


def load_experiment_config(path, overrides=()) -> ExperimentConfig:
    try:
        with open(path) as fh:
            document = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(document, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    apply_overrides(document, overrides)
    return build_experiment_config(document)
