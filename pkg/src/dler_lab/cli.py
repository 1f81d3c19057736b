"""Command-line experiment runner.

Subcommands: train (run recipe variants from a JSON config), bias-oracle
(Monte Carlo vs analytic advantage moments), merge (combine checkpoints),
analyze-trace (step/keyword statistics over a JSONL corpus), report
(metrics JSONL to plot-ready CSV).

Exit codes: 0 success, 2 config error, 3 runtime failure, 4 failed
self-check. Whole-file artifacts are written atomically; metrics stream
append-only so partial runs keep what they produced.
"""

import argparse
import csv
import dataclasses
import io
import json
import math
import os
import sys

import numpy as np

from dler_lab import analysis, checkpoint
from dler_lab import merge as merge_mod
from dler_lab.backends._rng import derive_key
from dler_lab.bias import BiasExperiment, bias_curve, mc_conditional_moments
from dler_lab.config import ConfigError, load_experiment_config
from dler_lab.policy import sample_rollouts
from dler_lab.tasks import verify
from dler_lab.trainer import PartialBatchError, run_training
from dler_lab.vocab import default_vocab

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_CHECK = 4

METRIC_COLUMNS = ("step", "mean_response_length", "mean_accuracy",
                  "mean_token_entropy", "zero_reward_group_ratio",
                  "all_one_group_ratio")


class InputError(RuntimeError):
    """Missing or malformed input file."""


def _atomic_write_text(path, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_json(path, obj) -> None:
    _atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(header)
    writer.writerows(rows)
    _atomic_write_text(path, buf.getvalue())


def _finite_or_none(x):
    return float(x) if x is not None and math.isfinite(x) else None


# ---------------------------------------------------------------- train

def _sample_eval_batch(params, pool, group_size, max_len, seed):
    class_ids = np.repeat(
        np.array([params.class_of(p.difficulty) for p in pool], dtype=np.int64),
        group_size)
    keys = np.random.default_rng((seed, 2)).integers(
        0, 2 ** 64, size=len(pool) * group_size, dtype=np.uint64)
    rollouts = sample_rollouts(params, class_ids, max_len, keys)
    prompts = [p for p in pool for _ in range(group_size)]
    return prompts, rollouts


def _write_reports(report_dir, result, cfg):
    os.makedirs(report_dir, exist_ok=True)
    trainer_cfg = result.config
    tiers = trainer_cfg.tiers
    max_len = max(tiers.lengths) if tiers is not None else trainer_cfg.penalty.target_length
    prompts, rollouts = _sample_eval_batch(result.final_params, list(result.pool),
                                           trainer_cfg.group_size, max_len,
                                           trainer_cfg.seed)
    vocab = result.final_params.vocab

    entropies = np.concatenate([ro.old_entropies for ro in rollouts])
    hist = analysis.entropy_histogram(entropies, bins=24)
    _write_json(os.path.join(report_dir, "entropy_histogram.json"), {
        "counts": [int(c) for c in hist.counts],
        "bin_edges": [float(e) for e in hist.bin_edges],
        "mean": hist.mean, "median": hist.median, "skewness": hist.skewness,
    })

    labeled = [(analysis.rollout_to_text(ro, vocab), verify(p, ro, vocab))
               for p, ro in zip(prompts, rollouts)]
    stats = analysis.trace_stats(labeled)
    _write_json(os.path.join(report_dir, "trace_stats.json"), {
        name: dataclasses.asdict(getattr(stats, name))
        for name in ("overall", "correct", "incorrect")
    })

    _write_csv(os.path.join(report_dir, "plot_data.csv"), METRIC_COLUMNS,
               [[getattr(rec, col) for col in METRIC_COLUMNS]
                for rec in result.metrics])


def _summarize(run_id, variant, metrics, aborted=None):
    summary = {
        "run_id": run_id,
        "variant": variant,
        "steps_completed": len(metrics),
        "step0_mean_response_length": None,
        "step0_accuracy": None,
        "final_mean_response_length": None,
        "final_accuracy": None,
        "final_mean_token_entropy": None,
        "length_reduction_percent": 0.0,
    }
    if metrics:
        first, last = metrics[0], metrics[-1]
        summary.update({
            "step0_mean_response_length": first.mean_response_length,
            "step0_accuracy": first.mean_accuracy,
            "final_mean_response_length": last.mean_response_length,
            "final_accuracy": last.mean_accuracy,
            "final_mean_token_entropy": last.mean_token_entropy,
            "length_reduction_percent":
                100.0 * (1.0 - last.mean_response_length / first.mean_response_length),
        })
    if aborted is not None:
        summary["aborted"] = True
        summary["aborted_step"] = aborted.step
        summary["error"] = str(aborted)
    return summary


def cmd_train(args) -> int:
    cfg = load_experiment_config(args.config, args.overrides)
    run_dir = os.path.join(cfg.output_dir, cfg.run_id)
    if os.path.exists(run_dir) and not args.force:
        raise ConfigError(
            f"run directory {run_dir} already exists (run_id must be unique "
            f"within the output directory); pass --force to replace it")
    single = len(cfg.variants) == 1
    aggregate = {"run_id": cfg.run_id, "variants": {}}

    for variant in cfg.variants:
        variant_dir = run_dir if single else os.path.join(run_dir, variant)
        os.makedirs(variant_dir, exist_ok=True)

        def on_checkpoint(step, params, _dir=variant_dir):
            checkpoint.save_params(os.path.join(_dir, f"ckpt_{step}.dlrp"), params)

        aborted = None
        result = None
        with open(os.path.join(variant_dir, "metrics.jsonl"), "w") as metrics_file:
            def on_metrics(record, _fh=metrics_file):
                row = {"run_id": cfg.run_id, **dataclasses.asdict(record)}
                _fh.write(json.dumps(row, sort_keys=True) + "\n")
                _fh.flush()

            try:
                result = run_training(cfg.trainer, variant, cfg.tasks,
                                      on_metrics=on_metrics,
                                      on_checkpoint=on_checkpoint,
                                      checkpoint_every=cfg.checkpoint_every)
            except PartialBatchError as exc:
                aborted = exc

        if aborted is not None:
            summary = _summarize(cfg.run_id, variant, aborted.partial_metrics, aborted)
            _write_json(os.path.join(variant_dir, "summary.json"), summary)
            print(f"error: {variant}: {aborted} (step {aborted.step}); "
                  f"partial artifacts kept in {variant_dir}", file=sys.stderr)
            return EXIT_RUNTIME

        summary = _summarize(cfg.run_id, variant, result.metrics)
        _write_json(os.path.join(variant_dir, "summary.json"), summary)
        if cfg.analysis_reports:
            _write_reports(os.path.join(variant_dir, "reports"), result, cfg)
        aggregate["variants"][variant] = {
            "final_accuracy": summary["final_accuracy"],
            "final_mean_response_length": summary["final_mean_response_length"],
            "length_reduction_percent": summary["length_reduction_percent"],
        }

    if not single:
        _write_json(os.path.join(run_dir, "summary.json"), aggregate)
    return EXIT_OK


# ---------------------------------------------------------------- bias-oracle

def _parse_float_list(text, flag):
    try:
        values = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"{flag} must be a comma-separated number list") from exc
    if not values:
        raise ConfigError(f"{flag} must be non-empty")
    return values


def cmd_bias_oracle(args) -> int:
    sigmas = _parse_float_list(args.sigmas, "--sigmas")
    epsilons = _parse_float_list(args.epsilons, "--epsilons")
    seed = args.seed if args.seed is not None else int(os.environ.get("DLER_SEED", "0"))
    try:
        experiments = [
            BiasExperiment(group_size=args.group_size, sigma=sigma,
                           epsilon_values=epsilons, samples=args.samples,
                           seed=int(derive_key(seed, si)))
            for si, sigma in enumerate(sigmas)
        ]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    os.makedirs(args.out, exist_ok=True)
    checks = []
    rows = []
    all_pass = True
    for exp in experiments:
        result = mc_conditional_moments(exp)
        for pt in result.points:
            precise = math.isfinite(pt.numerator_se) and math.isfinite(pt.d2_se)
            ok_num = ok_d2 = None
            if precise:
                ok_num = abs(pt.numerator_mean - pt.analytic_numerator) <= 3 * pt.numerator_se
                ok_d2 = abs(pt.d2_mean - pt.analytic_d2) <= 3 * pt.d2_se
                if not (ok_num and ok_d2):
                    all_pass = False
            checks.append({
                "sigma": exp.sigma, "epsilon": pt.epsilon,
                "numerator_ok": ok_num, "d2_ok": ok_d2,
                "insufficient_precision": not precise,
            })
            rows.append([exp.sigma, pt.epsilon,
                         pt.numerator_mean, _finite_or_none(pt.numerator_se),
                         pt.analytic_numerator,
                         pt.d2_mean, _finite_or_none(pt.d2_se), pt.analytic_d2,
                         pt.advantage_mean, _finite_or_none(pt.advantage_se),
                         pt.bias])

    curves = {}
    if len(sigmas) >= 2:
        for ei, eps in enumerate(epsilons):
            points = bias_curve(args.group_size, sigmas, eps, args.samples,
                                seed=int(derive_key(seed, 1000 + ei)))
            entries = []
            for i, pt in enumerate(points):
                entry = {"sigma": pt.sigma, "bias_abs": pt.bias_abs,
                         "se": _finite_or_none(pt.se)}
                if i > 0:
                    prev = points[i - 1]
                    if math.isfinite(prev.se) and math.isfinite(pt.se):
                        margin = 3.0 * math.hypot(prev.se, pt.se)
                        entry["significant_decrease"] = \
                            (prev.bias_abs - pt.bias_abs) > margin
                    else:
                        entry["ordering_skipped"] = True
                entries.append(entry)
            curves[repr(eps)] = entries

    report = {
        "group_size": args.group_size, "samples": args.samples, "seed": seed,
        "sigmas": list(sigmas), "epsilons": list(epsilons),
        "moment_checks": checks, "bias_curves": curves, "passed": all_pass,
    }
    _write_json(os.path.join(args.out, "bias_report.json"), report)
    _write_csv(os.path.join(args.out, "bias_report.csv"),
               ["sigma", "epsilon", "numerator_mean", "numerator_se",
                "analytic_numerator", "d2_mean", "d2_se", "analytic_d2",
                "advantage_mean", "advantage_se", "bias"], rows)
    if not all_pass:
        print("error: Monte Carlo moments disagree with analytic values "
              "beyond 3 standard errors", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


# ---------------------------------------------------------------- merge

def cmd_merge(args) -> int:
    try:
        base = merge_mod.read_snapshot(args.base)
        tuned = merge_mod.read_snapshot(args.tuned)
    except FileNotFoundError as exc:
        raise InputError(f"checkpoint not found: {exc.filename}") from exc
    try:
        if args.strategy == "select":
            merged = merge_mod.select_merge(base, tuned,
                                            top_fraction=args.top_fraction,
                                            scale=args.scale)
        else:
            merged = merge_mod.linear_merge(base, tuned, alpha=args.alpha)
    except merge_mod.IncompatibleSnapshotError as exc:
        raise InputError(str(exc)) from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    merge_mod.write_snapshot(args.out, merged)
    return EXIT_OK


# ---------------------------------------------------------------- analyze-trace

def _read_jsonl(path, required_keys):
    rows = []
    try:
        fh = open(path)
    except FileNotFoundError as exc:
        raise InputError(f"input file not found: {path}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}:{lineno}: {exc.msg}") from exc
            missing = [k for k in required_keys if k not in row]
            if missing:
                raise InputError(f"{path}:{lineno}: missing key {missing[0]!r}")
            rows.append(row)
    return rows


def cmd_analyze_trace(args) -> int:
    records = _read_jsonl(args.input, ("id", "text", "correct"))
    keywords = tuple(k for k in args.keywords.split(",") if k) \
        if args.keywords else analysis.DEFAULT_KEYWORDS
    stats = analysis.trace_stats(records, keywords)
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, "trace_stats.json"), {
        name: dataclasses.asdict(getattr(stats, name))
        for name in ("overall", "correct", "incorrect")
    })
    _write_csv(os.path.join(args.out, "trace_stats.csv"),
               ["slice", "response_count", "step_count",
                "mean_tokens_per_step", "keyword_count"],
               [[name, sl.response_count, sl.step_count,
                 sl.mean_tokens_per_step, sl.keyword_count]
                for name in ("overall", "correct", "incorrect")
                for sl in [getattr(stats, name)]])
    return EXIT_OK


# ---------------------------------------------------------------- report

def cmd_report(args) -> int:
    rows = _read_jsonl(args.metrics, METRIC_COLUMNS)
    _write_csv(args.out, METRIC_COLUMNS,
               [[row[col] for col in METRIC_COLUMNS] for row in rows])
    return EXIT_OK


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dler-lab",
        description="Desk-scale length-efficient RL experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run training variants from a JSON config")
    p.add_argument("config", help="path to the experiment config JSON")
    p.add_argument("overrides", nargs="*", metavar="key.path=value",
                   help="dotted-path config overrides, e.g. trainer.eps_high=0.28")
    p.add_argument("--force", action="store_true",
                   help="replace an existing run directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("bias-oracle",
                       help="Monte Carlo check of advantage bias moments")
    p.add_argument("-N", "--group-size", type=int, default=16)
    p.add_argument("--sigmas", default="0.5,1,2")
    p.add_argument("--epsilons", default="0,0.5,1")
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=None,
                   help="defaults to DLER_SEED or 0")
    p.add_argument("--out", default="bias_report")
    p.set_defaults(func=cmd_bias_oracle)

    p = sub.add_parser("merge", help="combine two checkpoints")
    p.add_argument("--base", required=True)
    p.add_argument("--tuned", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--strategy", choices=("select", "linear"), default="select")
    p.add_argument("--top-fraction", type=float, default=0.25)
    p.add_argument("--scale", type=float, default=0.7)
    p.add_argument("--alpha", type=float, default=0.5)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("analyze-trace",
                       help="step/keyword statistics over a JSONL corpus")
    p.add_argument("--input", required=True)
    p.add_argument("--out", default="trace_report")
    p.add_argument("--keywords", default=None,
                   help="comma-separated keyword list (default: built-in set)")
    p.set_defaults(func=cmd_analyze_trace)

    p = sub.add_parser("report", help="convert metrics JSONL to plot CSV")
    p.add_argument("--metrics", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InputError, PartialBatchError, checkpoint.CheckpointFormatError,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
