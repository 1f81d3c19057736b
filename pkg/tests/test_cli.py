import json

import numpy as np
import pytest

from dler_lab.checkpoint import read_checkpoint
from dler_lab.cli import main
from dler_lab.merge import read_snapshot

TRAIN_DOC = {
    "run_id": "t",
    "output_dir": "runs",
    "variants": ["dler"],
    "checkpoint_every": 2,
    "trainer": {"batch_size": 8, "group_size": 4, "max_steps": 3, "seed": 11,
                "max_resample_rounds": 10},
}


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def write_config(workdir, doc):
    path = workdir / "exp.json"
    path.write_text(json.dumps(doc))
    return str(path)


def test_train_writes_stable_layout(workdir):
    cfg = write_config(workdir, TRAIN_DOC)
    assert main(["train", cfg]) == 0
    run = workdir / "runs" / "t"
    assert (run / "metrics.jsonl").exists()
    assert (run / "summary.json").exists()
    assert (run / "ckpt_2.dlrp").exists()
    assert (run / "ckpt_3.dlrp").exists()
    assert (run / "reports" / "entropy_histogram.json").exists()
    assert (run / "reports" / "trace_stats.json").exists()
    assert (run / "reports" / "plot_data.csv").exists()

    lines = (run / "metrics.jsonl").read_text().splitlines()
    assert len(lines) == 3
    for i, line in enumerate(lines):
        row = json.loads(line)
        assert row["run_id"] == "t"
        assert row["step"] == i
        assert set(row) >= {"mean_response_length", "mean_accuracy",
                            "mean_token_entropy", "zero_reward_group_ratio",
                            "all_one_group_ratio"}

    summary = json.loads((run / "summary.json").read_text())
    assert summary["steps_completed"] == 3
    assert summary["variant"] == "dler"

    vec, states, vsize, _ = read_checkpoint(run / "ckpt_3.dlrp")
    assert vsize == 16
    assert vec.size == states * vsize


def test_train_is_byte_deterministic(workdir):
    cfg = write_config(workdir, TRAIN_DOC)
    assert main(["train", cfg]) == 0
    run = workdir / "runs" / "t"
    first = {p.name: p.read_bytes() for p in run.rglob("*") if p.is_file()}
    assert main(["train", cfg, "--force"]) == 0
    second = {p.name: p.read_bytes() for p in run.rglob("*") if p.is_file()}
    assert first == second


def test_train_rejects_existing_run_dir(workdir, capsys):
    cfg = write_config(workdir, TRAIN_DOC)
    assert main(["train", cfg]) == 0
    assert main(["train", cfg]) == 2
    assert "already exists" in capsys.readouterr().err


def test_train_config_error_exit(workdir, capsys):
    cfg = write_config(workdir, TRAIN_DOC)
    assert main(["train", cfg, "trainer.eps_high=0.1"]) == 2
    assert "eps_high" in capsys.readouterr().err


def test_train_multi_variant_layout(workdir):
    doc = dict(TRAIN_DOC, variants=["grpo", "dler"], analysis_reports=False)
    cfg = write_config(workdir, doc)
    assert main(["train", cfg]) == 0
    run = workdir / "runs" / "t"
    assert (run / "grpo" / "metrics.jsonl").exists()
    assert (run / "dler" / "metrics.jsonl").exists()
    aggregate = json.loads((run / "summary.json").read_text())
    assert set(aggregate["variants"]) == {"grpo", "dler"}


def test_train_partial_batch_aborts_with_artifacts(workdir, capsys):
    doc = dict(TRAIN_DOC)
    doc["trainer"] = dict(doc["trainer"], batch_size=64, group_size=8,
                          max_resample_rounds=1, max_steps=5)
    cfg = write_config(workdir, doc)
    assert main(["train", cfg]) == 3
    run = workdir / "runs" / "t"
    summary = json.loads((run / "summary.json").read_text())
    assert summary["aborted"] is True
    assert (run / "metrics.jsonl").read_text().splitlines()


def test_report_round_trip(workdir):
    cfg = write_config(workdir, TRAIN_DOC)
    assert main(["train", cfg]) == 0
    out = workdir / "plot.csv"
    assert main(["report", "--metrics", str(workdir / "runs/t/metrics.jsonl"),
                 "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == ("step,mean_response_length,mean_accuracy,"
                        "mean_token_entropy,zero_reward_group_ratio,"
                        "all_one_group_ratio")
    assert len(lines) == 4


def test_report_malformed_line_diagnostic(workdir, capsys):
    bad = workdir / "m.jsonl"
    bad.write_text('{"step": 0, "mean_response_length": 1}\nnot json\n')
    assert main(["report", "--metrics", str(bad), "--out",
                 str(workdir / "x.csv")]) == 3
    err = capsys.readouterr().err
    assert "m.jsonl:1" in err or "m.jsonl:2" in err


def test_merge_cli_roundtrip(workdir):
    cfg = write_config(workdir, TRAIN_DOC)
    assert main(["train", cfg]) == 0
    base = str(workdir / "runs/t/ckpt_2.dlrp")
    tuned = str(workdir / "runs/t/ckpt_3.dlrp")
    out = str(workdir / "merged.dlrp")
    assert main(["merge", "--base", base, "--tuned", tuned, "--out", out]) == 0
    merged = read_snapshot(out)
    b = read_snapshot(base)
    t = read_snapshot(tuned)
    changed = merged.vector != b.vector
    assert 0 < changed.sum() <= np.ceil(0.25 * b.vector.size)
    assert main(["merge", "--base", base, "--tuned", base, "--out", out]) == 0
    assert np.array_equal(read_snapshot(out).vector, b.vector)
    assert main(["merge", "--base", base, "--tuned", tuned, "--out", out,
                 "--strategy", "linear", "--alpha", "1.0"]) == 0
    assert np.array_equal(read_snapshot(out).vector, t.vector)


def test_merge_cli_errors(workdir, capsys):
    missing = str(workdir / "none.dlrp")
    assert main(["merge", "--base", missing, "--tuned", missing,
                 "--out", str(workdir / "o.dlrp")]) == 3
    cfg = write_config(workdir, TRAIN_DOC)
    assert main(["train", cfg]) == 0
    ck = str(workdir / "runs/t/ckpt_2.dlrp")
    assert main(["merge", "--base", ck, "--tuned", ck,
                 "--out", str(workdir / "o.dlrp"),
                 "--top-fraction", "0"]) == 2


def test_analyze_trace_cli(workdir):
    corpus = workdir / "traces.jsonl"
    corpus.write_text(
        '{"id": "a", "text": "Wait\\n\\nBut then\\n\\nDone", "correct": true}\n')
    out = workdir / "tr"
    assert main(["analyze-trace", "--input", str(corpus), "--out", str(out)]) == 0
    stats = json.loads((out / "trace_stats.json").read_text())
    assert stats["overall"]["step_count"] == 3
    assert stats["overall"]["keyword_count"] == 2
    assert (out / "trace_stats.csv").read_text().splitlines()[0] == \
        "slice,response_count,step_count,mean_tokens_per_step,keyword_count"


def test_analyze_trace_diagnoses_bad_line(workdir, capsys):
    corpus = workdir / "traces.jsonl"
    corpus.write_text('{"id": "a", "text": "x", "correct": true}\n{"id": "b"}\n')
    assert main(["analyze-trace", "--input", str(corpus),
                 "--out", str(workdir / "tr")]) == 3
    assert "traces.jsonl:2" in capsys.readouterr().err


def test_bias_oracle_cli(workdir):
    out = workdir / "bias"
    assert main(["bias-oracle", "--samples", "20000",
                 "--out", str(out)]) == 0
    report = json.loads((out / "bias_report.json").read_text())
    assert report["passed"] is True
    assert len(report["moment_checks"]) == 9
    assert set(report["bias_curves"]) == {"0.0", "0.5", "1.0"}
    assert (out / "bias_report.csv").exists()


def test_bias_oracle_rejects_tiny_group(workdir, capsys):
    assert main(["bias-oracle", "-N", "1", "--samples", "100",
                 "--out", str(workdir / "b")]) == 2
