"""CLI subcommands: pipeline wiring, reproducibility, config handling."""

import json
import subprocess
import sys
from pathlib import Path

import pytest
from click.testing import CliRunner

from kernelforge.cli import main
from kernelforge import records


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """ingest -> tokenize -> tiny train, shared across CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    runner = CliRunner()

    def run(args):
        result = runner.invoke(main, args, catch_exceptions=False)
        assert result.exit_code == 0, result.output
        return result

    run(["ingest", "--generate", "30", "--max-chars", "120", "--seed", "3",
         "--out", str(root / "corpus.jsonl")])
    run(["tokenize", "--corpus", str(root / "corpus.jsonl"),
         "--max-seq-len", "64", "--out-vocab", str(root / "vocab.tsv"),
         "--out-corpus", str(root / "corpus_tok.jsonl")])
    run(["train", "--corpus", str(root / "corpus_tok.jsonl"),
         "--vocab", str(root / "vocab.tsv"), "--steps", "30",
         "--batch-size", "4", "--hidden-size", "32", "--layers", "1",
         "--heads", "2", "--max-seq-len", "64", "--seed", "1",
         "--out", str(root / "model.ckpt"), "--log", str(root / "train.tsv")])
    return root, run


def test_ingest_and_tokenize_outputs(pipeline):
    root, _ = pipeline
    entries = records.read_corpus(root / "corpus_tok.jsonl")
    assert entries and all(e.token_ids is not None for e in entries)
    assert (root / "corpus.jsonl.run.json").exists()
    sidecar = json.loads((root / "corpus.jsonl.run.json").read_text())
    assert "config_hash" in sidecar


def test_train_writes_log_and_checkpoint(pipeline):
    root, _ = pipeline
    assert (root / "model.ckpt").exists()
    lines = (root / "train.tsv").read_text().strip().splitlines()
    assert lines
    step, loss, lr = lines[0].split("\t")
    float(loss), float(lr)


def test_sample_reproducible_byte_identical(pipeline):
    root, run = pipeline
    args = ["sample", "--model", str(root / "model.ckpt"),
            "--vocab", str(root / "vocab.tsv"), "--n", "8", "--seed", "7",
            "--temperature", "0.9"]
    run(args + ["--out", str(root / "s1.jsonl")])
    run(args + ["--out", str(root / "s2.jsonl")])
    assert (root / "s1.jsonl").read_bytes() == (root / "s2.jsonl").read_bytes()
    assert (root / "s1.jsonl.summary.json").read_bytes() == \
        (root / "s2.jsonl.summary.json").read_bytes()


def test_target_writes_summary_with_proximity(pipeline):
    root, run = pipeline
    seed_kernel = "kernel void k(global int* a){ a[0] = 2; a[1] = 3; }"
    run(["target", "--policy", "literal-mock",
         "--vocab", str(root / "vocab.tsv"), "--space", "SYNTAX8",
         "--vector", "0,3,1,2,0,0,0,0", "--workload-size", "16",
         "--beam-width", "4", "--max-depth", "6", "--replace-prob", "0",
         "--seed", "2", "--seed-text", seed_kernel,
         "--out", str(root / "target")])
    summary = json.loads((root / "target.summary.json").read_text())
    assert {"proximity", "best_distance", "generations_used", "inferences",
            "exact_match", "config_hash"} <= set(summary)
    assert summary["inferences"] == summary["generations_used"] * 16
    assert summary["exact_match"] is True
    assert summary["proximity"] == 1.0
    candidates = list(records.read_jsonl(root / "target.candidates.jsonl"))
    assert candidates
    for c in candidates:
        assert c["compiles"] and c["distance"] is not None


def test_eval_heuristic_report(pipeline):
    root, run = pipeline
    run(["eval-heuristic", "--corpus", str(root / "corpus.jsonl"),
         "--seed", "5", "--out", str(root / "report.json")])
    report = json.loads((root / "report.json").read_text())
    assert report["static_gpu_speedup"] == 1.0
    assert report["speedup"] <= report["oracle_speedup"] + 1e-9
    assert 0.0 <= report["precision"] <= 1.0


def test_pca_export_two_columns(pipeline):
    root, run = pipeline
    run(["pca-export", "--corpus", str(root / "corpus.jsonl"),
         "--space", "IRPHASE", "--out", str(root / "pca.tsv")])
    rows = (root / "pca.tsv").read_text().strip().splitlines()
    entries = records.read_corpus(root / "corpus.jsonl")
    assert len(rows) == len(entries)
    assert all(len(r.split("\t")) == 2 for r in rows)


def test_export_turing_bundle_schema(pipeline):
    root, run = pipeline
    run(["export-turing",
         "--dataset", f"corpus={root / 'corpus.jsonl'}",
         "--dataset", f"samples={root / 's1.jsonl'}",
         "--per-dataset", "5", "--seed", "1",
         "--out", str(root / "bundle.json")])
    bundle = json.loads((root / "bundle.json").read_text())
    assert set(bundle) == {"datasets", "generated_at", "config_hash"}
    names = [d["name"] for d in bundle["datasets"]]
    assert names == ["corpus", "samples"]
    for ds in bundle["datasets"]:
        assert len(ds["samples"]) <= 5
        for s in ds["samples"]:
            assert set(s) == {"id", "code"} and s["code"]


def test_config_file_overlay_and_unknown_key(pipeline, tmp_path):
    root, _ = pipeline
    runner = CliRunner()
    cfg = tmp_path / "run.cfg"
    cfg.write_text("space = IRPHASE\n")
    out = tmp_path / "pca_from_cfg.tsv"
    result = runner.invoke(main, [
        "pca-export", "--config", str(cfg),
        "--corpus", str(root / "corpus.jsonl"), "--out", str(out),
    ], catch_exceptions=False)
    assert result.exit_code == 0, result.output
    sidecar = json.loads((out.parent / f"{out.name}.run.json").read_text())
    assert sidecar["config"]["space"] == "IRPHASE"

    bad = tmp_path / "bad.cfg"
    bad.write_text("not_a_real_key = 3\n")
    result = runner.invoke(main, [
        "pca-export", "--config", str(bad),
        "--corpus", str(root / "corpus.jsonl"), "--out", str(out),
    ])
    assert result.exit_code != 0
    assert "unknown config key" in result.output


def test_cli_flags_override_config_file(pipeline, tmp_path):
    root, _ = pipeline
    runner = CliRunner()
    cfg = tmp_path / "run.cfg"
    cfg.write_text("space = IRPHASE\n")
    out = tmp_path / "pca_flag_wins.tsv"
    result = runner.invoke(main, [
        "pca-export", "--config", str(cfg), "--space", "SYNTAX8",
        "--corpus", str(root / "corpus.jsonl"), "--out", str(out),
    ], catch_exceptions=False)
    assert result.exit_code == 0
    sidecar = json.loads((out.parent / f"{out.name}.run.json").read_text())
    assert sidecar["config"]["space"] == "SYNTAX8"


def test_machine_readable_error_record():
    proc = subprocess.run(
        [sys.executable, "-c",
         "import sys; sys.argv=['kernelforge','ingest','--out','/tmp/x.jsonl'];"
         "from kernelforge.cli import run; run()"],
        capture_output=True, text=True,
    )
    assert proc.returncode != 0
    err = json.loads(proc.stderr.strip().splitlines()[-1])
    assert "error" in err and "kind" in err
