"""Command-line orchestration: every pipeline stage as a seeded subcommand.

All datasets are line-delimited JSON records; checkpoints are the only
binary artifacts. Every command resolves its configuration (defaults,
optional key=value config file, explicit flags), writes it alongside the
outputs as `<out>.run.json`, and stamps summary records with the config
hash. Failures exit nonzero after printing a machine-readable error
record.
"""

from __future__ import annotations

import json
import sys
from datetime import datetime, timezone

import click
import numpy as np

from . import corpus as corpus_mod
from . import features as feat
from . import mapping, records
from . import tokenizer as tok
from .committee import al_loop, fit_initial, make_committee
from .kernelgen import generate_corpus
from .model import (
    ModelConfig,
    OptimizerConfig,
    init_state,
    load_checkpoint,
    save_checkpoint,
    seed_input_ids,
    train_model,
)
from .search import (
    BeamConfig,
    ModelPolicy,
    NoCompilingCandidate,
    kcl_evaluator,
    run_search,
)


def _apply_config_file(ctx: click.Context, kwargs: dict) -> dict:
    """Overlay key=value pairs from --config; unknown keys are rejected and
    explicit command-line flags win."""
    path = kwargs.pop("config", None)
    if not path:
        return kwargs
    known = {p.name for p in ctx.command.params if p.name != "config"}
    params = {p.name: p for p in ctx.command.params}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise click.UsageError(f"{path}:{lineno}: expected key=value")
            key = key.strip().replace("-", "_")
            if key not in known:
                raise click.UsageError(f"{path}:{lineno}: unknown config key: {key}")
            source = ctx.get_parameter_source(key)
            if source is not None and source.name != "DEFAULT":
                continue
            kwargs[key] = params[key].type.convert(value.strip(), params[key], ctx)
    return kwargs


_OUTPUT_KEYS = ("out", "out_vocab", "out_corpus", "log_path")


def _resolved(kwargs: dict) -> dict:
    """Resolved run configuration; output destinations are excluded so the
    config hash identifies the run's semantics, not where files land."""
    return {k: v for k, v in sorted(kwargs.items()) if k not in _OUTPUT_KEYS}


def _write_sidecar(out_path, kwargs: dict) -> None:
    records.write_run_config(
        out_path,
        {k: v for k, v in sorted(kwargs.items())},
        records.config_hash(_resolved(kwargs)),
    )


@click.group()
def main():
    """Benchmark synthesis pipeline for the KCL kernel language."""


@main.command()
@click.option("--config", type=click.Path(exists=True), default=None, help="key=value overrides")
@click.option("--input", "input_dir", type=click.Path(exists=True, file_okay=False), default=None,
              help="directory of kernel files (omit to use the built-in generator)")
@click.option("--generate", type=int, default=0, help="generate N kernels instead of reading files")
@click.option("--max-chars", type=int, default=300)
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(), required=True)
@click.pass_context
def ingest(ctx, **kwargs):
    """Ingest kernels into a deduplicated, feature-annotated corpus file."""
    kwargs = _apply_config_file(ctx, kwargs)
    rng = np.random.default_rng(kwargs["seed"])
    if kwargs["input_dir"]:
        entries, rejections = corpus_mod.ingest_dir(kwargs["input_dir"], rng)
    elif kwargs["generate"] > 0:
        sources = generate_corpus(kwargs["generate"], kwargs["seed"], kwargs["max_chars"])
        entries, rejections = corpus_mod.entries_from_sources(sources, rng), []
    else:
        raise click.UsageError("pass --input DIR or --generate N")
    out = kwargs["out"]
    records.write_corpus(out, entries)
    records.write_jsonl(f"{out}.rejects.jsonl", (
        {"path": r.path, "stage": r.stage, "reason": r.reason} for r in rejections
    ))
    _write_sidecar(out, kwargs)
    click.echo(f"ingested {len(entries)} kernels ({len(rejections)} rejected) -> {out}")


@main.command()
@click.option("--config", type=click.Path(exists=True), default=None)
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), required=True)
@click.option("--freq-threshold", type=int, default=10)
@click.option("--max-seq-len", type=int, default=512)
@click.option("--out-vocab", type=click.Path(), required=True)
@click.option("--out-corpus", type=click.Path(), required=True)
@click.pass_context
def tokenize(ctx, **kwargs):
    """Build the vocabulary and attach padded token ids to the corpus."""
    kwargs = _apply_config_file(ctx, kwargs)
    entries = records.read_corpus(kwargs["corpus_path"])
    vocab = tok.build_vocab([e.source for e in entries], kwargs["freq_threshold"])
    tokenized, rejections = corpus_mod.attach_tokens(entries, vocab, kwargs["max_seq_len"])
    tok.save_vocab(vocab, kwargs["out_vocab"])
    records.write_corpus(kwargs["out_corpus"], tokenized)
    records.write_jsonl(f"{kwargs['out_corpus']}.rejects.jsonl", (
        {"path": r.path, "stage": r.stage, "reason": r.reason} for r in rejections
    ))
    _write_sidecar(kwargs["out_corpus"], kwargs)
    click.echo(
        f"vocab size {vocab.size}; tokenized {len(tokenized)} "
        f"({len(rejections)} dropped) -> {kwargs['out_corpus']}"
    )


@main.command()
@click.option("--config", type=click.Path(exists=True), default=None)
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), required=True)
@click.option("--vocab", "vocab_path", type=click.Path(exists=True), required=True)
@click.option("--directed", is_flag=True, default=False)
@click.option("--steps", type=int, default=2000)
@click.option("--batch-size", type=int, default=16)
@click.option("--hidden-size", type=int, default=128)
@click.option("--layers", type=int, default=2)
@click.option("--heads", type=int, default=4)
@click.option("--max-seq-len", type=int, default=512)
@click.option("--feature-embed-size", type=int, default=64)
@click.option("--fc-width", type=int, default=256)
@click.option("--max-lr", type=float, default=3e-4)
@click.option("--warmup-steps", type=int, default=200)
@click.option("--temperature", type=float, default=0.8)
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(), required=True)
@click.option("--log", "log_path", type=click.Path(), default=None)
@click.pass_context
def train(ctx, **kwargs):
    """Train the infilling model (--directed adds the feature encoder)."""
    kwargs = _apply_config_file(ctx, kwargs)
    entries = records.read_corpus(kwargs["corpus_path"])
    entries = [e for e in entries if e.token_ids is not None]
    if not entries:
        raise click.UsageError("corpus has no tokenized entries; run tokenize first")
    vocab = tok.load_vocab(kwargs["vocab_path"])
    norms = feat.segmented_norms([e.features for e in entries])
    config = ModelConfig(
        vocab_size=vocab.size,
        max_seq_len=kwargs["max_seq_len"],
        hidden_size=kwargs["hidden_size"],
        layers=kwargs["layers"],
        heads=kwargs["heads"],
        directed=kwargs["directed"],
        feature_embed_size=kwargs["feature_embed_size"],
        fc_width=kwargs["fc_width"],
        temperature=kwargs["temperature"],
        feature_norms=tuple(norms) if kwargs["directed"] else None,
    )
    opt = OptimizerConfig(
        max_lr=kwargs["max_lr"],
        warmup_steps=kwargs["warmup_steps"],
        total_steps=kwargs["steps"],
    )
    state = init_state(config, opt, seed=kwargs["seed"])
    rng = np.random.default_rng(kwargs["seed"])
    log_fh = open(kwargs["log_path"], "w", encoding="utf-8") if kwargs["log_path"] else None
    try:
        losses = train_model(state, entries, kwargs["steps"], kwargs["batch_size"], rng, log=log_fh)
    finally:
        if log_fh:
            log_fh.close()
    save_checkpoint(state, kwargs["out"])
    _write_sidecar(kwargs["out"], kwargs)
    click.echo(f"trained {kwargs['steps']} steps; final loss {losses[-1]:.4f} -> {kwargs['out']}")


@main.command()
@click.option("--config", type=click.Path(exists=True), default=None)
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--vocab", "vocab_path", type=click.Path(exists=True), required=True)
@click.option("--n", type=int, default=100)
@click.option("--temperature", type=float, default=None)
@click.option("--seed", type=int, default=0)
@click.option("--feed", type=str, default="kernel void [HOLE]")
@click.option("--chunk", type=int, default=64)
@click.option("--out", type=click.Path(), required=True)
@click.pass_context
def sample(ctx, **kwargs):
    """Undirected generation from the fixed feed; reports the compile rate."""
    kwargs = _apply_config_file(ctx, kwargs)
    state = load_checkpoint(kwargs["model_path"])
    vocab = tok.load_vocab(kwargs["vocab_path"])
    if state.config.directed:
        raise click.UsageError("sample is the undirected protocol; use an undirected checkpoint")
    from .model.sampling import ModelSampler

    sampler = ModelSampler(state, kwargs["temperature"])
    seed_ids = seed_input_ids(vocab, kwargs["feed"])
    rows = []
    n_compiling = 0
    unique = set()
    for base in range(0, kwargs["n"], kwargs["chunk"]):
        count = min(kwargs["chunk"], kwargs["n"] - base)
        fills = sampler.fill_many([seed_ids] * count, None, seed=kwargs["seed"] * 100003 + base)
        for offset, (ids, terminated) in enumerate(fills):
            source = tok.decode(vocab, ids)
            from .kcl.checker import compiles as compiles_fn

            ok = terminated and compiles_fn(source)
            n_compiling += ok
            unique.add(source)
            rows.append({
                "index": base + offset,
                "source": source,
                "compiles": ok,
                "tokens": len(ids),
            })
    records.write_jsonl(kwargs["out"], rows)
    summary = {
        "n": kwargs["n"],
        "unique": len(unique),
        "compiling": n_compiling,
        "compile_rate": n_compiling / kwargs["n"],
        "config_hash": records.config_hash(_resolved(kwargs)),
    }
    records.atomic_write_text(
        f"{kwargs['out']}.summary.json", json.dumps(summary, sort_keys=True, indent=2) + "\n"
    )
    _write_sidecar(kwargs["out"], kwargs)
    click.echo(json.dumps(summary, sort_keys=True))


@main.command()
@click.option("--config", type=click.Path(exists=True), default=None)
@click.option("--model", "model_path", type=click.Path(exists=True), default=None)
@click.option("--vocab", "vocab_path", type=click.Path(exists=True), required=True)
@click.option("--policy", "policy_kind", type=click.Choice(["model", "literal-mock"]),
              default="model", help="literal-mock mutates integer literals; for diagnostics")
@click.option("--space", type=click.Choice(sorted(feat.SPACES)), default="SYNTAX8")
@click.option("--vector", type=str, required=True, help="comma-separated target features")
@click.option("--workload-size", type=int, default=2048)
@click.option("--beam-width", type=int, default=32)
@click.option("--replace-prob", type=float, default=0.15)
@click.option("--max-depth", type=int, default=50)
@click.option("--temperature", type=float, default=None)
@click.option("--seed-text", type=str, default="kernel void [HOLE]")
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(), required=True)
@click.pass_context
def target(ctx, **kwargs):
    """Beam-search generation toward one target feature vector."""
    kwargs = _apply_config_file(ctx, kwargs)
    vocab = tok.load_vocab(kwargs["vocab_path"])
    values = [float(v) for v in kwargs["vector"].split(",")]
    target_fv = feat.FeatureVector(kwargs["space"], np.array(values))
    temperature = kwargs["temperature"]
    if kwargs["policy_kind"] == "model":
        if not kwargs["model_path"]:
            raise click.UsageError("--model is required with the model policy")
        state = load_checkpoint(kwargs["model_path"])
        if temperature is None:
            temperature = state.config.temperature
        policy = ModelPolicy(state, temperature)
        evaluator = kcl_evaluator(vocab, kwargs["space"])
    else:
        from .search import LiteralMutationPolicy, literal_evaluator

        policy = LiteralMutationPolicy(vocab)
        evaluator = literal_evaluator(vocab, dim=feat.SPACES[kwargs["space"]].dim)
        temperature = temperature if temperature is not None else 1.0
    cfg = BeamConfig(
        workload_size=kwargs["workload_size"],
        beam_width=kwargs["beam_width"],
        replace_prob=kwargs["replace_prob"],
        max_depth=kwargs["max_depth"],
        temperature=temperature,
        seed_text=kwargs["seed_text"],
        seed=kwargs["seed"],
    )
    seed_ids = seed_input_ids(vocab, cfg.seed_text)
    result = run_search(policy, evaluator, target_fv, cfg, seed_ids)
    out = kwargs["out"]
    records.write_jsonl(f"{out}.candidates.jsonl", (c.to_record() for c in result.trajectory))
    summary = result.summary(target_fv)
    summary["config_hash"] = records.config_hash(_resolved(kwargs))
    records.atomic_write_text(
        f"{out}.summary.json", json.dumps(summary, sort_keys=True, indent=2) + "\n"
    )
    _write_sidecar(out, kwargs)
    click.echo(json.dumps(summary, sort_keys=True))


@main.command(name="al-loop")
@click.option("--config", type=click.Path(exists=True), default=None)
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--vocab", "vocab_path", type=click.Path(exists=True), required=True)
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), required=True)
@click.option("--epochs", type=int, default=10)
@click.option("--seed-points", type=int, default=16)
@click.option("--query-points", type=int, default=2048)
@click.option("--workload-size", type=int, default=64)
@click.option("--beam-width", type=int, default=8)
@click.option("--max-depth", type=int, default=3)
@click.option("--temperature", type=float, default=None)
@click.option("--passive", is_flag=True, default=False,
              help="target random feature points instead of entropy maximisers")
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(), required=True)
@click.pass_context
def al_loop_cmd(ctx, **kwargs):
    """Active-learning loop: committee queries drive targeted synthesis for
    the device-mapping task."""
    kwargs = _apply_config_file(ctx, kwargs)
    state = load_checkpoint(kwargs["model_path"])
    vocab = tok.load_vocab(kwargs["vocab_path"])
    entries = records.read_corpus(kwargs["corpus_path"])
    space = "SYNTAX8"
    dim = feat.SPACES[space].dim
    rng = np.random.default_rng(kwargs["seed"])

    all_points = [mapping.label_point(e.features[space]) for e in entries]
    order = rng.permutation(len(all_points))
    eval_set = [all_points[i] for i in order[:max(8, len(all_points) // 3)]]
    seed_set = [all_points[i] for i in order[len(eval_set):len(eval_set) + kwargs["seed_points"]]]
    committee = make_committee(dim, seed=kwargs["seed"])
    fit_initial(
        committee,
        np.stack([p.features.values for p in seed_set]),
        [p.label for p in seed_set],
    )
    bounds = np.max(np.stack([p.features.values for p in all_points]), axis=0) * 1.5
    temperature = kwargs["temperature"] if kwargs["temperature"] is not None else state.config.temperature
    policy = ModelPolicy(state, temperature)
    evaluator = kcl_evaluator(vocab, space)
    seed_ids = seed_input_ids(vocab)

    def synthesizer(target_vec, epoch_seed):
        target_fv = feat.FeatureVector(space, target_vec)
        cfg = BeamConfig(
            workload_size=kwargs["workload_size"],
            beam_width=kwargs["beam_width"],
            replace_prob=0.15,
            max_depth=kwargs["max_depth"],
            temperature=temperature,
            seed=epoch_seed,
        )
        try:
            result = run_search(policy, evaluator, target_fv, cfg, seed_ids)
        except NoCompilingCandidate:
            return [], None
        vectors = [c.features.values for c in result.trajectory]
        return vectors, feat.relative_proximity(result.best.features, target_fv)

    def labeler(vec):
        return mapping.label_point(feat.FeatureVector(space, vec)).label

    def metrics_fn(X, y):
        pts = [
            mapping.label_point(feat.FeatureVector(space, row)) for row in X
        ]
        try:
            tree = mapping.train_tree(pts, max_depth=5)
        except mapping.DegenerateLabels:
            return {"speedup": 1.0}
        return {"speedup": mapping.evaluate(tree, eval_set).speedup}

    _, _, logs = al_loop(
        committee,
        synthesizer,
        labeler,
        epochs=kwargs["epochs"],
        bounds=bounds,
        seed=kwargs["seed"],
        n_query_points=kwargs["query_points"],
        metrics_fn=metrics_fn,
        passive=kwargs["passive"],
    )
    out = kwargs["out"]
    records.write_jsonl(f"{out}.epochs.jsonl", (l.to_record() for l in logs))
    lines = ["epoch\ttarget\tbest_proximity\tdataset_size\tspeedup"]
    for l in logs:
        tgt = ",".join(f"{v:g}" for v in l.target)
        lines.append(
            f"{l.epoch}\t{tgt}\t{l.best_proximity}\t{l.dataset_size}\t{l.metrics.get('speedup')}"
        )
    records.atomic_write_text(f"{out}.epochs.tsv", "\n".join(lines) + "\n")
    _write_sidecar(out, kwargs)
    click.echo(f"ran {len(logs)} epochs -> {out}.epochs.tsv")


@main.command(name="eval-heuristic")
@click.option("--config", type=click.Path(exists=True), default=None)
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), required=True)
@click.option("--extra", "extra_paths", type=click.Path(exists=True), multiple=True,
              help="additional corpus files whose kernels augment training")
@click.option("--max-depth", type=int, default=5)
@click.option("--train-frac", type=float, default=0.67)
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(), required=True)
@click.pass_context
def eval_heuristic(ctx, **kwargs):
    """Train the device-mapping tree and report speedup/precision/recall/
    specificity against the static-GPU baseline."""
    kwargs = _apply_config_file(ctx, kwargs)
    entries = records.read_corpus(kwargs["corpus_path"])
    points = [mapping.label_point(e.features["SYNTAX8"]) for e in entries]
    rng = np.random.default_rng(kwargs["seed"])
    order = rng.permutation(len(points))
    cut = int(len(points) * kwargs["train_frac"])
    train_set = [points[i] for i in order[:cut]]
    eval_set = [points[i] for i in order[cut:]]
    for path in kwargs["extra_paths"]:
        train_set.extend(
            mapping.label_point(e.features["SYNTAX8"]) for e in records.read_corpus(path)
        )
    tree = mapping.train_tree(train_set, max_depth=kwargs["max_depth"], seed=kwargs["seed"])
    report = mapping.evaluate(tree, eval_set)
    payload = report.to_record()
    payload["oracle_speedup"] = mapping.oracle_speedup(eval_set)
    payload["static_gpu_speedup"] = 1.0
    payload["train_size"] = len(train_set)
    payload["eval_size"] = len(eval_set)
    payload["config_hash"] = records.config_hash(_resolved(kwargs))
    records.atomic_write_text(kwargs["out"], json.dumps(payload, sort_keys=True, indent=2) + "\n")
    _write_sidecar(kwargs["out"], kwargs)
    click.echo(json.dumps(payload, sort_keys=True))


@main.command(name="pca-export")
@click.option("--config", type=click.Path(exists=True), default=None)
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), required=True)
@click.option("--space", type=click.Choice(sorted(feat.SPACES)), default="SYNTAX8")
@click.option("--out", type=click.Path(), required=True)
@click.pass_context
def pca_export(ctx, **kwargs):
    """Project one space's corpus features to 2-D and export as TSV."""
    kwargs = _apply_config_file(ctx, kwargs)
    entries = records.read_corpus(kwargs["corpus_path"])
    vectors = [e.features[kwargs["space"]] for e in entries]
    coords = feat.pca2_project(vectors)
    lines = [f"{x:.9g}\t{y:.9g}" for x, y in coords]
    records.atomic_write_text(kwargs["out"], "\n".join(lines) + "\n")
    _write_sidecar(kwargs["out"], kwargs)
    click.echo(f"wrote {len(coords)} points -> {kwargs['out']}")


@main.command(name="export-turing")
@click.option("--config", type=click.Path(exists=True), default=None)
@click.option("--dataset", "datasets", type=str, multiple=True, required=True,
              help="name=path pairs; path is a record file with source texts")
@click.option("--per-dataset", type=int, default=0, help="cap samples per dataset (0 = all)")
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(), required=True)
@click.pass_context
def export_turing(ctx, **kwargs):
    """Bundle code samples from named datasets for the labeling study app."""
    kwargs = _apply_config_file(ctx, kwargs)
    rng = np.random.default_rng(kwargs["seed"])
    bundle_datasets = []
    for spec in kwargs["datasets"]:
        name, sep, path = spec.partition("=")
        if not sep:
            raise click.UsageError(f"--dataset expects name=path, got {spec!r}")
        samples = []
        for i, row in enumerate(records.read_jsonl(path)):
            code = row.get("source") or row.get("code")
            if not code:
                continue
            sid = row.get("id") or f"{name}-{i}"
            samples.append({"id": str(sid), "code": code})
        if kwargs["per_dataset"] and len(samples) > kwargs["per_dataset"]:
            picks = rng.choice(len(samples), size=kwargs["per_dataset"], replace=False)
            samples = [samples[int(i)] for i in sorted(picks)]
        bundle_datasets.append({"name": name, "samples": samples})
    bundle = {
        "datasets": bundle_datasets,
        "generated_at": datetime.now(timezone.utc).isoformat(),
        "config_hash": records.config_hash(_resolved(kwargs)),
    }
    records.atomic_write_text(kwargs["out"], json.dumps(bundle, sort_keys=True, indent=2) + "\n")
    _write_sidecar(kwargs["out"], kwargs)
    click.echo(f"bundled {sum(len(d['samples']) for d in bundle_datasets)} samples -> {kwargs['out']}")


def run():
    try:
        main(standalone_mode=False)
    except click.ClickException as e:
        sys.stderr.write(json.dumps({"error": e.format_message(), "kind": "usage"}) + "\n")
        sys.exit(e.exit_code or 2)
    except click.Abort:
        sys.exit(130)
    except NoCompilingCandidate as e:
        sys.stderr.write(json.dumps({"error": str(e), "kind": "no_compiling_candidate"}) + "\n")
        sys.exit(1)
    except Exception as e:  # noqa: BLE001 - the CLI boundary reports all failures
        sys.stderr.write(json.dumps({"error": str(e), "kind": type(e).__name__}) + "\n")
        sys.exit(1)


if __name__ == "__main__":
    run()
