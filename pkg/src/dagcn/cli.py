"""Command-line entry point: build-graph, train, evaluate, gen-synth,
grad-check.

Exit codes: 0 success, 1 environment / I-O failure, 2 bad user input or
config. ``--threads 1`` (the default) pins the BLAS thread pools before numpy
loads, which is what the byte-identical determinism contract relies on.
DAGCN_SEED overrides any seed given by flag, config file, or checkpoint.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

ARTIFACT_VERSION = "0.1.0"

SPLIT_RATIOS = (0.75, 0.15, 0.10)

_BOOL_WORDS = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}

# Config-file keys (flat `key = value`), each mirrored by a CLI flag.
_KEY_TYPES = {
    "embed_dim": int,
    "proj_dim": int,
    "h": int,
    "layers": int,
    "leaky_slope": float,
    "attention_mode": str,
    "seq_pooling": str,
    "use_attention": bool,
    "sequential": bool,
    "min_count": int,
    "lr": float,
    "batch_size": int,
    "max_epochs": int,
    "patience": int,
    "domain_weight": float,
    "clip_low": float,
    "clip_high": float,
    "seed": int,
}

_DEFAULTS = {
    "embed_dim": 100,
    "proj_dim": None,
    "h": 2,
    "layers": 1,
    "leaky_slope": 0.2,
    "attention_mode": "softmax",
    "seq_pooling": "mean",
    "use_attention": True,
    "sequential": True,
    "min_count": 1,
    "lr": 0.001,
    "batch_size": 128,
    "max_epochs": 20,
    "patience": 5,
    "domain_weight": 1.0,
    "clip_low": -5.0,
    "clip_high": 5.0,
    "seed": 0,
}


def _parse_value(key: str, raw: str):
    from .errors import ConfigError

    kind = _KEY_TYPES[key]
    raw = raw.strip()
    if kind is bool:
        if raw.lower() not in _BOOL_WORDS:
            raise ConfigError(f"config key {key}: expected a boolean, got {raw!r}")
        return _BOOL_WORDS[raw.lower()]
    try:
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"config key {key}: {exc}") from None


def parse_config_file(path) -> dict:
    """Flat `key = value` file; `#` starts a comment; unknown keys rejected."""
    from .errors import ConfigError

    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{line_no}: expected key = value")
            key, raw = (part.strip() for part in stripped.split("=", 1))
            if key not in _KEY_TYPES:
                raise ConfigError(f"{path}:{line_no}: unknown config key {key!r}")
            values[key] = _parse_value(key, raw)
    return values


def resolve_settings(args) -> dict:
    """defaults <- config file <- CLI flags; DAGCN_SEED beats everything."""
    settings = dict(_DEFAULTS)
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        settings.update(parse_config_file(cfg_path))
    flag_map = {
        "embed_dim": "embed_dim",
        "proj_dim": "proj_dim",
        "h": "h",
        "layers": "layers",
        "leaky_slope": "leaky_slope",
        "attention_mode": "attention_mode",
        "seq_pooling": "seq_pooling",
        "min_count": "min_count",
        "lr": "lr",
        "batch_size": "batch_size",
        "max_epochs": "max_epochs",
        "patience": "patience",
        "domain_weight": "domain_weight",
        "seed": "seed",
    }
    for key, attr in flag_map.items():
        value = getattr(args, attr, None)
        if value is not None:
            settings[key] = value
    if getattr(args, "no_attention", False):
        settings["use_attention"] = False
    if getattr(args, "no_sequential", False):
        settings["sequential"] = False
    env_seed = os.environ.get("DAGCN_SEED")
    if env_seed is not None:
        settings["seed"] = int(env_seed)
    return settings


def _model_config(settings):
    from .model import ModelConfig

    return ModelConfig(
        embed_dim=settings["embed_dim"],
        proj_dim=settings["proj_dim"],
        latent_users=settings["h"],
        leaky_slope=settings["leaky_slope"],
        attention_mode=settings["attention_mode"],
        rounds=settings["layers"],
        use_attention=settings["use_attention"],
        seq_pooling=settings["seq_pooling"],
    )


def _train_config(settings):
    from .training import TrainConfig

    return TrainConfig(
        lr=settings["lr"],
        batch_size=settings["batch_size"],
        clip_low=settings["clip_low"],
        clip_high=settings["clip_high"],
        max_epochs=settings["max_epochs"],
        patience=settings["patience"],
        domain_weight=settings["domain_weight"],
        rng_seed=settings["seed"],
    )


def _graph_options(settings):
    from .graph import GraphOptions

    return GraphOptions(
        include_sequential_edges=settings["sequential"],
        min_edge_count=settings["min_count"],
    )


def variant_name(use_attention: bool, sequential: bool) -> str:
    if use_attention and sequential:
        return "DA-GCN"
    if use_attention:
        return "GCN_OS"
    if sequential:
        return "GCN_OA"
    return "GCN_OSA"


def build_manifest(settings, inputs: dict, command: str) -> dict:
    manifest = {
        "artifact": "dagcn",
        "artifact_version": ARTIFACT_VERSION,
        "command": command,
        "variant": variant_name(settings["use_attention"], settings["sequential"]),
        "seed": settings["seed"],
        "split_ratios": list(SPLIT_RATIOS),
        "inputs": inputs,
        "model": {
            "embed_dim": settings["embed_dim"],
            "proj_dim": settings["proj_dim"] or settings["embed_dim"],
            "h": settings["h"],
            "layers": settings["layers"],
            "leaky_slope": settings["leaky_slope"],
            "attention_mode": settings["attention_mode"],
            "use_attention": settings["use_attention"],
            "seq_pooling": settings["seq_pooling"],
        },
        "train": {
            "lr": settings["lr"],
            "batch_size": settings["batch_size"],
            "clip_low": settings["clip_low"],
            "clip_high": settings["clip_high"],
            "max_epochs": settings["max_epochs"],
            "patience": settings["patience"],
            "domain_weight": settings["domain_weight"],
        },
        "graph": {
            "include_sequential_edges": settings["sequential"],
            "min_edge_count": settings["min_count"],
        },
    }
    return manifest


def config_hash(manifest: dict) -> str:
    return hashlib.sha1(json.dumps(manifest, sort_keys=True).encode("utf-8")).hexdigest()


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _parse_input_log(path):
    from .data import parse_log_file

    result = parse_log_file(path)
    for line_no, reason in result.report.rejected:
        print(f"warning: {path}:{line_no}: {reason}", file=sys.stderr)
    if result.report.n_rejected:
        print(
            f"warning: {path}: rejected {result.report.n_rejected} of "
            f"{result.report.n_lines} lines",
            file=sys.stderr,
        )
    return result


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_build_graph(args) -> int:
    from .data import DOMAIN_A, DOMAIN_B
    from .errors import DataError
    from .graph import build_cds_graph, export_edge_lists, graph_stats

    settings = resolve_settings(args)
    vocab, sequences, _report = _parse_input_log(args.input)
    if not sequences:
        raise DataError(f"{args.input}: no usable sequences")
    graph = build_cds_graph(
        sequences, vocab.n_accounts, vocab.n_items_a, vocab.n_items_b, _graph_options(settings)
    )
    out = Path(args.out)
    export_edge_lists(graph, vocab, out)
    _write_json(out / "stats.json", graph_stats(graph))
    _write_json(out / "manifest.json", build_manifest(settings, {"log": str(args.input)}, "build-graph"))
    print(f"wrote edge lists and stats to {out}")
    return 0


def cmd_train(args) -> int:
    from .checkpoint import save_checkpoint
    from .data import split_sequences
    from .errors import DataError
    from .graph import build_cds_graph
    from .training import train

    settings = resolve_settings(args)
    model_cfg = _model_config(settings)
    train_cfg = _train_config(settings)
    vocab, sequences, _report = _parse_input_log(args.input)
    if not sequences:
        raise DataError(f"{args.input}: no usable sequences")
    train_seqs, valid_seqs, _test = split_sequences(sequences, SPLIT_RATIOS, settings["seed"])
    graph = build_cds_graph(
        train_seqs, vocab.n_accounts, vocab.n_items_a, vocab.n_items_b, _graph_options(settings)
    )
    result = train(train_seqs, valid_seqs, graph, model_cfg, train_cfg)

    manifest = build_manifest(settings, {"log": str(args.input)}, "train")
    meta = {
        "config": model_cfg.to_dict(),
        "train_config": train_cfg.to_dict(),
        "graph_options": manifest["graph"],
        "vocab": {
            "accounts": vocab.n_accounts,
            "items_a": vocab.n_items_a,
            "items_b": vocab.n_items_b,
        },
        "seed": settings["seed"],
        "manifest": manifest,
        "best_epoch": result.best_epoch,
    }
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out, meta, result.params)
    log_path = Path(args.log) if args.log else Path(str(out) + ".log.jsonl")
    with open(log_path, "w", encoding="utf-8") as fh:
        for record in result.log:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    _write_json(Path(str(out) + ".manifest.json"), manifest)
    print(
        f"checkpoint {out} (best epoch {result.best_epoch}, "
        f"val MRR@5 {result.best_val_mrr5:.4f})"
    )
    return 0


def cmd_evaluate(args) -> int:
    from .checkpoint import load_checkpoint
    from .data import split_sequences
    from .errors import DataError
    from .evaluation import evaluate
    from .graph import GraphOptions, build_cds_graph
    from .model import ModelConfig

    meta, params = load_checkpoint(args.ckpt)
    seed = meta.get("seed", 0)
    if args.seed is not None:
        seed = args.seed
    env_seed = os.environ.get("DAGCN_SEED")
    if env_seed is not None:
        seed = int(env_seed)

    vocab, sequences, _report = _parse_input_log(args.input)
    expected = meta["vocab"]
    actual = {
        "accounts": vocab.n_accounts,
        "items_a": vocab.n_items_a,
        "items_b": vocab.n_items_b,
    }
    if actual != expected:
        raise DataError(f"vocabulary mismatch: checkpoint {expected}, input {actual}")
    config = ModelConfig(**meta["config"])
    opts = meta.get("graph_options", {})
    graph_options = GraphOptions(
        include_sequential_edges=opts.get("include_sequential_edges", True),
        min_edge_count=opts.get("min_edge_count", 1),
    )
    train_seqs, valid_seqs, test_seqs = split_sequences(sequences, SPLIT_RATIOS, seed)
    chosen = {"train": train_seqs, "valid": valid_seqs, "test": test_seqs}[args.split]
    graph = build_cds_graph(
        train_seqs, vocab.n_accounts, vocab.n_items_a, vocab.n_items_b, graph_options
    )
    manifest = meta.get("manifest", {})
    report = evaluate(
        params,
        config,
        graph,
        chosen,
        meta={
            "checkpoint": str(args.ckpt),
            "seed": seed,
            "config_hash": config_hash(manifest),
            "split": args.split,
            "manifest": manifest,
        },
    )
    print(json.dumps(report.to_dict(), sort_keys=True, indent=2))
    return 0


def cmd_gen_synth(args) -> int:
    from .data import SyntheticSpec, generate_synthetic, serialize_labels, serialize_log
    from .errors import ConfigError

    field_types = {
        "n_accounts": int,
        "personas_per_account": int,
        "clusters_per_domain": int,
        "items_per_domain": int,
        "seq_len": int,
        "sequences_per_account": int,
        "noise_rate": float,
        "rng_seed": int,
        "seed": int,
    }
    values = {}
    with open(args.spec, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{args.spec}:{line_no}: expected key = value")
            key, raw = (part.strip() for part in stripped.split("=", 1))
            if key not in field_types:
                raise ConfigError(f"{args.spec}:{line_no}: unknown key {key!r}")
            values[key] = field_types[key](raw)
    if "seed" in values:
        values["rng_seed"] = values.pop("seed")
    env_seed = os.environ.get("DAGCN_SEED")
    if env_seed is not None:
        values["rng_seed"] = int(env_seed)
    spec = SyntheticSpec(**values)
    vocab, sequences, labels = generate_synthetic(spec)
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(serialize_log(vocab, sequences))
    labels_path = Path(args.labels) if args.labels else Path(str(out) + ".labels")
    with open(labels_path, "w", encoding="utf-8") as fh:
        fh.write(serialize_labels(labels))
    manifest = {
        "artifact": "dagcn",
        "artifact_version": ARTIFACT_VERSION,
        "command": "gen-synth",
        "spec": {
            "n_accounts": spec.n_accounts,
            "personas_per_account": spec.personas_per_account,
            "clusters_per_domain": spec.clusters_per_domain,
            "items_per_domain": spec.items_per_domain,
            "seq_len": spec.seq_len,
            "sequences_per_account": spec.sequences_per_account,
            "noise_rate": spec.noise_rate,
        },
        "seed": spec.rng_seed,
        "outputs": {"log": str(out), "labels": str(labels_path)},
    }
    _write_json(Path(str(out) + ".manifest.json"), manifest)
    print(f"wrote {len(sequences)} sequences to {out}")
    return 0


def cmd_grad_check(args) -> int:
    from .data import generate_synthetic, SyntheticSpec
    from .graph import build_cds_graph
    from .model import ModelConfig, build_graph_arrays
    from .training import build_examples, finite_difference_check, init_params

    import numpy as np

    settings = resolve_settings(args)
    toy = SyntheticSpec(
        n_accounts=5,
        personas_per_account=2,
        clusters_per_domain=2,
        items_per_domain=10,
        seq_len=8,
        sequences_per_account=2,
        noise_rate=0.1,
        rng_seed=settings["seed"],
    )
    vocab, sequences, _labels = generate_synthetic(toy)
    graph = build_cds_graph(
        sequences, vocab.n_accounts, vocab.n_items_a, vocab.n_items_b, _graph_options(settings)
    )
    embed_dim = args.embed_dim if args.embed_dim is not None else 16
    failed = False
    corrupt = "user_w_neighbor" if args.inject_fault else None
    for mode in ("softmax", "literal"):
        config = ModelConfig(
            embed_dim=embed_dim,
            latent_users=settings["h"],
            leaky_slope=settings["leaky_slope"],
            attention_mode=mode,
            rounds=settings["layers"],
            use_attention=settings["use_attention"],
            seq_pooling=settings["seq_pooling"],
        )
        rng = np.random.default_rng(settings["seed"])
        params = init_params(config, vocab.n_accounts, vocab.n_items_a, vocab.n_items_b, rng)
        arrays = build_graph_arrays(graph, config.latent_users)
        batch = build_examples(sequences)[:8]
        report = finite_difference_check(
            params, config, arrays, batch, rng=np.random.default_rng(settings["seed"] + 1),
            domain_weight=settings["domain_weight"], corrupt=corrupt,
        )
        ok = report.passed(1e-4)
        failed = failed or not ok
        print(
            f"{mode}: max relative error {report.max_rel_error:.3e} "
            f"({report.n_checked} coords checked, {report.n_skipped} skipped) "
            f"{'PASS' if ok else 'FAIL'}"
        )
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dagcn",
        description="Shared-account cross-domain sequential recommender.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--threads", type=int, default=1,
                       help="BLAS thread cap; 1 guarantees determinism")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--config", default=None, help="flat key = value config file")

    def model_flags(p):
        p.add_argument("--h", type=int, default=None, help="latent users per account (1-5)")
        p.add_argument("--embed-dim", dest="embed_dim", type=int, default=None)
        p.add_argument("--proj-dim", dest="proj_dim", type=int, default=None)
        p.add_argument("--layers", type=int, default=None, help="propagation rounds")
        p.add_argument("--leaky-slope", dest="leaky_slope", type=float, default=None)
        p.add_argument("--attention-mode", dest="attention_mode",
                       choices=("softmax", "literal"), default=None)
        p.add_argument("--seq-pooling", dest="seq_pooling",
                       choices=("mean", "max"), default=None)
        p.add_argument("--no-attention", dest="no_attention", action="store_true")
        p.add_argument("--no-sequential", dest="no_sequential", action="store_true")
        p.add_argument("--min-count", dest="min_count", type=int, default=None)
        p.add_argument("--domain-weight", dest="domain_weight", type=float, default=None)

    p = sub.add_parser("build-graph", help="export CDS edge lists and stats")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    common(p)
    p.add_argument("--no-sequential", dest="no_sequential", action="store_true")
    p.add_argument("--min-count", dest="min_count", type=int, default=None)
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("train", help="train on a log and write a checkpoint")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log", default=None, help="training-log path (JSON lines)")
    common(p)
    model_flags(p)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--max-epochs", dest="max_epochs", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="rank held-out targets with a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--split", choices=("train", "valid", "test"), default="test")
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gen-synth", help="generate a synthetic shared-account log")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--labels", default=None)
    common(p)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("grad-check", help="finite-difference gradient verification")
    common(p)
    model_flags(p)
    p.add_argument("--inject-fault", dest="inject_fault", action="store_true",
                   help="corrupt one gradient to prove the check detects it")
    p.set_defaults(func=cmd_grad_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    threads = str(max(1, args.threads))
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ[var] = threads

    from .errors import ConfigError, DataError

    try:
        return args.func(args)
    except (ConfigError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
