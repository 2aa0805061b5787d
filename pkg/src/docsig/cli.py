"""Command-line entry point (``docsig``)."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigError, DocSigError
from .pipeline import (
    Corpus,
    ExperimentConfig,
    make_splits,
    run_eval,
    run_extract,
    run_patent,
    run_sweep,
    run_train_clf,
    snapshot_config,
    train_vocab,
    write_json,
)
from .synthetic import gen_synthetic

# flag name -> (config section, field, type)
PARAM_FLAGS = {
    "rl-S": ("rl", "S", int), "rl-L": ("rl", "L", int), "rl-Q": ("rl", "Q", int),
    "fv-S": ("fv", "S", int), "fv-L": ("fv", "L", int), "W": ("fv", "W", int), "F": ("fv", "F", int),
    "G": ("fv", "G", int), "M": ("fv", "M", int), "stride": ("fv", "stride", int),
    "vocab-samples": ("fv", "vocab_samples", int),
    "knn-k": ("clf", "knn_k", int), "svm-lambda": ("clf", "svm_lambda", float),
    "svm-rho": ("clf", "svm_rho", float), "svm-passes": ("clf", "svm_passes", int),
    "ml-dim": ("clf", "ml_dim", int),
    "ratio": ("splits", "ratio", float), "n-splits": ("splits", "n_splits", int),
    "qrels": ("patent", "qrels", str), "classifier": ("patent", "classifier", str),
    "drawing-type": ("patent", "drawing_type", str),
}


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON experiment configuration")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--out", help="output directory")


def _add_experiment(p: argparse.ArgumentParser):
    _add_common(p)
    p.add_argument("--manifest", help="dataset manifest (JSON Lines)")
    p.add_argument("--kinds", help="comma-separated signature kinds: RL, FV")
    p.add_argument("--fuse", action="store_true", default=None, help="also evaluate RL+FV fusion")
    p.add_argument("--allow-large-images", action="store_true", default=None,
                   help="permit FV extraction at S0/S5 on pages above 1M pixels")
    for flag, (_, _, typ) in PARAM_FLAGS.items():
        p.add_argument(f"--{flag}", type=typ)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="docsig", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [("extract", "compute feature stores"), ("train-vocab", "fit PCA + GMM vocabulary"),
                        ("train-clf", "train a linear SVM image-type classifier"),
                        ("eval", "classification and retrieval metrics over the splits"),
                        ("sweep", "evaluate a parameter grid"), ("patent", "patent-level ranking"),
                        ("splits", "write the train/test splits")]:
        _add_experiment(sub.add_parser(name, help=help_))
    g = sub.add_parser("gen-synthetic", help="generate a synthetic labeled corpus")
    _add_common(g)
    g.add_argument("--classes", type=int, default=4)
    g.add_argument("--count", type=int, default=60, help="images per class")
    return parser


def resolve_config(args) -> ExperimentConfig:
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    for key in ("manifest", "seed", "out", "fuse"):
        if getattr(args, key, None) is not None:
            data[key] = getattr(args, key)
    if getattr(args, "kinds", None):
        data["kinds"] = [k.strip() for k in args.kinds.split(",") if k.strip()]
    if getattr(args, "allow_large_images", None):
        data.setdefault("fv", {})["allow_large_images"] = True
    for flag, (section, fld, _) in PARAM_FLAGS.items():
        value = getattr(args, flag.replace("-", "_"), None)
        if value is not None:
            data.setdefault(section, {})[fld] = value
    return ExperimentConfig.from_dict(data)


def _print(obj):
    print(json.dumps(obj, sort_keys=True, indent=2, default=str))


def run(args) -> int:
    if args.command == "gen-synthetic":
        out = args.out or "synthetic"
        manifest = gen_synthetic(args.classes, args.count, args.seed if args.seed is not None else 0, out)
        _print({"manifest": str(Path(out) / "manifest.jsonl"), "items": len(manifest),
                "classes": list(manifest.classes)})
        return 0

    config = resolve_config(args)
    corpus = Corpus.load(config.manifest)
    if args.command == "extract":
        results = [run_extract(config, k, corpus) for k in config.kinds]
        snapshot_config(config)
        _print({r.kind: {"store": str(r.path), "computed": r.computed, "failures": r.failures} for r in results})
        return 0
    if args.command == "train-vocab":
        path, vocab = train_vocab(config, corpus)
        snapshot_config(config)
        _print({"vocabulary": str(path), "components": vocab.gmm.n_components, "dim": vocab.gmm.dim,
                "em_steps": len(vocab.gmm.trace) - 1})
        return 0
    if args.command == "train-clf":
        _print({"classifier": str(run_train_clf(config, corpus))})
        return 0
    if args.command == "splits":
        splits = make_splits(config, corpus.manifest)
        path = Path(config.out) / "splits.json"
        write_json(path, [s.as_dict(corpus.manifest.ids) for s in splits])
        snapshot_config(config)
        _print({"splits": str(path), "count": len(splits)})
        return 0
    if args.command == "eval":
        report = run_eval(config, corpus)
        _print({"report": str(report["path"]),
                "summary": {k: v["summary"] for k, v in report["results"].items()}})
        return 0
    if args.command == "sweep":
        summary = run_sweep(config, corpus)
        _print({"winners": summary.winners, "variances": summary.variances})
        return 0
    if args.command == "patent":
        _print(run_patent(config, corpus)["cells"])
        return 0
    raise AssertionError(args.command)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except DocSigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
