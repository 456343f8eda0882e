"""Command-line entry point.

Verbs: ``ingest`` (validate a corpus and report statistics), ``train``,
``eval`` (score a prediction file), ``predict-ood`` (map a trained model's
predictions onto a held-out dataset) and ``analyze`` (corpus-level tables
and figures).  Every command that writes results also writes a manifest
with the resolved configuration, and all files are written to a temporary
name first and renamed into place, so readers never see partial output.

The corpus root defaults to the ``STANCE_DATA_ROOT`` environment variable.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from pathlib import Path
from typing import Sequence

from . import __version__
from .corpus import REGISTRY, Corpus, load_corpus, load_registry
from .errors import StanceError
from .labelspace import build_label_space, meta_relabel
from .trainer import DEFAULT_SEED, TrainConfig, load_checkpoint, train

logger = logging.getLogger(__name__)


def _default_root() -> str:
    return os.environ.get("STANCE_DATA_ROOT", "data")


def write_text_atomic(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json_atomic(path: str | Path, payload) -> None:
    write_text_atomic(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_manifest(directory: str | Path, command: str, resolved: dict) -> None:
    manifest = {"command": command, "code_version": __version__, **resolved}
    write_json_atomic(Path(directory) / "manifest.json", manifest)


def _registry(args) -> tuple:
    return load_registry(args.registry) if getattr(args, "registry", None) else REGISTRY


def _load(args, datasets: Sequence[str] | None = None) -> Corpus:
    names = datasets
    if names is None and getattr(args, "datasets", None):
        names = [n for n in args.datasets.split(",") if n]
    return load_corpus(args.root, datasets=names, registry=_registry(args))


# =========================================================================
# Commands
# =========================================================================


def cmd_ingest(args) -> int:
    corpus = _load(args)
    report: dict[str, dict] = {}
    for name in corpus.datasets:
        stats = corpus.split_stats(name)
        entry: dict = {"splits": stats.to_dict()}
        expected = corpus.descriptor(name).expected_splits
        if expected is not None:
            entry["expected_splits"] = expected.to_dict()
            entry["matches_expected"] = stats == expected
        if args.vocab_stats and stats.total:
            entry["vocab"] = corpus.vocab_stats(name).to_dict()
        report[name] = entry
        print(f"{name}: train={stats.train} dev={stats.dev} test={stats.test} total={stats.total}")
    if args.out:
        out = Path(args.out)
        write_json_atomic(out / "ingest-report.json", report)
        write_manifest(
            out,
            "ingest",
            {"root": str(args.root), "datasets": list(corpus.datasets), "vocab_stats": args.vocab_stats},
        )
        print(f"report written to {out / 'ingest-report.json'}")
    return 0


def cmd_train(args) -> int:
    config = TrainConfig.from_file(args.config) if args.config else TrainConfig()
    if args.held_out:
        config = config.apply_overrides([f"held_out={args.held_out}"])
    if args.seed is not None:
        config = config.apply_overrides([f"seed={args.seed}"])
    if args.set:
        config = config.apply_overrides(args.set)
    corpus = _load(args, datasets=config.datasets)
    if config.meta_groups:
        full_space = build_label_space(
            [corpus.descriptor(n) for n in corpus.datasets], group_table=config.group_table
        )
        corpus = meta_relabel(corpus, full_space)
    out = Path(args.out)
    result = train(corpus, config, checkpoint_dir=out)
    write_json_atomic(out / "history.json", result.history)
    write_manifest(
        out,
        "train",
        {"config": config.to_dict(), "seed": config.seed, "root": str(args.root)},
    )
    best = result.best
    print(f"best checkpoint: epoch-{best.epoch} (avg dev macro-F1 {best.average_dev_score:.2f})")
    print(f"checkpoints under {out}")
    return 0


def cmd_predict_ood(args) -> int:
    from .embeddings import load_vectors
    from .model import label_table_from_encoder
    from .ood import predict_ood, write_predictions

    registry = _registry(args)
    corpus = load_corpus(args.root, registry=registry)
    model, model_space, config = load_checkpoint(args.checkpoint, corpus)
    full_space = build_label_space(
        [corpus.descriptor(n) for n in corpus.datasets],
        group_table=args.groups or config.group_table,
    )
    table = None
    if args.embeddings:
        table = load_vectors(args.embeddings)
    elif args.strategy in ("weak", "soft"):
        table = label_table_from_encoder(model.encoder)
    examples = corpus.examples(args.held_out, args.split)
    if not examples:
        raise StanceError(f"no {args.split!r} examples for dataset {args.held_out!r}")
    predictions = predict_ood(
        examples,
        model,
        model_space,
        full_space,
        held_out=args.held_out,
        strategy=args.strategy,
        table=table,
        batch_size=config.batch_size,
        restrict_to=args.restrict_mask,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = out.with_name(f".{out.name}.tmp")
    write_predictions(predictions, tmp)
    os.replace(tmp, out)
    write_manifest(
        out.parent,
        "predict-ood",
        {
            "checkpoint": str(args.checkpoint),
            "held_out": args.held_out,
            "strategy": args.strategy,
            "split": args.split,
            "embeddings": args.embeddings,
            "restrict_mask": args.restrict_mask,
            "seed": config.seed,
        },
    )
    print(f"{len(predictions)} predictions written to {out}")
    return 0


def cmd_eval(args) -> int:
    from .evaluation import (
        aggregate_report,
        macro_f1,
        majority_baseline,
        random_baseline,
        render_report,
        tfidf_logreg_baseline,
    )
    from .ood import read_prediction_records

    registry = _registry(args)
    by_name = {d.name: d for d in registry}
    gold_records = []
    with open(args.gold, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                gold_records.append(json.loads(line))
    if not gold_records:
        raise StanceError(f"gold file {args.gold} is empty")
    dataset = args.dataset or gold_records[0]["dataset"]
    if dataset not in by_name:
        raise StanceError(f"dataset {dataset!r} is not in the registry")
    inventory = list(by_name[dataset].labels)

    predictions = read_prediction_records(args.predictions)
    predicted_by_id = {}
    for record in predictions:
        label = record.get("mapped_label", record.get("label"))
        if label is None:
            raise StanceError(f"prediction record {record} has neither mapped_label nor label")
        predicted_by_id[record["id"]] = label
    missing = [rec["id"] for rec in gold_records if rec["id"] not in predicted_by_id]
    if missing:
        raise StanceError(f"predictions missing for {len(missing)} gold ids (first: {missing[0]!r})")
    gold = [rec["label"] for rec in gold_records]
    predicted = [predicted_by_id[rec["id"]] for rec in gold_records]
    scores = {dataset: macro_f1(predicted, gold, inventory)}

    baselines = {}
    if args.baselines:
        corpus = load_corpus(args.root, datasets=[dataset], registry=registry)
        observed = (
            [ex.label for ex in corpus.examples(dataset, "train")]
            if args.majority_from_train
            else gold
        )
        majority = majority_baseline(observed, len(gold), inventory)
        baselines["majority"] = macro_f1(majority, gold, inventory)
        baselines["random"] = random_baseline(gold, inventory, seed=args.seed)
        baselines["tfidf_logreg"] = macro_f1(
            tfidf_logreg_baseline(corpus, dataset, seed=args.seed), gold, inventory
        )
    report = aggregate_report(
        scores,
        metadata={"dataset": dataset, "gold": str(args.gold), "predictions": str(args.predictions), **baselines},
    )
    print(render_report(report), end="")
    for name, value in baselines.items():
        print(f"baseline {name}: {value:.2f}")
    if args.out:
        out = Path(args.out)
        write_text_atomic(out / "report.json", report.to_json())
        write_text_atomic(out / "report.txt", render_report(report))
        write_manifest(
            out,
            "eval",
            {
                "gold": str(args.gold),
                "predictions": str(args.predictions),
                "dataset": dataset,
                "baselines": args.baselines,
                "majority_from_train": args.majority_from_train,
                "seed": args.seed,
            },
        )
    return 0


def cmd_analyze(args) -> int:
    from .evaluation import correlate_features, dataset_features, dataset_scatter_2d
    from .model import HashEncoder

    wanted = [p for p in args.plots.split(",") if p] if args.plots else []
    unknown = set(wanted) - {"overlap", "scatter", "labels", "correlations"}
    if unknown:
        raise StanceError(f"unknown plots requested: {sorted(unknown)}")
    corpus = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload: dict = {}

    names, matrix = corpus.overlap_matrix()
    payload["overlap"] = {"datasets": names, "matrix": [list(map(float, row)) for row in matrix]}
    if "overlap" in wanted:
        from .plots import save_overlap_heatmap

        save_overlap_heatmap(names, matrix, out / "overlap.png")

    features = {name: dataset_features(corpus, name) for name in corpus.datasets}
    payload["features"] = features

    if args.scores:
        with open(args.scores, encoding="utf-8") as f:
            scores = json.load(f)
        correlations = correlate_features(features, scores)
        payload["correlations"] = {k: (None if v != v else v) for k, v in correlations.items()}
        if "correlations" in wanted:
            from .plots import save_correlation_bars

            save_correlation_bars(correlations, out / "correlations.png")

    if "scatter" in wanted:
        from .plots import save_scatter

        encoder = HashEncoder(max_length=64)
        point_names, points, centroids = dataset_scatter_2d(
            corpus, encoder, n=min(args.sample_n, sum(corpus.split_stats(n).total for n in corpus.datasets)),
            seed=args.seed,
        )
        save_scatter(point_names, points, centroids, out / "scatter.png")
        payload["scatter_centroids"] = {k: [float(v[0]), float(v[1])] for k, v in centroids.items()}

    if "labels" in wanted:
        if not args.embeddings:
            raise StanceError("the labels plot needs --embeddings")
        import numpy as np

        from .embeddings import embed_label, load_vectors, project_2d
        from .plots import save_label_projection

        table = load_vectors(args.embeddings)
        space = build_label_space([corpus.descriptor(n) for n in corpus.datasets])
        label_names, vectors = [], []
        for label in space.labels:
            try:
                vectors.append(embed_label(table, label.name))
                label_names.append(label.qualified())
            except StanceError:
                logger.warning("skipping label %s: not embeddable", label.qualified())
        points = project_2d(np.vstack(vectors))
        save_label_projection(label_names, points, out / "labels.png")

    write_json_atomic(out / "analysis.json", payload)
    write_manifest(
        out,
        "analyze",
        {
            "root": str(args.root),
            "datasets": list(corpus.datasets),
            "plots": wanted,
            "scores": args.scores,
            "sample_n": args.sample_n,
            "seed": args.seed,
        },
    )
    print(f"analysis written to {out}")
    return 0


# =========================================================================
# Parser
# =========================================================================


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stance",
        description="Cross-domain stance detection: corpus tools, training, and label mapping.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--root", default=_default_root(), help="corpus root (default: $STANCE_DATA_ROOT or ./data)")
        p.add_argument("--registry", default=None, help="JSON registry file replacing the built-in one")

    p = sub.add_parser("ingest", help="validate prepared datasets and report statistics")
    add_common(p)
    p.add_argument("--datasets", default=None, help="comma-separated subset")
    p.add_argument("--vocab-stats", action="store_true", dest="vocab_stats")
    p.add_argument("--out", default=None, help="directory for the JSON report")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train a model")
    add_common(p)
    p.add_argument("--config", default=None, help="JSON training config")
    p.add_argument("--held-out", dest="held_out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="config override")
    p.add_argument("--out", default="checkpoints/run", help="checkpoint directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict-ood", help="map a model's predictions onto a held-out dataset")
    add_common(p)
    p.add_argument("--checkpoint", required=True, help="epoch checkpoint directory")
    p.add_argument("--held-out", dest="held_out", required=True)
    p.add_argument("--strategy", choices=("hard", "weak", "soft"), required=True)
    p.add_argument("--split", default="test", choices=("train", "dev", "test"))
    p.add_argument("--embeddings", default=None, help="word-vector file for weak/soft mapping")
    p.add_argument("--groups", default=None, help="stance-group table file overriding the packaged one")
    p.add_argument("--restrict-mask", dest="restrict_mask", default=None, metavar="DATASET",
                   help="restrict the in-domain mask to one training dataset")
    p.add_argument("--out", default="predictions.jsonl")
    p.set_defaults(func=cmd_predict_ood)

    p = sub.add_parser("eval", help="score a prediction file against gold labels")
    add_common(p)
    p.add_argument("--predictions", required=True)
    p.add_argument("--gold", required=True, help="unified-format JSONL with gold labels")
    p.add_argument("--dataset", default=None, help="dataset name (default: taken from the gold records)")
    p.add_argument("--baselines", action="store_true", help="also compute majority/random/tf-idf baselines")
    p.add_argument("--majority-from-train", action="store_true", dest="majority_from_train",
                   help="compute the majority baseline from the train distribution")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", default=None, help="directory for report files")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze", help="corpus statistics, features, and figures")
    add_common(p)
    p.add_argument("--datasets", default=None, help="comma-separated subset")
    p.add_argument("--plots", default="", help="comma-separated: overlap,scatter,labels,correlations")
    p.add_argument("--scores", default=None, help="JSON file of per-dataset scores for correlations")
    p.add_argument("--embeddings", default=None, help="word-vector file for the labels plot")
    p.add_argument("--sample-n", dest="sample_n", type=int, default=25000)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", default="analysis")
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StanceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
