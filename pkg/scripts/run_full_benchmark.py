#!/usr/bin/env python3
"""Run the full experiment grid over a prepared corpus.

One in-domain run (train on every dataset, score every test split) plus one
leave-one-out run per dataset (train without it, then map predictions onto
its inventory with each requested strategy). Writes per-run checkpoints,
prediction files, and reports under --out, and a summary.json at the top.

This is a long job: with the default pretrained-encoder config it is
seventeen full training runs. It is meant for a GPU box, not for CI; the
test suite covers the same code paths on a synthetic corpus. Finished runs
are detected by their ``best`` marker and skipped, so the script can be
re-run after an interruption and will only do the missing work.

Example:
    python scripts/run_full_benchmark.py --root /corpora/stance \
        --out runs/benchmark --set encoder_id=hash --set epochs=5 \
        --embeddings vectors.txt
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from stance.corpus import load_corpus, load_registry
from stance.embeddings import load_vectors
from stance.evaluation import aggregate_report, macro_f1, render_report
from stance.labelspace import build_label_space, meta_relabel
from stance.model import label_table_from_encoder
from stance.ood import STRATEGIES, predict_ood, write_predictions
from stance.trainer import TrainConfig, evaluate_split, load_checkpoint, train

logger = logging.getLogger("stance.benchmark")


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument(
        "--root",
        default=os.environ.get("STANCE_DATA_ROOT", "data"),
        help="corpus root (default: $STANCE_DATA_ROOT or ./data)",
    )
    parser.add_argument("--out", default="runs/benchmark", help="output directory")
    parser.add_argument("--registry", help="JSON registry file replacing the built-in one")
    parser.add_argument("--config", help="JSON training config file")
    parser.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="config override, repeatable",
    )
    parser.add_argument(
        "--strategies",
        default="hard,weak,soft",
        help="comma-separated mapping strategies for the leave-one-out runs",
    )
    parser.add_argument(
        "--embeddings",
        help="word-vector file for weak/soft mapping "
        "(default: contextual label embeddings from the trained encoder)",
    )
    parser.add_argument(
        "--held-out",
        dest="held_out",
        help="comma-separated datasets to hold out (default: every dataset)",
    )
    parser.add_argument(
        "--skip-in-domain",
        action="store_true",
        help="only run the leave-one-out grid",
    )
    return parser.parse_args(argv)


def write_json(path: Path, payload: object) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def train_or_resume(corpus, config: TrainConfig, run_dir: Path):
    """Train into run_dir, or reload its best checkpoint if one is done."""
    marker = run_dir / "best"
    if marker.exists():
        best = marker.read_text(encoding="utf-8").strip()
        logger.info("reusing %s/%s", run_dir, best)
        model, space, config = load_checkpoint(run_dir / best, corpus)
        return model, space, config
    started = time.monotonic()
    result = train(corpus, config, checkpoint_dir=run_dir)
    write_json(run_dir / "history.json", result.history)
    logger.info(
        "trained %s in %.0fs (best epoch %d, avg dev macro-F1 %.2f)",
        run_dir,
        time.monotonic() - started,
        result.best.epoch,
        result.best.average_dev_score,
    )
    return result.model, result.space, config


def run_in_domain(corpus, config: TrainConfig, out: Path) -> dict[str, float]:
    model, space, config = train_or_resume(corpus, config, out / "in-domain")
    scores = evaluate_split(model, corpus, space, split="test", batch_size=config.batch_size)
    report = aggregate_report(scores, metadata={"run": "in-domain", "split": "test"})
    write_json(out / "in-domain" / "report.json", report.to_dict())
    (out / "in-domain" / "report.txt").write_text(render_report(report), encoding="utf-8")
    logger.info("in-domain average test macro-F1: %.2f", report.average)
    return scores


def run_leave_one_out(
    corpus,
    config: TrainConfig,
    out: Path,
    held_out: str,
    strategies: list[str],
    vector_file: str | None,
) -> dict[str, float]:
    """Train without ``held_out`` and map predictions onto its inventory.

    ``weak`` and ``soft`` run on one model trained over the raw label
    space; ``hard`` needs a second model trained after collapsing every
    label to its stance group, so requesting it doubles the training work.
    """
    run_dir = out / "loo" / held_out
    loo_config = config.apply_overrides([f"held_out={held_out}"])
    full_space = build_label_space(
        [corpus.descriptor(name) for name in corpus.datasets],
        group_table=loo_config.group_table,
    )
    examples = corpus.examples(held_out, "test")
    if not examples:
        logger.warning("no test split for %s, skipping prediction", held_out)
        return {}
    gold = [example.label for example in examples]
    inventory = list(corpus.descriptor(held_out).labels)
    scores: dict[str, float] = {}

    def score(model, model_space, strategy: str) -> None:
        table = None
        if strategy in ("weak", "soft"):
            table = load_vectors(vector_file) if vector_file else label_table_from_encoder(model.encoder)
        predictions = predict_ood(
            examples,
            model,
            model_space,
            full_space,
            held_out=held_out,
            strategy=strategy,
            table=table,
            batch_size=loo_config.batch_size,
        )
        write_predictions(predictions, run_dir / f"predictions.{strategy}.jsonl")
        mapped = [prediction.mapped.name for prediction in predictions]
        scores[strategy] = macro_f1(mapped, gold, inventory)
        logger.info("%s / %s: macro-F1 %.2f", held_out, strategy, scores[strategy])

    similarity = [s for s in strategies if s in ("weak", "soft")]
    if similarity:
        model, model_space, _ = train_or_resume(corpus, loo_config, run_dir)
        for strategy in similarity:
            score(model, model_space, strategy)
    if "hard" in strategies:
        meta_corpus = meta_relabel(corpus, full_space)
        model, model_space, _ = train_or_resume(meta_corpus, loo_config, run_dir / "groups")
        score(model, model_space, "hard")

    write_json(run_dir / "scores.json", scores)
    return scores


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    args = parse_args(argv)
    strategies = [name.strip() for name in args.strategies.split(",") if name.strip()]
    unknown = sorted(set(strategies) - set(STRATEGIES))
    if unknown:
        raise SystemExit(f"unknown strategies: {', '.join(unknown)}")

    config = TrainConfig.from_file(args.config) if args.config else TrainConfig()
    if args.set:
        config = config.apply_overrides(args.set)
    registry = load_registry(args.registry) if args.registry else None
    corpus = load_corpus(args.root, registry=registry)
    held_out = (
        [name.strip() for name in args.held_out.split(",") if name.strip()]
        if args.held_out
        else list(corpus.datasets)
    )
    out = Path(args.out)

    summary: dict[str, object] = {"root": str(args.root), "config": config.to_dict()}
    if not args.skip_in_domain:
        summary["in_domain"] = run_in_domain(corpus, config, out)

    loo: dict[str, dict[str, float]] = {}
    for dataset in held_out:
        loo[dataset] = run_leave_one_out(corpus, config, out, dataset, strategies, args.embeddings)
    summary["leave_one_out"] = loo

    for strategy in strategies:
        per_dataset = {d: s[strategy] for d, s in loo.items() if strategy in s}
        if not per_dataset:
            continue
        report = aggregate_report(per_dataset, metadata={"run": "leave-one-out", "strategy": strategy})
        (out / f"loo-{strategy}.txt").write_text(render_report(report), encoding="utf-8")
        summary[f"loo_average_{strategy}"] = report.average
        logger.info("leave-one-out %s average: %.2f", strategy, report.average)

    write_json(out / "summary.json", summary)
    logger.info("summary written to %s", out / "summary.json")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
