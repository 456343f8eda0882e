"""Scoring, reference baselines and dataset-level analysis.

Macro-F1 always averages over the full label inventory of the dataset
being scored: a label that never occurs in either the gold labels or the
predictions contributes an F1 of zero.  Scores are percentages.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .corpus import REGISTRY, Corpus, load_stopwords
from .errors import StanceError

# Datasets are reported in registry order; anything unknown goes last.
_REGISTRY_ORDER = {d.name: i for i, d in enumerate(REGISTRY)}


def macro_f1(predicted: Sequence[str], gold: Sequence[str], labels: Sequence[str]) -> float:
    """Macro-averaged F1 in percent over the full inventory ``labels``.

    Predictions outside the inventory can never match and only produce
    false negatives for the gold label.
    """
    if len(predicted) != len(gold):
        raise StanceError(f"{len(predicted)} predictions for {len(gold)} gold labels")
    if not gold:
        raise StanceError("cannot score an empty collection")
    if not labels:
        raise StanceError("cannot score against an empty inventory")
    scores = []
    for label in labels:
        tp = fp = fn = 0
        for p, g in zip(predicted, gold):
            if p == label and g == label:
                tp += 1
            elif p == label:
                fp += 1
            elif g == label:
                fn += 1
        denominator = 2 * tp + fp + fn
        scores.append(2 * tp / denominator if denominator else 0.0)
    return 100.0 * float(np.mean(scores))


# =========================================================================
# Baselines
# =========================================================================


def majority_baseline(
    observed: Sequence[str], test_size: int, inventory: Sequence[str]
) -> list[str]:
    """Constant predictions of the most frequent observed label.

    Frequency ties are broken by inventory order.  ``observed`` is usually
    the test split's gold labels; pass the train labels instead for a
    train-distribution majority.
    """
    if not observed:
        raise StanceError("majority baseline needs at least one observed label")
    counts = {label: 0 for label in inventory}
    for label in observed:
        if label not in counts:
            raise StanceError(f"observed label {label!r} is outside the inventory")
        counts[label] += 1
    majority = max(inventory, key=lambda lab: counts[lab])
    return [majority] * test_size


def random_baseline(
    gold: Sequence[str], inventory: Sequence[str], seed: int, trials: int = 10
) -> float:
    """Mean macro-F1 of uniformly random predictions over the inventory."""
    if trials < 1:
        raise StanceError("random baseline needs at least one trial")
    rng = np.random.default_rng(seed)
    scores = []
    for _ in range(trials):
        draws = rng.integers(0, len(inventory), size=len(gold))
        predictions = [inventory[i] for i in draws]
        scores.append(macro_f1(predictions, gold, inventory))
    return float(np.mean(scores))


def tfidf_logreg_baseline(
    corpus: Corpus,
    dataset: str,
    seed: int = 13,
    max_features: int = 15000,
) -> list[str]:
    """One-vs-rest logistic regression over tf-idf unigrams.

    The vocabulary is fitted on the concatenated target and context of the
    training split (lowercased, stop words removed); target and context are
    then vectorised separately and their vectors concatenated.  Returns the
    predictions for the test split.
    """
    from scipy.sparse import hstack
    from sklearn.feature_extraction.text import TfidfVectorizer
    from sklearn.linear_model import LogisticRegression
    from sklearn.multiclass import OneVsRestClassifier

    train = corpus.examples(dataset, "train")
    test = corpus.examples(dataset, "test")
    if not train:
        raise StanceError(f"dataset {dataset!r} has no training examples")
    if not test:
        raise StanceError(f"dataset {dataset!r} has no test examples")
    train_labels = [ex.label for ex in train]
    if len(set(train_labels)) == 1:
        return [train_labels[0]] * len(test)
    vectorizer = TfidfVectorizer(
        lowercase=True,
        stop_words=sorted(load_stopwords()),
        max_features=max_features,
        ngram_range=(1, 1),
    )
    vectorizer.fit([f"{ex.target} {ex.context}" for ex in train])

    def vectorize(examples):
        targets = vectorizer.transform([ex.target for ex in examples])
        contexts = vectorizer.transform([ex.context for ex in examples])
        return hstack([targets, contexts]).tocsr()

    classifier = OneVsRestClassifier(
        LogisticRegression(max_iter=1000, random_state=seed)
    )
    classifier.fit(vectorize(train), train_labels)
    return list(classifier.predict(vectorize(test)))


# =========================================================================
# Reports
# =========================================================================


@dataclass
class EvalReport:
    scores: dict[str, float]
    average: float
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"scores": self.scores, "average": self.average, "metadata": self.metadata}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def aggregate_report(scores: Mapping[str, float], metadata: dict | None = None) -> EvalReport:
    """Combine per-dataset scores; the average is unweighted."""
    if not scores:
        raise StanceError("cannot aggregate an empty score collection")
    ordered = dict(
        sorted(scores.items(), key=lambda kv: (_REGISTRY_ORDER.get(kv[0], len(_REGISTRY_ORDER)), kv[0]))
    )
    average = float(np.mean(list(ordered.values())))
    return EvalReport(scores=ordered, average=average, metadata=dict(metadata or {}))


def render_report(report: EvalReport) -> str:
    width = max([len(name) for name in report.scores] + [len("average")])
    lines = [f"{'dataset'.ljust(width)}  macro-F1"]
    lines.append("-" * (width + 10))
    for name, score in report.scores.items():
        lines.append(f"{name.ljust(width)}  {score:8.2f}")
    lines.append("-" * (width + 10))
    lines.append(f"{'average'.ljust(width)}  {report.average:8.2f}")
    return "\n".join(lines) + "\n"


# =========================================================================
# Dataset features and correlations
# =========================================================================


def pearson_correlation(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson's r; NaN when either side has zero variance."""
    if len(x) != len(y):
        raise StanceError("feature and score sequences differ in length")
    if len(x) < 2:
        raise StanceError("correlation needs at least two points")
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    xc = xa - xa.mean()
    yc = ya - ya.mean()
    sx = float(np.sqrt(np.sum(xc * xc)))
    sy = float(np.sqrt(np.sum(yc * yc)))
    if sx == 0.0 or sy == 0.0:
        return float("nan")
    return float(np.sum(xc * yc) / (sx * sy))


def dataset_features(corpus: Corpus, dataset: str) -> dict[str, float]:
    """Fixed-name numeric features of one dataset.

    Covers split sizes, test-against-train target and context overlap,
    vocabulary size, inventory size, and one-hot source group and
    target/context kinds.
    """
    from .corpus import CONTEXT_KINDS, SOURCE_GROUPS, TARGET_KINDS

    descriptor = corpus.descriptor(dataset)
    stats = corpus.split_stats(dataset)
    train = corpus.examples(dataset, "train")
    test = corpus.examples(dataset, "test")
    train_targets = {ex.target for ex in train}
    train_contexts = {ex.context for ex in train}
    if test:
        target_overlap = 100.0 * sum(ex.target in train_targets for ex in test) / len(test)
        context_overlap = 100.0 * sum(ex.context in train_contexts for ex in test) / len(test)
    else:
        target_overlap = context_overlap = 0.0
    features: dict[str, float] = {
        "train_size": float(stats.train),
        "dev_size": float(stats.dev),
        "test_size": float(stats.test),
        "target_overlap_pct": target_overlap,
        "context_overlap_pct": context_overlap,
        "vocab_size": float(corpus.vocab_stats(dataset).unique_words),
        "num_labels": float(len(descriptor.labels)),
    }
    for group in SOURCE_GROUPS:
        features[f"group_{group.replace(' ', '_')}"] = float(descriptor.source_group == group)
    for kind in TARGET_KINDS:
        features[f"target_{kind}"] = float(descriptor.target_kind == kind)
    for kind in CONTEXT_KINDS:
        features[f"context_{kind}"] = float(descriptor.context_kind == kind)
    return features


def correlate_features(
    features: Mapping[str, Mapping[str, float]], scores: Mapping[str, float]
) -> dict[str, float]:
    """Pearson's r between every feature and the per-dataset scores.

    ``features`` maps dataset name to its feature dict; only datasets that
    also appear in ``scores`` take part.  Constant features yield NaN.
    """
    names = [name for name in features if name in scores]
    if len(names) < 2:
        raise StanceError("correlation needs at least two datasets with scores")
    feature_names = sorted({key for name in names for key in features[name]})
    y = [scores[name] for name in names]
    return {
        feature: pearson_correlation([features[name][feature] for name in names], y)
        for feature in feature_names
    }


def dataset_scatter_2d(
    corpus: Corpus,
    encoder,
    n: int = 25000,
    seed: int = 13,
    batch_size: int = 64,
) -> tuple[list[str], np.ndarray, dict[str, np.ndarray]]:
    """Untrained-encoder map of the corpus.

    Draws a proportional sample over all splits, embeds each example pair
    with ``encoder`` (sequence-start representation, no training), projects
    to two dimensions, and returns the per-point dataset names, the points,
    and the per-dataset centroids.
    """
    import torch

    from .embeddings import project_2d
    from .model import collate_ids

    sampled = corpus.sample_proportional(n, seed=seed)
    if len(sampled) < 2:
        raise StanceError("scatter projection needs at least two sampled examples")
    vectors = []
    for start in range(0, len(sampled), batch_size):
        chunk = sampled[start : start + batch_size]
        ids = [encoder.encode_pair(ex.context, ex.target) for ex in chunk]
        input_ids, attention_mask = collate_ids(ids, encoder.pad_id)
        with torch.no_grad():
            reps = encoder(input_ids, attention_mask)
        vectors.append(reps[:, 0].double().numpy())
    points = project_2d(np.vstack(vectors))
    names = [ex.dataset for ex in sampled]
    centroids: dict[str, np.ndarray] = {}
    for name in corpus.datasets:
        rows = [i for i, point_name in enumerate(names) if point_name == name]
        if rows:
            centroids[name] = points[rows].mean(axis=0)
    return names, points, centroids
