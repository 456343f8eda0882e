"""Synthetic eight-dataset suite used across the test modules.

Four source domains with two datasets each, 2-4 uniquely named labels per
dataset.  Every label belongs to a semantic flavor with its own signature
token, so contexts are linearly separable, and flavors of the same stance
group share a direction in the toy name-embedding table, so the group
structure is recoverable from label names alone.  ``syn_d`` carries two
positive-group labels (one per positive flavor), which a group-level model
cannot tell apart but name similarity can.
"""

from __future__ import annotations

import random

import numpy as np

from stance.corpus import Corpus, DatasetDescriptor, StanceExample
from stance.embeddings import STATIC_WORD, EmbeddingTable
from stance.labelspace import LabelSpace, build_label_space

# flavor -> (signature token, stance group)
FLAVORS = {
    "aprv": ("aprvsig", "positive"),
    "prse": ("prsesig", "positive"),
    "rjct": ("rjctsig", "negative"),
    "qstn": ("qstnsig", "discuss"),
    "unrl": ("unrlsig", "other"),
    "ntrl": ("ntrlsig", "neutral"),
}

# dataset -> (source group, target kind, [(label name, flavor), ...])
DATASETS = {
    "syn_a": ("debates", "topic", [("approve", "aprv"), ("reject", "rjct")]),
    "syn_b": ("debates", "topic", [("praise", "prse"), ("slam", "rjct"), ("shrug", "ntrl")]),
    "syn_c": ("news", "headline", [("backs", "aprv"), ("denies", "rjct"), ("probes", "qstn")]),
    "syn_d": ("news", "headline", [("approval", "aprv"), ("praising", "prse"), ("rejection", "rjct")]),
    "syn_e": ("social media", "topic", [("applaud", "prse"), ("oppose", "rjct"), ("wander", "unrl"), ("muse", "qstn")]),
    "syn_f": ("social media", "topic", [("uphold", "aprv"), ("refuse", "rjct"), ("off topic", "unrl")]),
    "syn_g": ("various", "topic", [("champion", "prse"), ("debunk", "rjct")]),
    "syn_h": ("various", "none", [("salute", "aprv"), ("dismiss", "rjct"), ("hedge", "ntrl")]),
}

_FILLERS = (
    "the a of was says post notes claim story line reply quote page reader "
    "writer board day item view note word turn part case fact"
).split()

_CONTEXT_KIND = {"debates": "post", "news": "article", "social media": "tweet", "various": "sentence"}


def suite_descriptors() -> list[DatasetDescriptor]:
    descriptors = []
    for name, (group, target_kind, labels) in DATASETS.items():
        descriptors.append(
            DatasetDescriptor(
                name=name,
                source_group=group,
                target_kind=target_kind,
                context_kind=_CONTEXT_KIND[group],
                labels=tuple(label for label, _ in labels),
            )
        )
    return descriptors


def suite_group_table() -> dict[tuple[str, str], str]:
    return {
        (name, label): FLAVORS[flavor][1]
        for name, (_, _, labels) in DATASETS.items()
        for label, flavor in labels
    }


def suite_space() -> LabelSpace:
    return build_label_space(suite_descriptors(), group_table=suite_group_table())


def build_suite(seed: int = 20240, train_n: int = 96, dev_n: int = 24, test_n: int = 24) -> Corpus:
    rng = random.Random(seed)
    examples: dict[tuple[str, str], list[StanceExample]] = {}
    for name, (_, target_kind, labels) in DATASETS.items():
        for split, count in (("train", train_n), ("dev", dev_n), ("test", test_n)):
            rows = []
            for i in range(count):
                label, flavor = labels[i % len(labels)]
                signature = FLAVORS[flavor][0]
                words = rng.sample(_FILLERS, rng.randint(4, 7))
                words.insert(rng.randrange(len(words) + 1), signature)
                words.append(f"mark{name}")
                target = "" if target_kind == "none" else f"topic {rng.randint(0, 6)}"
                rows.append(
                    StanceExample(
                        id=f"{name}-{split}-{i:04d}",
                        dataset=name,
                        split=split,
                        target=target,
                        context=" ".join(words),
                        label=label,
                    )
                )
            rng.shuffle(rows)
            examples[(name, split)] = rows
    return Corpus(suite_descriptors(), examples)


# =========================================================================
# Toy label-name embeddings
# =========================================================================

_GROUP_AXIS = {"positive": 0, "negative": 1, "discuss": 2, "other": 3, "neutral": 4}
# The two positive flavors sit on opposite sides of axis 5.
_FLAVOR_OFFSET = {"aprv": 0.6, "prse": -0.6}


def _word_vector(flavor: str) -> np.ndarray:
    vec = np.zeros(8)
    vec[_GROUP_AXIS[FLAVORS[flavor][1]]] = 1.0
    if flavor in _FLAVOR_OFFSET:
        vec[5] = _FLAVOR_OFFSET[flavor]
    return vec


def name_vectors() -> dict[str, np.ndarray]:
    vocab: dict[str, np.ndarray] = {}
    for _, (_, _, labels) in DATASETS.items():
        for label, flavor in labels:
            for word in label.split():
                vocab[word] = _word_vector(flavor)
    return vocab


def name_table() -> EmbeddingTable:
    return EmbeddingTable(kind=STATIC_WORD, dim=8, vocab=name_vectors())


def write_vectors_file(path) -> None:
    vocab = name_vectors()
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{len(vocab)} 8\n")
        for word, vec in vocab.items():
            f.write(word + " " + " ".join(f"{x:.3f}" for x in vec) + "\n")


def write_group_table(path) -> None:
    """Suite group table in the JSON-lines shape the package loads."""
    import json

    with open(path, "w", encoding="utf-8") as f:
        for (dataset, label), group in suite_group_table().items():
            f.write(json.dumps({"dataset": dataset, "label": label, "group": group}) + "\n")
