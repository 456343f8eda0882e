from __future__ import annotations

import json

import pytest

from stance.corpus import Corpus, DatasetDescriptor, StanceExample


def make_example(dataset, split, i, label, target="some topic", context="some context"):
    return StanceExample(
        id=f"{dataset}-{split}-{i}",
        dataset=dataset,
        split=split,
        target=target,
        context=context,
        label=label,
    )


def two_dataset_descriptors():
    return [
        DatasetDescriptor("alpha", "debates", "topic", "post", ("yes", "no")),
        DatasetDescriptor("beta", "news", "headline", "article", ("good", "bad", "meh")),
    ]


@pytest.fixture
def two_dataset_corpus():
    examples = {}
    for name, labels in (("alpha", ("yes", "no")), ("beta", ("good", "bad", "meh"))):
        for split, count in (("train", 6), ("dev", 2), ("test", 2)):
            examples[(name, split)] = [
                make_example(name, split, i, labels[i % len(labels)], context=f"context words {name} {i}")
                for i in range(count)
            ]
    return Corpus(two_dataset_descriptors(), examples)


def write_jsonl(path, records):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record) + "\n")


def write_registry(path, descriptors):
    payload = [
        {
            "name": d.name,
            "source_group": d.source_group,
            "target_kind": d.target_kind,
            "context_kind": d.context_kind,
            "labels": list(d.labels),
        }
        for d in descriptors
    ]
    path.write_text(json.dumps(payload), encoding="utf-8")
