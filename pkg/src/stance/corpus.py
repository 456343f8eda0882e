"""Unified stance corpus: loading, validation, statistics, and sampling.

Every dataset is stored as JSON lines under ``<root>/<dataset>/<split>.jsonl``
with one record per example:

    {"id": "arc-train-001", "dataset": "arc", "split": "train",
     "target": "...", "context": "...", "label": "agree"}

Unknown extra keys are ignored.  The built-in registry describes the sixteen
supported datasets (inventory, source group, target/context kind and the
reference split sizes); a user-supplied registry file of the same shape can
replace or extend it.
"""

from __future__ import annotations

import json
import logging
import random
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .errors import DatasetNotFoundError, SchemaViolationError, StanceError, UnknownDatasetError

logger = logging.getLogger(__name__)

SPLITS = ("train", "dev", "test")

SOURCE_GROUPS = ("debates", "news", "social media", "various")
TARGET_KINDS = ("claim", "headline", "person", "topic", "none")
CONTEXT_KINDS = ("article", "claim", "post", "thread", "sentence", "tweet")

_REQUIRED_KEYS = ("id", "dataset", "split", "target", "context", "label")

# Word-level tokenizer used for vocabulary statistics.  Case is preserved.
# Keeps contractions together ("don't") and emits punctuation runs as single
# tokens so URLs and emoticons do not explode into many one-char types.
_WORD_RE = re.compile(r"\w+(?:'\w+)*|[^\w\s]+")


def tokenize_words(text: str) -> list[str]:
    return _WORD_RE.findall(text)


def load_stopwords() -> frozenset[str]:
    """Fixed English stop-word list shipped with the package (lowercase)."""
    raw = resources.files("stance.data").joinpath("stopwords.txt").read_text("utf-8")
    return frozenset(w for w in raw.splitlines() if w)


# =========================================================================
# Schema types
# =========================================================================


@dataclass
class StanceExample:
    """One target/context pair with its gold stance label."""

    id: str
    dataset: str
    split: str
    target: str
    context: str
    label: str

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "dataset": self.dataset,
            "split": self.split,
            "target": self.target,
            "context": self.context,
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, record: dict) -> "StanceExample":
        missing = [k for k in _REQUIRED_KEYS if k not in record]
        if missing:
            raise SchemaViolationError(f"record {record.get('id', '<no id>')!r} is missing keys {missing}")
        return cls(**{k: record[k] for k in _REQUIRED_KEYS})


@dataclass(frozen=True)
class SplitStats:
    train: int
    dev: int
    test: int

    @property
    def total(self) -> int:
        return self.train + self.dev + self.test

    def to_dict(self) -> dict:
        return {"train": self.train, "dev": self.dev, "test": self.test, "total": self.total}


@dataclass(frozen=True)
class VocabStats:
    unique_words: int
    mean_tokens: float
    p25_tokens: float
    median_tokens: float
    max_tokens: int

    def to_dict(self) -> dict:
        return {
            "unique_words": self.unique_words,
            "mean_tokens": self.mean_tokens,
            "p25_tokens": self.p25_tokens,
            "median_tokens": self.median_tokens,
            "max_tokens": self.max_tokens,
        }


@dataclass(frozen=True)
class DatasetDescriptor:
    """Static description of one dataset.

    ``labels`` is the canonical inventory in its fixed order; masks and the
    global label index are built from it.  ``expected_splits`` carries the
    reference split sizes used by data-dependent checks and may be ``None``
    for user-defined datasets.
    """

    name: str
    source_group: str
    target_kind: str
    context_kind: str
    labels: tuple[str, ...]
    expected_splits: SplitStats | None = None

    def __post_init__(self) -> None:
        if self.source_group not in SOURCE_GROUPS:
            raise ValueError(f"unknown source group {self.source_group!r} for dataset {self.name!r}")
        if self.target_kind not in TARGET_KINDS:
            raise ValueError(f"unknown target kind {self.target_kind!r} for dataset {self.name!r}")
        if self.context_kind not in CONTEXT_KINDS:
            raise ValueError(f"unknown context kind {self.context_kind!r} for dataset {self.name!r}")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError(f"duplicate labels in inventory of dataset {self.name!r}")
        if not self.labels:
            raise ValueError(f"dataset {self.name!r} has an empty label inventory")

    @property
    def allows_empty_target(self) -> bool:
        return self.target_kind == "none"


def _d(name, group, target_kind, context_kind, labels, splits):
    return DatasetDescriptor(
        name=name,
        source_group=group,
        target_kind=target_kind,
        context_kind=context_kind,
        labels=tuple(labels),
        expected_splits=SplitStats(*splits),
    )


#: The sixteen supported datasets, grouped by source and ordered as in the
#: canonical overview table.  This ordering fixes the global label index.
REGISTRY: tuple[DatasetDescriptor, ...] = (
    _d("arc", "debates", "headline", "post", ["unrelated", "disagree", "agree", "discuss"], (12382, 1851, 3559)),
    _d("iac1", "debates", "topic", "thread", ["pro", "anti", "other"], (4227, 454, 924)),
    _d("perspectrum", "debates", "claim", "sentence", ["support", "undermine"], (6978, 2071, 2773)),
    _d("poldeb", "debates", "topic", "post", ["for", "against"], (4753, 1151, 1230)),
    _d("scd", "debates", "none", "post", ["for", "against"], (3251, 624, 964)),
    _d("emergent", "news", "headline", "article", ["for", "observing", "against"], (1770, 301, 524)),
    _d("fnc1", "news", "headline", "article", ["unrelated", "discuss", "agree", "disagree"], (42476, 7496, 25413)),
    _d("snopes", "news", "claim", "article", ["agree", "refute"], (14416, 1868, 3154)),
    _d("mtsd", "social media", "person", "tweet", ["against", "favor", "none"], (3718, 520, 1092)),
    _d("rumor", "social media", "topic", "tweet", ["endorse", "deny", "unrelated", "question", "neutral"], (6093, 471, 505)),
    _d("semeval2016t6", "social media", "topic", "tweet", ["against", "none", "favor"], (2497, 417, 1249)),
    _d("semeval2019t7", "social media", "none", "tweet", ["comment", "support", "query", "deny"], (5217, 1485, 1827)),
    _d("wtwt", "social media", "claim", "tweet", ["comment", "unrelated", "support", "refute"], (25193, 7897, 18194)),
    _d("argmin", "various", "topic", "sentence", ["argument against", "argument for"], (6845, 1568, 2726)),
    _d("ibmcs", "various", "topic", "claim", ["pro", "con"], (935, 104, 1355)),
    _d("vast", "various", "topic", "post", ["con", "pro", "neutral"], (13477, 2062, 3006)),
)

REGISTRY_BY_NAME = {d.name: d for d in REGISTRY}


def load_registry(path: str | Path) -> tuple[DatasetDescriptor, ...]:
    """Read a registry file: a JSON list of descriptor objects.

    Each object needs ``name``, ``source_group``, ``target_kind``,
    ``context_kind`` and ``labels``; ``split_sizes`` (train/dev/test) is
    optional.
    """
    with open(path, encoding="utf-8") as f:
        raw = json.load(f)
    if not isinstance(raw, list) or not raw:
        raise StanceError(f"registry file {path} must hold a non-empty JSON list")
    descriptors = []
    for obj in raw:
        sizes = obj.get("split_sizes")
        expected = SplitStats(sizes["train"], sizes["dev"], sizes["test"]) if sizes else None
        descriptors.append(
            DatasetDescriptor(
                name=obj["name"],
                source_group=obj["source_group"],
                target_kind=obj["target_kind"],
                context_kind=obj["context_kind"],
                labels=tuple(obj["labels"]),
                expected_splits=expected,
            )
        )
    names = [d.name for d in descriptors]
    if len(set(names)) != len(names):
        raise StanceError(f"registry file {path} contains duplicate dataset names")
    return tuple(descriptors)


# =========================================================================
# Corpus container
# =========================================================================


class Corpus:
    """In-memory corpus: descriptors plus examples keyed by dataset and split."""

    def __init__(
        self,
        descriptors: Sequence[DatasetDescriptor],
        examples: dict[tuple[str, str], list[StanceExample]],
    ) -> None:
        self.descriptors: dict[str, DatasetDescriptor] = {d.name: d for d in descriptors}
        self._examples = {key: list(value) for key, value in examples.items()}
        for (name, split) in self._examples:
            if name not in self.descriptors:
                raise UnknownDatasetError(f"examples given for {name!r} which has no descriptor")
            if split not in SPLITS:
                raise SchemaViolationError(f"unknown split {split!r} for dataset {name!r}")
        self._validate()

    # -- access ------------------------------------------------------------

    @property
    def datasets(self) -> tuple[str, ...]:
        return tuple(self.descriptors)

    def descriptor(self, dataset: str) -> DatasetDescriptor:
        try:
            return self.descriptors[dataset]
        except KeyError:
            raise UnknownDatasetError(f"dataset {dataset!r} is not part of this corpus") from None

    def examples(self, dataset: str, split: str) -> list[StanceExample]:
        self.descriptor(dataset)
        if split not in SPLITS:
            raise SchemaViolationError(f"unknown split {split!r}")
        return self._examples.get((dataset, split), [])

    def all_examples(self, dataset: str) -> list[StanceExample]:
        out: list[StanceExample] = []
        for split in SPLITS:
            out.extend(self.examples(dataset, split))
        return out

    def subset(self, datasets: Sequence[str]) -> "Corpus":
        """A corpus restricted to the given datasets, order preserved."""
        descriptors = [self.descriptor(name) for name in datasets]
        examples = {
            (name, split): self.examples(name, split) for name in datasets for split in SPLITS
        }
        return Corpus(descriptors, examples)

    # -- validation ----------------------------------------------------------

    def _validate(self) -> None:
        for name, desc in self.descriptors.items():
            inventory = set(desc.labels)
            seen: dict[str, str] = {}
            for split in SPLITS:
                split_ids = set()
                for ex in self._examples.get((name, split), []):
                    if ex.dataset != name:
                        raise SchemaViolationError(
                            f"record {ex.id!r} carries dataset {ex.dataset!r} but is filed under {name!r}"
                        )
                    if ex.split != split:
                        raise SchemaViolationError(
                            f"record {ex.id!r} carries split {ex.split!r} but is filed under {split!r}"
                        )
                    if ex.label not in inventory:
                        raise SchemaViolationError(
                            f"record {ex.id!r} has label {ex.label!r} outside the {name!r} inventory"
                        )
                    if not ex.context:
                        raise SchemaViolationError(f"record {ex.id!r} has an empty context")
                    if not ex.target and not desc.allows_empty_target:
                        raise SchemaViolationError(
                            f"record {ex.id!r} has an empty target but dataset {name!r} requires one"
                        )
                    if ex.id in split_ids:
                        raise SchemaViolationError(f"duplicate id {ex.id!r} in {name}/{split}")
                    split_ids.add(ex.id)
                    if ex.id in seen:
                        raise SchemaViolationError(
                            f"id {ex.id!r} appears in both {seen[ex.id]!r} and {split!r} of {name!r}"
                        )
                for ex_id in split_ids:
                    seen[ex_id] = split

    # -- statistics ----------------------------------------------------------

    def split_stats(self, dataset: str) -> SplitStats:
        self.descriptor(dataset)
        counts = [len(self._examples.get((dataset, split), [])) for split in SPLITS]
        return SplitStats(*counts)

    def vocab_stats(self, dataset: str, tokenizer: Callable[[str], list[str]] | None = None) -> VocabStats:
        """Unique token types and per-example token-length statistics.

        Types are counted over targets and contexts of all splits with case
        preserved; the length of an example is the token count of its target
        plus that of its context.
        """
        tokenizer = tokenizer or tokenize_words
        examples = self.all_examples(dataset)
        if not examples:
            raise StanceError(f"dataset {dataset!r} has no examples to compute vocabulary statistics")
        types: set[str] = set()
        lengths = []
        for ex in examples:
            target_tokens = tokenizer(ex.target) if ex.target else []
            context_tokens = tokenizer(ex.context)
            types.update(target_tokens)
            types.update(context_tokens)
            lengths.append(len(target_tokens) + len(context_tokens))
        arr = np.asarray(lengths, dtype=float)
        return VocabStats(
            unique_words=len(types),
            mean_tokens=float(arr.mean()),
            p25_tokens=float(np.percentile(arr, 25)),
            median_tokens=float(np.median(arr)),
            max_tokens=int(arr.max()),
        )

    def _word_types(self, dataset: str, stopwords: frozenset[str]) -> set[str]:
        types: set[str] = set()
        for ex in self.all_examples(dataset):
            for text in (ex.target, ex.context):
                if not text:
                    continue
                for token in tokenize_words(text):
                    # Only word-like types take part in vocabulary overlap;
                    # punctuation runs would make every pair of datasets look alike.
                    if token.lower() in stopwords or not any(c.isalnum() for c in token):
                        continue
                    types.add(token)
        return types

    def overlap_matrix(self, datasets: Sequence[str] | None = None) -> tuple[list[str], np.ndarray]:
        """Pairwise vocabulary overlap.

        Entry (i, j) is the fraction of word types of dataset i that also
        occur in dataset j, after stop-word removal and with case preserved.
        The diagonal is exactly 1.  Note the matrix is not symmetric.
        """
        names = list(datasets) if datasets is not None else list(self.datasets)
        stopwords = load_stopwords()
        type_sets = {}
        for name in names:
            types = self._word_types(name, stopwords)
            if not types:
                raise StanceError(f"dataset {name!r} has an empty vocabulary after stop-word removal")
            type_sets[name] = types
        matrix = np.zeros((len(names), len(names)), dtype=float)
        for i, a in enumerate(names):
            for j, b in enumerate(names):
                if i == j:
                    matrix[i, j] = 1.0
                else:
                    matrix[i, j] = len(type_sets[a] & type_sets[b]) / len(type_sets[a])
        return names, matrix

    # -- sampling ------------------------------------------------------------

    def sample_proportional(
        self,
        n: int,
        seed: int,
        datasets: Sequence[str] | None = None,
        splits: Sequence[str] = SPLITS,
    ) -> list[StanceExample]:
        """Draw ``n`` examples with per-dataset quotas proportional to size.

        Quotas follow the largest-remainder rule: every dataset gets the
        floor of its proportional share, and the leftover slots go to the
        largest fractional remainders (ties broken by corpus order).  Within
        a dataset the draw is uniform without replacement and deterministic
        for a fixed seed.
        """
        names = list(datasets) if datasets is not None else list(self.datasets)
        pools = {
            name: [ex for split in splits for ex in self.examples(name, split)] for name in names
        }
        sizes = {name: len(pools[name]) for name in names}
        total = sum(sizes.values())
        if n < 0:
            raise ValueError("sample size must be non-negative")
        if n > total:
            raise StanceError(f"requested {n} examples but only {total} are available")
        quotas = _largest_remainder_quotas([sizes[name] for name in names], n)
        rng = random.Random(seed)
        sampled: list[StanceExample] = []
        for name, quota in zip(names, quotas):
            if quota:
                sampled.extend(rng.sample(pools[name], quota))
        return sampled


def _largest_remainder_quotas(sizes: Sequence[int], n: int) -> list[int]:
    total = sum(sizes)
    if total == 0:
        if n > 0:
            raise StanceError("cannot sample from an empty population")
        return [0] * len(sizes)
    shares = [n * s / total for s in sizes]
    quotas = [int(share) for share in shares]
    leftover = n - sum(quotas)
    remainders = sorted(range(len(sizes)), key=lambda i: (-(shares[i] - quotas[i]), i))
    for i in remainders[:leftover]:
        quotas[i] += 1
    return quotas


# =========================================================================
# Disk I/O
# =========================================================================


def _iter_records(path: Path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaViolationError(f"{path}:{line_no}: invalid JSON ({exc})") from exc


def load_corpus(
    root: str | Path,
    datasets: Sequence[str] | None = None,
    registry: Sequence[DatasetDescriptor] | None = None,
) -> Corpus:
    """Load prepared unified-format files from ``<root>/<dataset>/<split>.jsonl``.

    A dataset with no files at all raises :class:`DatasetNotFoundError`;
    individual missing split files load as empty splits, and a present file
    with zero records is an accepted empty split.
    """
    root = Path(root)
    registry = tuple(registry) if registry is not None else REGISTRY
    by_name = {d.name: d for d in registry}
    if datasets is None:
        names = [d.name for d in registry if (root / d.name).is_dir()]
        if not names:
            raise DatasetNotFoundError(f"no known dataset directories under {root}")
    else:
        names = list(datasets)
    examples: dict[tuple[str, str], list[StanceExample]] = {}
    descriptors = []
    for name in names:
        if name not in by_name:
            raise UnknownDatasetError(f"dataset {name!r} is not in the registry")
        desc = by_name[name]
        descriptors.append(desc)
        dataset_dir = root / name
        split_paths = {split: dataset_dir / f"{split}.jsonl" for split in SPLITS}
        if not any(path.is_file() for path in split_paths.values()):
            raise DatasetNotFoundError(f"no prepared files for dataset {name!r} under {dataset_dir}")
        for split, path in split_paths.items():
            if not path.is_file():
                examples[(name, split)] = []
                continue
            examples[(name, split)] = [StanceExample.from_dict(rec) for rec in _iter_records(path)]
    corpus = Corpus(descriptors, examples)
    logger.info("loaded %d datasets from %s", len(names), root)
    return corpus


def save_corpus(corpus: Corpus, root: str | Path) -> None:
    """Write every dataset of ``corpus`` as ``<root>/<dataset>/<split>.jsonl``."""
    root = Path(root)
    for name in corpus.datasets:
        dataset_dir = root / name
        dataset_dir.mkdir(parents=True, exist_ok=True)
        for split in SPLITS:
            with open(dataset_dir / f"{split}.jsonl", "w", encoding="utf-8") as f:
                for ex in corpus.examples(name, split):
                    f.write(json.dumps(ex.to_dict(), ensure_ascii=False) + "\n")
