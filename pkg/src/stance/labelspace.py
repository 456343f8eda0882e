"""Global label space over dataset-qualified labels.

Labels are never shared between datasets: ``("fnc1", "agree")`` and
``("arc", "agree")`` are distinct entries of the global index.  The space
also carries the stance-group table used for cross-dataset label mapping
(five groups: positive, negative, discuss, other, neutral) and the ordered
neighborhood of each group.

Both tables ship as JSON-lines data files.  The group table comes in two
variants: ``verbatim`` keeps the hand-written table exactly as curated,
which omits ``ibmcs/pro`` and ``semeval2016t6/none``; ``repaired`` (the
default) adds ``ibmcs/pro -> positive`` and ``semeval2016t6/none -> other``
so that every label of the sixteen inventories has a group.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import Corpus, DatasetDescriptor, StanceExample
from .errors import StanceError, UnknownDatasetError, UnmappedLabelError

GROUPS = ("positive", "negative", "discuss", "other", "neutral")

GroupTable = Mapping[tuple[str, str], str]


@dataclass(frozen=True)
class LabelId:
    """One dataset-qualified label and its position in the global index."""

    dataset: str
    name: str
    global_index: int

    def qualified(self) -> str:
        return f"{self.dataset}/{self.name}"


def _read_jsonl(path) -> list[dict]:
    rows = []
    for line in path.read_text("utf-8").splitlines():
        line = line.strip()
        if line:
            rows.append(json.loads(line))
    return rows


def load_group_table(source: str | Path = "repaired") -> dict[tuple[str, str], str]:
    """Load a stance-group table.

    ``source`` is either one of the packaged variants (``"repaired"``,
    ``"verbatim"``) or a path to a JSON-lines file with
    ``{"dataset", "label", "group"}`` rows.
    """
    if source in ("repaired", "verbatim"):
        path = resources.files("stance.data").joinpath(f"hard_groups_{source}.jsonl")
    else:
        path = Path(source)
        if not path.is_file():
            raise StanceError(f"group table {source!r} is neither a packaged variant nor a file")
    table: dict[tuple[str, str], str] = {}
    for row in _read_jsonl(path):
        group = row["group"]
        if group not in GROUPS:
            raise StanceError(f"group table entry {row} uses unknown group {group!r}")
        key = (row["dataset"], row["label"])
        if key in table:
            raise StanceError(f"group table assigns {key} twice")
        table[key] = group
    return table


def load_neighborhoods(source: str | Path | None = None) -> dict[str, tuple[str, ...]]:
    """Load the ordered neighbor list of every stance group."""
    if source is None:
        path = resources.files("stance.data").joinpath("group_neighborhoods.jsonl")
    else:
        path = Path(source)
    table = {row["group"]: tuple(row["neighbors"]) for row in _read_jsonl(path)}
    for group, neighbors in table.items():
        if group not in GROUPS or any(n not in GROUPS for n in neighbors):
            raise StanceError(f"neighborhood entry for {group!r} names an unknown group")
    return table


class LabelSpace:
    """Fixed, versioned ordering of all dataset-qualified labels."""

    def __init__(
        self,
        descriptors: Sequence[DatasetDescriptor],
        group_table: GroupTable,
        neighborhoods: Mapping[str, tuple[str, ...]],
        table_variant: str,
    ) -> None:
        self.descriptors = tuple(descriptors)
        self.labels: tuple[LabelId, ...] = tuple(
            LabelId(desc.name, label, index)
            for index, (desc, label) in enumerate(
                (desc, label) for desc in descriptors for label in desc.labels
            )
        )
        self.datasets: tuple[str, ...] = tuple(d.name for d in descriptors)
        self._by_key = {(lab.dataset, lab.name): lab for lab in self.labels}
        self._masks: dict[str, np.ndarray] = {}
        for desc in descriptors:
            mask = np.zeros(len(self.labels), dtype=bool)
            for label in desc.labels:
                mask[self._by_key[(desc.name, label)].global_index] = True
            self._masks[desc.name] = mask
        self.hard_groups: dict[tuple[str, str], str] = {
            key: group for key, group in group_table.items() if key[0] in self._masks
        }
        self.neighborhoods = dict(neighborhoods)
        digest = hashlib.sha1(
            "\n".join(f"{lab.dataset}/{lab.name}" for lab in self.labels).encode("utf-8")
        ).hexdigest()[:8]
        self.version = f"{table_variant}-{digest}"

    # -- basic lookup --------------------------------------------------------

    @property
    def size(self) -> int:
        return len(self.labels)

    def label_of(self, dataset: str, name: str) -> LabelId:
        try:
            return self._by_key[(dataset, name)]
        except KeyError:
            raise UnknownDatasetError(
                f"label {name!r} of dataset {dataset!r} is not part of this label space"
            ) from None

    def inventory(self, dataset: str) -> tuple[LabelId, ...]:
        if dataset not in self._masks:
            raise UnknownDatasetError(f"dataset {dataset!r} is not part of this label space")
        return tuple(lab for lab in self.labels if lab.dataset == dataset)

    def mask_for(self, dataset: str) -> np.ndarray:
        try:
            return self._masks[dataset].copy()
        except KeyError:
            raise UnknownDatasetError(f"dataset {dataset!r} is not part of this label space") from None

    def union_mask(self, datasets: Iterable[str]) -> np.ndarray:
        mask = np.zeros(self.size, dtype=bool)
        counted = 0
        for name in datasets:
            mask |= self.mask_for(name)
            counted += 1
        if counted == 0:
            raise StanceError("union mask over an empty dataset collection")
        return mask

    # -- stance groups ---------------------------------------------------------

    def hard_group_of(self, label: LabelId | tuple[str, str]) -> str:
        key = (label.dataset, label.name) if isinstance(label, LabelId) else tuple(label)
        try:
            return self.hard_groups[key]
        except KeyError:
            raise UnmappedLabelError(
                f"label {key[1]!r} of dataset {key[0]!r} has no entry in the "
                f"stance-group table ({self.version})"
            ) from None

    def neighborhood_of(self, group: str) -> tuple[str, ...]:
        try:
            return self.neighborhoods[group]
        except KeyError:
            raise UnmappedLabelError(f"unknown stance group {group!r}") from None


def build_label_space(
    descriptors: Sequence[DatasetDescriptor],
    group_table: GroupTable | str | Path = "repaired",
    neighborhoods: Mapping[str, tuple[str, ...]] | str | Path | None = None,
) -> LabelSpace:
    """Build the global label index over ``descriptors`` in their given order.

    ``group_table`` may be a packaged variant name, a file path, or an
    already-loaded mapping; ``neighborhoods`` likewise (``None`` loads the
    packaged table).
    """
    if isinstance(group_table, (str, Path)):
        variant = group_table if group_table in ("repaired", "verbatim") else Path(group_table).stem
        table = load_group_table(group_table)
    else:
        variant, table = "custom", dict(group_table)
    if neighborhoods is None or isinstance(neighborhoods, (str, Path)):
        neighborhoods = load_neighborhoods(neighborhoods)
    return LabelSpace(descriptors, table, neighborhoods, str(variant))


def meta_relabel(corpus: Corpus, space: LabelSpace) -> Corpus:
    """Replace every label with its stance group, merging inventories.

    The returned corpus has the same datasets and examples but each
    example's label is the (lowercase) group name, and each dataset's
    inventory is its list of distinct groups in first-appearance order.
    Input that is already group-labeled is rejected rather than mapped
    twice.
    """
    new_descriptors = []
    for name in corpus.datasets:
        desc = corpus.descriptor(name)
        groups: list[str] = []
        for label in desc.labels:
            if label in GROUPS and (name, label) not in space.hard_groups:
                raise UnmappedLabelError(
                    f"dataset {name!r} already carries group labels; refusing to relabel twice"
                )
            group = space.hard_group_of((name, label))
            if group not in groups:
                groups.append(group)
        new_descriptors.append(
            DatasetDescriptor(
                name=desc.name,
                source_group=desc.source_group,
                target_kind=desc.target_kind,
                context_kind=desc.context_kind,
                labels=tuple(groups),
                expected_splits=desc.expected_splits,
            )
        )
    examples: dict[tuple[str, str], list[StanceExample]] = {}
    for name in corpus.datasets:
        for split in ("train", "dev", "test"):
            examples[(name, split)] = [
                StanceExample(
                    id=ex.id,
                    dataset=ex.dataset,
                    split=ex.split,
                    target=ex.target,
                    context=ex.context,
                    label=space.hard_group_of((name, ex.label)),
                )
                for ex in corpus.examples(name, split)
            ]
    return Corpus(new_descriptors, examples)
