"""Label mapping for held-out datasets.

A model trained without a dataset still predicts into its own label space;
the three strategies here turn such predictions into the held-out
inventory:

* ``hard``: the model was trained on stance-group labels, and the predicted
  group is exchanged for the held-out label of that group.
* ``weak``: the model predicts a fine-grained in-domain label; candidates
  are the held-out labels sharing its stance group, and the name
  embeddings pick among them.
* ``soft``: the predicted label name is matched against all held-out label
  names purely by embedding similarity.

Whenever a stance group holds no held-out label, its neighborhood is
walked in order until one does.  Every strategy returns only labels of the
held-out inventory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .corpus import StanceExample
from .embeddings import EmbeddingTable, cosine, embed_label
from .errors import StanceError
from .labelspace import GROUPS, LabelId, LabelSpace
from .model import StanceMoLE

STRATEGIES = ("hard", "weak", "soft")


@dataclass
class OODPrediction:
    example_id: str
    in_domain: LabelId
    mapped: LabelId
    strategy: str
    score: float | None

    def to_dict(self) -> dict:
        return {
            "id": self.example_id,
            "in_domain_label": self.in_domain.qualified(),
            "mapped_label": self.mapped.name,
            "strategy": self.strategy,
            "score": self.score,
        }


def predict_in_domain(
    examples: Sequence[StanceExample],
    model: StanceMoLE,
    space: LabelSpace,
    datasets: Sequence[str] | None = None,
    restrict_to: str | None = None,
    batch_size: int = 64,
) -> list[LabelId]:
    """Argmax of the combined distribution under the union mask.

    The mask admits every label of ``datasets`` (all of the model's
    training datasets by default); ``restrict_to`` narrows it to a single
    dataset.  Probability ties resolve to the lower global index.
    """
    if restrict_to is not None:
        mask = space.mask_for(restrict_to)
    else:
        mask = space.union_mask(datasets if datasets is not None else space.datasets)
    out: list[LabelId] = []
    model.eval()
    for start in range(0, len(examples), batch_size):
        chunk = examples[start : start + batch_size]
        input_ids, attention_mask = model.encode_batch([(ex.context, ex.target) for ex in chunk])
        with torch.no_grad():
            forward = model.forward(input_ids, attention_mask, mask)
        indices = forward.combined_probs.double().numpy().argmax(axis=-1)
        out.extend(space.labels[int(i)] for i in indices)
    return out


# =========================================================================
# Mapping strategies
# =========================================================================


def _labels_in_group(
    group: str, held_out_labels: Sequence[LabelId], space: LabelSpace
) -> list[LabelId]:
    return [label for label in held_out_labels if space.hard_group_of(label) == group]


def _walk_to_populated_group(
    group: str, held_out_labels: Sequence[LabelId], space: LabelSpace
) -> tuple[str, list[LabelId]]:
    """The group itself, or the first neighbor that has a held-out label."""
    candidates = _labels_in_group(group, held_out_labels, space)
    if candidates:
        return group, candidates
    for neighbor in space.neighborhood_of(group):
        candidates = _labels_in_group(neighbor, held_out_labels, space)
        if candidates:
            return neighbor, candidates
    raise StanceError(f"no held-out label in group {group!r} or any of its neighbors")


def hard_map(group: str, held_out_labels: Sequence[LabelId], space: LabelSpace) -> LabelId:
    """The held-out label of the predicted stance group.

    Falls back to the group's neighborhood when the held-out inventory has
    no label in the group; several candidates keep inventory order.
    """
    if group not in GROUPS:
        raise StanceError(f"unknown stance group {group!r}")
    if not held_out_labels:
        raise StanceError("held-out inventory is empty")
    _, candidates = _walk_to_populated_group(group, held_out_labels, space)
    return candidates[0]


def soft_map(
    predicted: LabelId,
    held_out_labels: Sequence[LabelId],
    table: EmbeddingTable,
) -> tuple[LabelId, float]:
    """The held-out label whose name embedding is closest to the prediction's.

    Only the bare label names are compared; the dataset qualifier plays no
    role.  Similarity ties keep the earliest label in inventory order.
    """
    if not held_out_labels:
        raise StanceError("held-out inventory is empty")
    query = embed_label(table, predicted.name)
    best_label, best_score = None, -np.inf
    for label in held_out_labels:
        score = cosine(query, embed_label(table, label.name))
        if score > best_score:
            best_label, best_score = label, score
    assert best_label is not None
    return best_label, float(best_score)


def weak_map(
    predicted: LabelId,
    held_out_labels: Sequence[LabelId],
    space: LabelSpace,
    table: EmbeddingTable,
) -> tuple[LabelId, float | None]:
    """Group-constrained similarity mapping.

    Candidates are the held-out labels in the predicted label's stance
    group (neighborhood fallback as for ``hard``); with more than one
    candidate the name embeddings decide, and a lone candidate is taken
    without consulting them (score ``None``).
    """
    if not held_out_labels:
        raise StanceError("held-out inventory is empty")
    group = space.hard_group_of(predicted)
    _, candidates = _walk_to_populated_group(group, held_out_labels, space)
    if len(candidates) == 1:
        return candidates[0], None
    mapped, score = soft_map(predicted, candidates, table)
    return mapped, score


# =========================================================================
# End-to-end prediction
# =========================================================================


def predict_ood(
    examples: Sequence[StanceExample],
    model: StanceMoLE,
    model_space: LabelSpace,
    full_space: LabelSpace,
    held_out: str,
    strategy: str,
    table: EmbeddingTable | None = None,
    batch_size: int = 64,
    restrict_to: str | None = None,
) -> list[OODPrediction]:
    """Predict in-domain, then map every prediction into ``held_out``.

    ``model_space`` is the space the model was trained with;
    ``full_space`` must also contain the held-out dataset and carries the
    group table used for mapping.  ``hard`` expects a model trained on
    group labels and needs no embedding table; ``weak`` and ``soft``
    require one.  ``restrict_to`` narrows the in-domain mask to a single
    training dataset.
    """
    if strategy not in STRATEGIES:
        raise StanceError(f"unknown mapping strategy {strategy!r}")
    if strategy in ("weak", "soft") and table is None:
        raise StanceError(f"strategy {strategy!r} requires label-name embeddings")
    held_out_labels = full_space.inventory(held_out)
    in_domain = predict_in_domain(
        examples, model, model_space, batch_size=batch_size, restrict_to=restrict_to
    )
    predictions: list[OODPrediction] = []
    for ex, pred in zip(examples, in_domain):
        if strategy == "hard":
            if pred.name not in GROUPS:
                raise StanceError(
                    f"hard mapping needs a group-labeled model, got prediction {pred.qualified()!r}"
                )
            mapped = hard_map(pred.name, held_out_labels, full_space)
            score = None
        elif strategy == "weak":
            mapped, score = weak_map(pred, held_out_labels, full_space, table)
        else:
            mapped, score = soft_map(pred, held_out_labels, table)
        predictions.append(
            OODPrediction(
                example_id=ex.id, in_domain=pred, mapped=mapped, strategy=strategy, score=score
            )
        )
    return predictions


def write_predictions(predictions: Sequence[OODPrediction], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for pred in predictions:
            f.write(json.dumps(pred.to_dict(), ensure_ascii=False) + "\n")


def read_prediction_records(path: str | Path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records
