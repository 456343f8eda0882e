"""Vector representations of label names.

Static word vectors are read from the common text format (one token per
line followed by its coordinates, optional ``count dim`` header).  A label
name is embedded as the mean of its in-vocabulary word vectors; words
missing from the table are dropped with a warning, and a name whose words
are all missing is an error.  Contextual tables delegate to an encoder and
receive the raw name unchanged.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import EmbeddingLookupError, StanceError

logger = logging.getLogger(__name__)

STATIC_WORD = "static-word"
CONTEXTUAL_ENCODER = "contextual-encoder"


@dataclass
class EmbeddingTable:
    kind: str
    dim: int
    vocab: dict[str, np.ndarray] = field(default_factory=dict)
    encode: Callable[[str], np.ndarray] | None = None

    def __post_init__(self) -> None:
        if self.kind not in (STATIC_WORD, CONTEXTUAL_ENCODER):
            raise StanceError(f"unknown embedding table kind {self.kind!r}")
        if self.kind == CONTEXTUAL_ENCODER and self.encode is None:
            raise StanceError("contextual table needs an encode function")


def load_vectors(path: str | Path, kind: str = STATIC_WORD) -> EmbeddingTable:
    """Parse a word-vector text file into an :class:`EmbeddingTable`."""
    path = Path(path)
    vocab: dict[str, np.ndarray] = {}
    dim: int | None = None
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            if line_no == 1 and len(parts) == 2 and all(p.lstrip("-").isdigit() for p in parts):
                # fastText-style header: vocabulary size and dimensionality.
                dim = int(parts[1])
                continue
            word, coords = parts[0], parts[1:]
            if dim is None:
                dim = len(coords)
            if len(coords) != dim:
                raise StanceError(
                    f"{path}:{line_no}: expected {dim} coordinates for {word!r}, got {len(coords)}"
                )
            vocab.setdefault(word, np.asarray(coords, dtype=np.float64))
    if not vocab or dim is None:
        raise StanceError(f"vector file {path} holds no vectors")
    return EmbeddingTable(kind=kind, dim=dim, vocab=vocab)


def embed_label(table: EmbeddingTable, name: str, lowercase: bool = True) -> np.ndarray:
    """Embed a label name.

    Static tables average the vectors of the whitespace-separated words of
    the name (lowercased before lookup by default).  Contextual tables
    encode the raw name in one piece.
    """
    if not name or not name.strip():
        raise EmbeddingLookupError("cannot embed an empty label name")
    if table.kind == CONTEXTUAL_ENCODER:
        assert table.encode is not None
        return np.asarray(table.encode(name), dtype=np.float64)
    words = name.split()
    if lowercase:
        words = [w.lower() for w in words]
    present = [table.vocab[w] for w in words if w in table.vocab]
    missing = [w for w in words if w not in table.vocab]
    if not present:
        raise EmbeddingLookupError(f"no word of label name {name!r} is in the vector table")
    if missing:
        logger.warning("label name %r: dropping out-of-vocabulary words %s", name, missing)
    return np.mean(np.stack(present), axis=0)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu, nv = float(np.linalg.norm(u)), float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise StanceError("cosine similarity of a zero vector is undefined")
    return float(np.dot(u, v) / (nu * nv))


def nearest_label(
    query: np.ndarray, candidates: Sequence[tuple[str, np.ndarray]]
) -> tuple[str, float]:
    """The candidate name whose vector is closest to ``query`` by cosine.

    Ties keep the earliest candidate.
    """
    if not candidates:
        raise StanceError("nearest_label needs at least one candidate")
    best_name, best_score = None, -np.inf
    for name, vector in candidates:
        score = cosine(query, vector)
        if score > best_score:
            best_name, best_score = name, score
    assert best_name is not None
    return best_name, float(best_score)


def project_2d(vectors: np.ndarray) -> np.ndarray:
    """Project row vectors onto their two leading principal components.

    Components are orientation-fixed: each output column is flipped so that
    its largest-magnitude coordinate is positive, making the projection
    deterministic across runs and BLAS builds.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise StanceError("projection needs at least two vectors")
    centered = x - x.mean(axis=0, keepdims=True)
    if not np.any(centered):
        raise StanceError("projection of identical vectors is undefined")
    _, singular, vt = np.linalg.svd(centered, full_matrices=False)
    components = vt[:2]
    if components.shape[0] < 2:
        components = np.vstack([components, np.zeros_like(components[0])])
    scores = centered @ components.T
    for col in range(2):
        extreme = int(np.argmax(np.abs(scores[:, col])))
        if scores[extreme, col] < 0:
            scores[:, col] = -scores[:, col]
    return scores
