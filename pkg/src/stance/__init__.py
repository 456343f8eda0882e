"""Cross-domain stance detection with domain experts and label embeddings."""

__version__ = "0.1.0"

from .corpus import (
    REGISTRY,
    Corpus,
    DatasetDescriptor,
    SplitStats,
    StanceExample,
    VocabStats,
    load_corpus,
    load_registry,
    save_corpus,
)
from .errors import (
    DatasetNotFoundError,
    EmbeddingLookupError,
    SchemaViolationError,
    StanceError,
    TrainingDivergedError,
    UnknownDatasetError,
    UnmappedLabelError,
)
from .labelspace import GROUPS, LabelId, LabelSpace, build_label_space, meta_relabel

__all__ = [
    "REGISTRY",
    "GROUPS",
    "Corpus",
    "DatasetDescriptor",
    "LabelId",
    "LabelSpace",
    "SplitStats",
    "StanceExample",
    "VocabStats",
    "StanceError",
    "DatasetNotFoundError",
    "SchemaViolationError",
    "UnknownDatasetError",
    "UnmappedLabelError",
    "EmbeddingLookupError",
    "TrainingDivergedError",
    "build_label_space",
    "load_corpus",
    "load_registry",
    "meta_relabel",
    "save_corpus",
    "__version__",
]
