"""Feature schema, windowed collection stats, and tuple feature extraction."""

from .extract import (
    FeatureExtractor,
    extract_features,
    read_matrix,
    write_matrix,
)
from .schema import (
    ANCHOR_SIMILARITY_NAMES,
    FeatureGroup,
    FeatureSchema,
    FeatureSpec,
    MissingPolicy,
    build_feature_schema,
    shift_onehot_name,
)
from .stats import (
    CollectionStats,
    build_collection_vectors,
    build_user_representations,
    compute_collection_stats,
    shift_specificity,
)

__all__ = [
    "ANCHOR_SIMILARITY_NAMES",
    "CollectionStats",
    "FeatureExtractor",
    "FeatureGroup",
    "FeatureSchema",
    "FeatureSpec",
    "MissingPolicy",
    "build_collection_vectors",
    "build_feature_schema",
    "build_user_representations",
    "compute_collection_stats",
    "extract_features",
    "read_matrix",
    "shift_onehot_name",
    "shift_specificity",
    "write_matrix",
]
