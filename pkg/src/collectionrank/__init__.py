"""Curated-collection recommendation pipeline on a synthetic marketplace.

Subpackages follow the data flow: ``marketplace`` simulates the world and
sessions, ``embedding`` builds item/collection/user vectors, ``features``
extracts model inputs, ``dataset`` assembles labeled pairs, ``boost`` trains
the monotonicity-constrained booster, ``evaluation`` scores it offline and in
simulated experiments, and ``pipeline``/``cli`` wire the stages together.
"""

__version__ = "0.1.0"

from .errors import (
    CollectionRankError,
    ConfigError,
    DegenerateEmbeddingError,
    EmptyRegionError,
    MissingArtifactError,
    MissingEmbeddingError,
    ModelFormatError,
    ModelVersionError,
    PolicyViolationError,
    SchemaMismatchError,
    StaleArtifactError,
    StoreFormatError,
    TrainingError,
    UndefinedSimilarityError,
)
from .config import PipelineConfig, load_pipeline_config

__all__ = [
    "CollectionRankError",
    "ConfigError",
    "DegenerateEmbeddingError",
    "EmptyRegionError",
    "MissingArtifactError",
    "MissingEmbeddingError",
    "ModelFormatError",
    "ModelVersionError",
    "PipelineConfig",
    "PolicyViolationError",
    "SchemaMismatchError",
    "StaleArtifactError",
    "StoreFormatError",
    "TrainingError",
    "UndefinedSimilarityError",
    "__version__",
    "load_pipeline_config",
]
