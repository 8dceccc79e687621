"""Exception hierarchy shared across the package."""


class CollectionRankError(Exception):
    """Base class for all errors raised by collectionrank."""


class ConfigError(CollectionRankError):
    """Invalid configuration value or inconsistent configuration."""


class PolicyViolationError(CollectionRankError):
    """A display policy produced a collection not eligible for the session."""


class MissingEmbeddingError(CollectionRankError):
    """A required embedding vector is unavailable."""


class DegenerateEmbeddingError(MissingEmbeddingError):
    """An aggregate embedding collapsed to the zero vector and cannot be normalized."""


class UndefinedSimilarityError(CollectionRankError):
    """Cosine similarity requested against a zero vector."""


class EmptyRegionError(CollectionRankError):
    """A regional collection representation was requested for a region with no members."""


class SchemaMismatchError(CollectionRankError):
    """Feature rows come from a schema different from the one the model was trained on."""


class TrainingError(CollectionRankError):
    """The training set cannot be fit (e.g. only one class present)."""


class ModelFormatError(CollectionRankError):
    """A model file is corrupt or structurally invalid."""


class ModelVersionError(ModelFormatError):
    """A model file was written by an incompatible (newer major) format version."""


class StoreFormatError(CollectionRankError):
    """An on-disk artifact (embedding store, world file, event log) is corrupt
    or has an unsupported version."""


class MissingArtifactError(CollectionRankError):
    """A pipeline stage requires an artifact that has not been produced yet."""

    def __init__(self, message: str, producer: str | None = None):
        super().__init__(message)
        self.producer = producer


class StaleArtifactError(CollectionRankError):
    """An upstream artifact was built from a different configuration."""
