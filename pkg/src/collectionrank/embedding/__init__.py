"""Item embeddings and the aggregation rules built on top of them."""

from .aggregate import (
    UNIFIED,
    CollectionRepresentation,
    Scope,
    UserShiftRepresentation,
    collection_embedding,
    cosine,
    regional,
    regional_variability,
    restaurant_embedding,
    user_shift_representation,
)
from .store import (
    EmbeddingStore,
    build_item_embeddings,
    export_text,
    load_store,
    normalize,
    save_store,
)

__all__ = [
    "UNIFIED",
    "CollectionRepresentation",
    "EmbeddingStore",
    "Scope",
    "UserShiftRepresentation",
    "build_item_embeddings",
    "collection_embedding",
    "cosine",
    "export_text",
    "load_store",
    "normalize",
    "regional",
    "regional_variability",
    "restaurant_embedding",
    "save_store",
    "user_shift_representation",
]
