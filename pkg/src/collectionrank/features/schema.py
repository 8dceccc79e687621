"""Feature schema: the frozen, ordered contract between extraction and model.

The schema fixes column order, each column's group, its monotone direction
for the booster (+1 non-decreasing, -1 non-increasing, 0 free), and whether
the column may be missing (NaN). A fingerprint of the canonical serialized
form is embedded in every trained model so scoring refuses mismatched
inputs.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from ..errors import ConfigError, SchemaMismatchError
from ..marketplace.types import MealShift

SCHEMA_FORMAT_VERSION = 1


class FeatureGroup(enum.Enum):
    COLLECTION = "COLLECTION"
    USER_COLLECTION = "USER_COLLECTION"
    CONTEXT = "CONTEXT"


class MissingPolicy(enum.Enum):
    #: NaN is a legal value, routed to the booster's learned default branch.
    ALLOWED = "allowed"
    #: the extractor always produces a concrete number.
    NEVER = "never"


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    group: FeatureGroup
    monotone: int  # +1, -1, or 0
    missing: MissingPolicy
    #: True for columns beyond the canonical set, toggleable in config.
    extension: bool = False

    def __post_init__(self):
        if self.monotone not in (-1, 0, 1):
            raise ConfigError(f"monotone flag must be -1, 0, or +1, got {self.monotone}")


class FeatureSchema:
    """Immutable ordered feature list with lookup helpers."""

    def __init__(self, features: Iterable[FeatureSpec]):
        self.features: tuple[FeatureSpec, ...] = tuple(features)
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ConfigError("feature names must be unique")
        if not self.features:
            raise ConfigError("schema must contain at least one feature")
        self._index = {f.name: i for i, f in enumerate(self.features)}

    def __len__(self) -> int:
        return len(self.features)

    def __eq__(self, other) -> bool:
        return isinstance(other, FeatureSchema) and self.features == other.features

    def __hash__(self) -> int:
        return hash(self.features)

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    @property
    def monotone_constraints(self) -> np.ndarray:
        return np.asarray([f.monotone for f in self.features], dtype=np.int8)

    def index_of(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"schema has no feature named {name!r}") from None

    def subset(self, names: Iterable[str]) -> "FeatureSchema":
        """Schema restricted to ``names``, keeping canonical column order."""
        wanted = set(names)
        unknown = wanted - set(self._index)
        if unknown:
            raise ConfigError(f"unknown feature names: {sorted(unknown)}")
        return FeatureSchema(f for f in self.features if f.name in wanted)

    def to_dict(self) -> dict[str, Any]:
        return {
            "format_version": SCHEMA_FORMAT_VERSION,
            "features": [
                {
                    "name": f.name,
                    "group": f.group.value,
                    "monotone": f.monotone,
                    "missing": f.missing.value,
                    "extension": f.extension,
                }
                for f in self.features
            ],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "FeatureSchema":
        if d.get("format_version") != SCHEMA_FORMAT_VERSION:
            raise ConfigError(
                f"unsupported schema format_version {d.get('format_version')!r}"
            )
        return cls(
            FeatureSpec(
                name=f["name"],
                group=FeatureGroup(f["group"]),
                monotone=int(f["monotone"]),
                missing=MissingPolicy(f["missing"]),
                extension=bool(f.get("extension", False)),
            )
            for f in d["features"]
        )

    def fingerprint(self) -> str:
        """sha256 of the canonical serialized schema; embedded in models."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "FeatureSchema":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def validate_matrix(self, X: np.ndarray) -> np.ndarray:
        """Check a feature matrix against column count and missing policy."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self):
            raise SchemaMismatchError(
                f"matrix has {X.shape[1] if X.ndim == 2 else '?'} columns, "
                f"schema expects {len(self)}"
            )
        for i, f in enumerate(self.features):
            if f.missing is MissingPolicy.NEVER and np.isnan(X[:, i]).any():
                raise SchemaMismatchError(
                    f"column {f.name!r} contains NaN but is declared never-missing"
                )
        return X


#: Canonical similarity-slot names, descending rank order.
ANCHOR_SIMILARITY_NAMES = (
    "anchor_similarity_1",
    "anchor_similarity_2",
    "anchor_similarity_3",
)


def shift_onehot_name(shift: MealShift) -> str:
    return f"shift_is_{shift.name.lower()}"


def build_feature_schema(
    include_collection_size: bool = True,
    include_mean_delivery_fee: bool = True,
    include_total_orders: bool = False,
) -> FeatureSchema:
    """The canonical schema, optionally with extension columns.

    Canonical columns cover: embedding-based per-shift popularity, collection
    kind, free-delivery order fraction, shift specificity, three sorted
    anchor similarities, the user's order count in the collection's
    restaurants, vegan match, the per-restaurant-normalized shift order
    count, and the meal-shift one-hots. Extensions: collection size, mean
    delivery fee, and raw windowed order count (off by default).
    """
    C, UC, CTX = FeatureGroup.COLLECTION, FeatureGroup.USER_COLLECTION, FeatureGroup.CONTEXT
    NEVER, ALLOWED = MissingPolicy.NEVER, MissingPolicy.ALLOWED
    features: list[FeatureSpec] = [
        FeatureSpec("popularity_shift_similarity", C, +1, ALLOWED),
        FeatureSpec("is_dish_collection", C, 0, NEVER),
        FeatureSpec("free_delivery_order_fraction", C, 0, ALLOWED),
        FeatureSpec("shift_specificity", C, +1, ALLOWED),
    ]
    if include_collection_size:
        features.append(FeatureSpec("collection_size", C, 0, NEVER, extension=True))
    if include_mean_delivery_fee:
        features.append(FeatureSpec("mean_delivery_fee", C, -1, NEVER, extension=True))
    if include_total_orders:
        features.append(FeatureSpec("total_orders", C, 0, NEVER, extension=True))
    for name in ANCHOR_SIMILARITY_NAMES:
        features.append(FeatureSpec(name, UC, +1, ALLOWED))
    features.extend(
        [
            FeatureSpec("user_orders_in_collection_restaurants", UC, 0, NEVER),
            FeatureSpec("vegan_match", UC, +1, NEVER),
            FeatureSpec("shift_orders_per_restaurant", UC, +1, NEVER),
        ]
    )
    for shift in MealShift:
        features.append(FeatureSpec(shift_onehot_name(shift), CTX, 0, NEVER))
    return FeatureSchema(features)
