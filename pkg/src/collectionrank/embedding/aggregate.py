"""Aggregation rules: item vectors -> restaurant, collection, user vectors.

Restaurants average their dishes; collections average their dishes (DISH
kind) or their restaurants' averages (RESTAURANT kind); users get, per meal
shift, up to three anchor dishes from distinct taxonomies picked by a
recency-weighted frequency score. Every aggregate is renormalized to unit
norm, and a mean that collapses to zero raises instead of returning a silent
"orthogonal to everything" vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import EmptyRegionError, MissingEmbeddingError, UndefinedSimilarityError
from ..marketplace.types import Collection, CollectionKind, Marketplace, MealShift, Restaurant, User
from .store import EmbeddingStore, normalize

#: 30-day half-life for the anchor-selection recency decay.
DEFAULT_HALF_LIFE_DAYS = 30.0

SECONDS_PER_DAY = 86_400.0


@dataclass(frozen=True)
class Scope:
    """UNIFIED (country-wide) or REGIONAL(region_id) collection representation."""

    kind: str
    region_id: int | None = None

    def __post_init__(self):
        if self.kind not in ("UNIFIED", "REGIONAL"):
            raise ValueError(f"unknown scope kind {self.kind!r}")
        if (self.kind == "REGIONAL") != (self.region_id is not None):
            raise ValueError("REGIONAL scope requires region_id; UNIFIED forbids it")


UNIFIED = Scope("UNIFIED")


def regional(region_id: int) -> Scope:
    return Scope("REGIONAL", region_id)


@dataclass(frozen=True)
class CollectionRepresentation:
    collection_id: int
    vector: np.ndarray
    scope: Scope


@dataclass(frozen=True)
class UserShiftRepresentation:
    """1-3 anchor dishes of pairwise-distinct taxonomies for (user, shift)."""

    user_id: int
    meal_shift: MealShift
    anchor_items: tuple[tuple[int, np.ndarray], ...]  # (dish_id, unit vector)

    def __post_init__(self):
        if not 1 <= len(self.anchor_items) <= 3:
            raise ValueError("representation must carry 1-3 anchor items")

    @property
    def anchor_vectors(self) -> np.ndarray:
        return np.stack([v for _, v in self.anchor_items])

    def pooled_vector(self) -> np.ndarray:
        """Normalized mean of the anchors; single summary vector per user."""
        return normalize(self.anchor_vectors.mean(axis=0))


def restaurant_embedding(restaurant: Restaurant, store: EmbeddingStore) -> np.ndarray:
    """Normalized arithmetic mean of the restaurant's dish vectors."""
    if not restaurant.dish_ids:
        raise MissingEmbeddingError(f"restaurant {restaurant.id} has no embedded dishes")
    return normalize(store.rows(restaurant.dish_ids).mean(axis=0))


def collection_embedding(
    collection: Collection,
    market: Marketplace,
    store: EmbeddingStore,
    scope: Scope = UNIFIED,
) -> CollectionRepresentation:
    """Single unit vector for a collection under the given scope.

    DISH collections are the normalized mean of member dish vectors;
    RESTAURANT collections are the normalized mean of the member
    restaurants' own mean vectors (aggregate of aggregates). REGIONAL scope
    first drops members outside the region.
    """
    if collection.kind is CollectionKind.DISH:
        dish_ids = list(collection.member_ids)
        if scope.kind == "REGIONAL":
            dish_ids = [
                d
                for d in dish_ids
                if market.restaurant_by_id[market.dish_by_id[d].restaurant_id].region_id
                == scope.region_id
            ]
        if not dish_ids:
            raise EmptyRegionError(
                f"collection {collection.id} has no members in region {scope.region_id}"
            )
        vec = normalize(store.rows(dish_ids).mean(axis=0))
    else:
        rest_ids = list(collection.member_ids)
        if scope.kind == "REGIONAL":
            rest_ids = [
                r
                for r in rest_ids
                if market.restaurant_by_id[r].region_id == scope.region_id
            ]
        if not rest_ids:
            raise EmptyRegionError(
                f"collection {collection.id} has no members in region {scope.region_id}"
            )
        means = np.stack(
            [restaurant_embedding(market.restaurant_by_id[r], store) for r in rest_ids]
        )
        vec = normalize(means.mean(axis=0))
    return CollectionRepresentation(collection_id=collection.id, vector=vec, scope=scope)


def user_shift_representation(
    user: User,
    shift: MealShift,
    store: EmbeddingStore,
    market: Marketplace,
    now: int,
    half_life_days: float = DEFAULT_HALF_LIFE_DAYS,
) -> UserShiftRepresentation | None:
    """Anchor dishes for (user, shift), or None when the shift has no orders.

    Each (taxonomy, dish) is scored by sum over its orders of
    exp(-lambda * age_days) with lambda = ln(2)/half_life. The result is the
    best dish of each of the top-3 taxonomies, in descending taxonomy-score
    order. Only orders at or before ``now`` count, so later simulation eras
    cannot perturb a snapshot-time representation.
    """
    lam = math.log(2.0) / half_life_days
    tax_score: dict[int, float] = {}
    dish_score: dict[int, float] = {}
    dish_tax: dict[int, int] = {}
    for order in user.order_history:
        if order.meal_shift != shift or order.timestamp > now:
            continue
        age_days = (now - order.timestamp) / SECONDS_PER_DAY
        w = math.exp(-lam * age_days)
        t = market.dish_by_id[order.dish_id].taxonomy_id
        tax_score[t] = tax_score.get(t, 0.0) + w
        dish_score[order.dish_id] = dish_score.get(order.dish_id, 0.0) + w
        dish_tax[order.dish_id] = t
    if not tax_score:
        return None
    top_taxonomies = sorted(tax_score, key=lambda t: (-tax_score[t], t))[:3]
    anchors = []
    for t in top_taxonomies:
        dishes = [d for d in dish_score if dish_tax[d] == t]
        best = min(dishes, key=lambda d: (-dish_score[d], d))
        anchors.append((best, store.vector(best)))
    return UserShiftRepresentation(
        user_id=user.id, meal_shift=shift, anchor_items=tuple(anchors)
    )


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Standard cosine similarity; raises on (near-)zero inputs."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if not (na > 1e-12 and nb > 1e-12):
        raise UndefinedSimilarityError("cosine of a zero vector is undefined")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def regional_variability(
    collection: Collection, market: Marketplace, store: EmbeddingStore
) -> float:
    """Median cosine between regional representations and the unified one.

    Regions where the collection has no members are skipped; a collection
    whose members all sit in one region scores 1.0 by construction.
    """
    unified = collection_embedding(collection, market, store, UNIFIED).vector
    sims = []
    for region_id in market.regions:
        try:
            rep = collection_embedding(collection, market, store, regional(region_id))
        except EmptyRegionError:
            continue
        sims.append(cosine(rep.vector, unified))
    if not sims:
        raise EmptyRegionError(f"collection {collection.id} has no members in any region")
    return float(np.median(sims))
