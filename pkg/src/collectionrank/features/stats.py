"""Windowed per-collection aggregates and shared representation caches.

Stats are computed once per snapshot time and reused by every feature
extraction under that snapshot: order counts and fractions over a trailing
window, plus the embedding-based popularity (mean cosine between the
collection vector and the pooled anchor vectors of users active in the
shift).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..embedding.aggregate import (
    DEFAULT_HALF_LIFE_DAYS,
    UserShiftRepresentation,
    collection_embedding,
    user_shift_representation,
)
from ..embedding.store import EmbeddingStore
from ..errors import DegenerateEmbeddingError
from ..marketplace.types import (
    Collection,
    Marketplace,
    MealShift,
    N_SHIFTS,
    Order,
    SECONDS_PER_DAY,
)

DEFAULT_WINDOW_DAYS = 28


def build_user_representations(
    market: Marketplace,
    store: EmbeddingStore,
    now: int,
    half_life_days: float = DEFAULT_HALF_LIFE_DAYS,
) -> dict[tuple[int, int], UserShiftRepresentation]:
    """All (user, shift) anchor representations present at ``now``."""
    reps: dict[tuple[int, int], UserShiftRepresentation] = {}
    for user in market.users:
        for shift in MealShift:
            rep = user_shift_representation(
                user, shift, store, market, now, half_life_days
            )
            if rep is not None:
                reps[(user.id, int(shift))] = rep
    return reps


def build_collection_vectors(
    market: Marketplace, store: EmbeddingStore, collections: list[Collection]
) -> dict[int, np.ndarray]:
    """Unified representation vector per collection id."""
    return {
        c.id: collection_embedding(c, market, store).vector for c in collections
    }


@dataclass
class CollectionStats:
    """Trailing-window aggregates for one collection."""

    collection_id: int
    total_orders: int
    orders_per_shift: np.ndarray  # (N_SHIFTS,) int
    free_delivery_order_fraction: float  # NaN when total_orders == 0
    popularity_by_shift: np.ndarray  # (N_SHIFTS,) float, NaN when no active users

    def __post_init__(self):
        assert int(self.orders_per_shift.sum()) == self.total_orders


def shift_specificity(stats: CollectionStats, shift: MealShift) -> float:
    """Fraction of the collection's windowed orders made in ``shift``.

    NaN when the collection saw zero orders in the window; the caller's
    missing policy decides what that means downstream.
    """
    if stats.total_orders == 0:
        return float("nan")
    return float(stats.orders_per_shift[int(shift)] / stats.total_orders)


def compute_collection_stats(
    orders: list[Order],
    market: Marketplace,
    store: EmbeddingStore,
    collections: list[Collection] | None = None,
    *,
    now: int,
    window_days: int = DEFAULT_WINDOW_DAYS,
    reps: dict[tuple[int, int], UserShiftRepresentation] | None = None,
    collection_vectors: dict[int, np.ndarray] | None = None,
) -> dict[int, CollectionStats]:
    """Stats for every collection in the universe, keyed by collection id.

    Order attribution: an order carrying a collection_id counts toward that
    collection only; an order without one (organic traffic) counts toward
    every collection whose reachable dishes include the ordered dish. Only
    orders inside (now - window, now] count.

    ``reps``/``collection_vectors`` accept precomputed caches so one
    snapshot's representations are built exactly once.
    """
    if collections is None:
        collections = market.collections
    if reps is None:
        reps = build_user_representations(market, store, now)
    if collection_vectors is None:
        collection_vectors = build_collection_vectors(market, store, collections)

    m = len(collections)
    col_index = {c.id: j for j, c in enumerate(collections)}
    dish_to_cols: dict[int, list[int]] = {}
    for j, c in enumerate(collections):
        for did in market.collection_member_dish_ids(c):
            dish_to_cols.setdefault(did, []).append(j)

    window_start = now - window_days * SECONDS_PER_DAY
    counts = np.zeros((m, N_SHIFTS), dtype=np.int64)
    free_counts = np.zeros(m, dtype=np.int64)
    for order in orders:
        if not window_start < order.timestamp <= now:
            continue
        if order.collection_id is not None:
            j = col_index.get(order.collection_id)
            targets = [j] if j is not None else []
        else:
            targets = dish_to_cols.get(order.dish_id, [])
        if not targets:
            continue
        restaurant = market.restaurant_by_id[market.dish_by_id[order.dish_id].restaurant_id]
        is_free = restaurant.delivery_fee == 0
        s = int(order.meal_shift)
        for j in targets:
            counts[j, s] += 1
            if is_free:
                free_counts[j] += 1

    # Popularity: mean cosine between each collection vector and the pooled
    # anchor vector of every user holding a representation in the shift.
    vec_matrix = np.stack([collection_vectors[c.id] for c in collections])
    popularity = np.full((m, N_SHIFTS), np.nan)
    for shift in MealShift:
        pooled = []
        for user in market.users:
            rep = reps.get((user.id, int(shift)))
            if rep is None:
                continue
            try:
                pooled.append(rep.pooled_vector())
            except DegenerateEmbeddingError:
                continue
        if not pooled:
            continue
        P = np.stack(pooled)  # unit rows; collection vectors are unit too
        popularity[:, int(shift)] = (vec_matrix @ P.T).mean(axis=1)

    out: dict[int, CollectionStats] = {}
    for j, c in enumerate(collections):
        total = int(counts[j].sum())
        out[c.id] = CollectionStats(
            collection_id=c.id,
            total_orders=total,
            orders_per_shift=counts[j].copy(),
            free_delivery_order_fraction=(
                float(free_counts[j] / total) if total > 0 else float("nan")
            ),
            popularity_by_shift=popularity[j].copy(),
        )
    return out
