"""Feature extraction for (user, collection, context) tuples.

Two implementations on purpose: ``extract_features`` is the readable
reference path for a single tuple, and ``FeatureExtractor`` precomputes
lookup tables for batch extraction over many rows. Tests hold them equal;
the pipeline uses the batch path.

All user-history features are computed against a frozen snapshot time
(``now``): orders after the snapshot never influence features, so rows are
reproducible regardless of how much simulation ran afterwards.

Matrix files are plain text: a comment line with the format name, a header
of ``name:flag`` columns (flag is the monotone direction), then one
comma-separated row per example with ``nan`` marking missing values.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable

import numpy as np

from .._util import float_repr
from ..embedding.aggregate import (
    DEFAULT_HALF_LIFE_DAYS,
    UserShiftRepresentation,
    collection_embedding,
    cosine,
)
from ..embedding.store import EmbeddingStore
from ..errors import StoreFormatError
from ..marketplace.choice import collection_mean_fee
from ..marketplace.types import (
    Collection,
    CollectionKind,
    Context,
    Marketplace,
    MealShift,
    N_SHIFTS,
    User,
    VEGAN_ONLY,
)
from .schema import (
    ANCHOR_SIMILARITY_NAMES,
    FeatureSchema,
    build_feature_schema,
    shift_onehot_name,
)
from .stats import (
    CollectionStats,
    DEFAULT_WINDOW_DAYS,
    build_collection_vectors,
    build_user_representations,
    compute_collection_stats,
    shift_specificity,
)

MATRIX_FORMAT_LINE = "# collectionrank feature-matrix v1"


def extract_features(
    user: User,
    collection: Collection,
    context: Context,
    market: Marketplace,
    store: EmbeddingStore,
    stats: dict[int, CollectionStats],
    reps: dict[tuple[int, int], UserShiftRepresentation],
    schema: FeatureSchema,
    *,
    now: int,
) -> np.ndarray:
    """Reference single-tuple extraction; returns values in schema order."""
    shift = context.meal_shift
    cstats = stats[collection.id]
    cvec = collection_embedding(collection, market, store).vector

    rep = reps.get((user.id, int(shift)))
    sims = [float("nan")] * 3
    if rep is not None:
        values = sorted(
            (cosine(vec, cvec) for _, vec in rep.anchor_items), reverse=True
        )
        sims[: len(values)] = values

    coll_rests = set(market.collection_restaurant_ids(collection))
    n_rests = len(coll_rests)
    orders_in_coll = 0
    shift_orders_in_coll = 0
    for order in user.order_history:
        if order.timestamp > now:
            continue
        rest = market.dish_by_id[order.dish_id].restaurant_id
        if rest not in coll_rests:
            continue
        orders_in_coll += 1
        if order.meal_shift == shift:
            shift_orders_in_coll += 1

    values_by_name = {
        "popularity_shift_similarity": float(cstats.popularity_by_shift[int(shift)]),
        "is_dish_collection": float(collection.kind is CollectionKind.DISH),
        "free_delivery_order_fraction": float(cstats.free_delivery_order_fraction),
        "shift_specificity": shift_specificity(cstats, shift),
        "collection_size": float(len(collection.member_ids)),
        "mean_delivery_fee": collection_mean_fee(market, collection),
        "total_orders": float(cstats.total_orders),
        ANCHOR_SIMILARITY_NAMES[0]: sims[0],
        ANCHOR_SIMILARITY_NAMES[1]: sims[1],
        ANCHOR_SIMILARITY_NAMES[2]: sims[2],
        "user_orders_in_collection_restaurants": float(orders_in_coll),
        "vegan_match": float(user.is_vegan and VEGAN_ONLY in collection.theme_filters),
        "shift_orders_per_restaurant": float(shift_orders_in_coll / n_rests),
    }
    for s in MealShift:
        values_by_name[shift_onehot_name(s)] = float(s == shift)
    return np.asarray([values_by_name[name] for name in schema.names])


class FeatureExtractor:
    """Precomputed batch extraction over a fixed collection universe.

    Builds, once: per-collection static columns, per-(user, shift) sorted
    anchor similarities against every collection, and per-(user, collection)
    order counts (total and per shift). After that each row is a pure table
    gather.
    """

    def __init__(
        self,
        market: Marketplace,
        store: EmbeddingStore,
        collections: list[Collection] | None = None,
        schema: FeatureSchema | None = None,
        *,
        now: int,
        window_days: int = DEFAULT_WINDOW_DAYS,
        half_life_days: float = DEFAULT_HALF_LIFE_DAYS,
        reps: dict[tuple[int, int], UserShiftRepresentation] | None = None,
        stats: dict[int, CollectionStats] | None = None,
    ):
        if collections is None:
            collections = list(market.collections) + list(market.category_collections)
        self.market = market
        self.store = store
        self.schema = schema if schema is not None else build_feature_schema()
        self.now = now
        self.collections = sorted(collections, key=lambda c: c.id)
        self.collection_ids = np.asarray([c.id for c in self.collections])
        self._col_index = {c.id: j for j, c in enumerate(self.collections)}
        self._user_index = {u.id: i for i, u in enumerate(market.users)}

        self.reps = (
            reps
            if reps is not None
            else build_user_representations(market, store, now, half_life_days)
        )
        self.collection_vectors = build_collection_vectors(market, store, self.collections)
        self.stats = (
            stats
            if stats is not None
            else compute_collection_stats(
                market.all_orders(),
                market,
                store,
                self.collections,
                now=now,
                window_days=window_days,
                reps=self.reps,
                collection_vectors=self.collection_vectors,
            )
        )
        self._build_tables()

    def _build_tables(self) -> None:
        market, m = self.market, len(self.collections)
        n_users = len(market.users)

        self.popularity = np.stack(
            [self.stats[c.id].popularity_by_shift for c in self.collections]
        )  # (m, shifts)
        self.is_dish = np.asarray(
            [c.kind is CollectionKind.DISH for c in self.collections], dtype=float
        )
        self.free_frac = np.asarray(
            [self.stats[c.id].free_delivery_order_fraction for c in self.collections]
        )
        totals = np.asarray([self.stats[c.id].total_orders for c in self.collections])
        per_shift = np.stack(
            [self.stats[c.id].orders_per_shift for c in self.collections]
        ).astype(float)
        with np.errstate(invalid="ignore", divide="ignore"):
            self.specificity = np.where(
                totals[:, None] > 0, per_shift / np.maximum(totals[:, None], 1), np.nan
            )
        self.total_orders = totals.astype(float)
        self.size = np.asarray([len(c.member_ids) for c in self.collections], dtype=float)
        self.mean_fee = np.asarray(
            [collection_mean_fee(market, c) for c in self.collections]
        )
        self.vegan_collection = np.asarray(
            [VEGAN_ONLY in c.theme_filters for c in self.collections]
        )
        self.vegan_user = np.asarray([u.is_vegan for u in market.users])

        # Anchor similarities: (users, shifts, collections, 3), sorted
        # descending along the last axis, NaN-padded.
        C = np.stack([self.collection_vectors[c.id] for c in self.collections])
        self.anchor_sims = np.full((n_users, N_SHIFTS, m, 3), np.nan)
        for (user_id, shift), rep in self.reps.items():
            A = rep.anchor_vectors  # (a, dim) unit rows
            sims = np.clip(C @ A.T, -1.0, 1.0)  # (m, a)
            sims = -np.sort(-sims, axis=1)
            self.anchor_sims[self._user_index[user_id], shift, :, : sims.shape[1]] = sims

        # Per-(user, collection) order counts at the snapshot.
        rest_index = {r.id: i for i, r in enumerate(market.restaurants)}
        incidence = np.zeros((len(market.restaurants), m), dtype=np.float64)
        n_rests = np.zeros(m)
        for j, c in enumerate(self.collections):
            rids = market.collection_restaurant_ids(c)
            n_rests[j] = len(rids)
            for rid in rids:
                incidence[rest_index[rid], j] = 1.0
        self.n_restaurants = n_rests

        uidx, ridx, sidx = [], [], []
        for user in market.users:
            ui = self._user_index[user.id]
            for order in user.order_history:
                if order.timestamp > self.now:
                    continue
                uidx.append(ui)
                ridx.append(rest_index[market.dish_by_id[order.dish_id].restaurant_id])
                sidx.append(int(order.meal_shift))
        uidx = np.asarray(uidx, dtype=np.int64)
        ridx = np.asarray(ridx, dtype=np.int64)
        sidx = np.asarray(sidx, dtype=np.int64)

        self.user_coll_orders = np.zeros((n_users, m))
        np.add.at(self.user_coll_orders, uidx, incidence[ridx])
        self.user_coll_shift_orders = np.zeros((n_users, N_SHIFTS, m))
        for s in range(N_SHIFTS):
            sel = sidx == s
            np.add.at(
                self.user_coll_shift_orders[:, s, :], uidx[sel], incidence[ridx[sel]]
            )

    def extract_batch(
        self,
        user_ids: Iterable[int],
        collection_ids: Iterable[int],
        shifts: Iterable[int | MealShift],
    ) -> np.ndarray:
        """Feature matrix for aligned (user, collection, shift) rows."""
        u = np.asarray([self._user_index[int(x)] for x in user_ids])
        c = np.asarray([self._col_index[int(x)] for x in collection_ids])
        s = np.asarray([int(x) for x in shifts])
        n = len(u)
        if not (len(c) == n and len(s) == n):
            raise ValueError("user_ids, collection_ids, shifts must align")

        columns: dict[str, np.ndarray] = {
            "popularity_shift_similarity": self.popularity[c, s],
            "is_dish_collection": self.is_dish[c],
            "free_delivery_order_fraction": self.free_frac[c],
            "shift_specificity": self.specificity[c, s],
            "collection_size": self.size[c],
            "mean_delivery_fee": self.mean_fee[c],
            "total_orders": self.total_orders[c],
            "user_orders_in_collection_restaurants": self.user_coll_orders[u, c],
            "vegan_match": (self.vegan_user[u] & self.vegan_collection[c]).astype(float),
            "shift_orders_per_restaurant": self.user_coll_shift_orders[u, s, c]
            / self.n_restaurants[c],
        }
        anchor_block = self.anchor_sims[u, s, c]  # (n, 3)
        for rank, name in enumerate(ANCHOR_SIMILARITY_NAMES):
            columns[name] = anchor_block[:, rank]
        for shift in MealShift:
            columns[shift_onehot_name(shift)] = (s == int(shift)).astype(float)

        X = np.empty((n, len(self.schema)))
        for i, name in enumerate(self.schema.names):
            X[:, i] = columns[name]
        return X

    def extract(self, user_id: int, collection_id: int, shift: int | MealShift) -> np.ndarray:
        return self.extract_batch([user_id], [collection_id], [shift])[0]


def write_matrix(X: np.ndarray, schema: FeatureSchema, path: str | Path) -> None:
    X = np.asarray(X, dtype=np.float64)
    header = ",".join(
        f"{f.name}:{'+1' if f.monotone > 0 else str(f.monotone)}"
        for f in schema.features
    )
    with Path(path).open("w", encoding="utf-8", newline="\n") as f:
        f.write(MATRIX_FORMAT_LINE + "\n")
        f.write(header + "\n")
        for row in X:
            f.write(",".join("nan" if np.isnan(v) else float_repr(v) for v in row) + "\n")


def read_matrix(path: str | Path) -> tuple[list[tuple[str, int]], np.ndarray]:
    """Returns ([(name, monotone_flag), ...], X)."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as f:
        first = f.readline().rstrip("\n")
        if first != MATRIX_FORMAT_LINE:
            raise StoreFormatError(f"{path}: not a feature matrix (bad format line)")
        header = f.readline().rstrip("\n")
        if not header:
            raise StoreFormatError(f"{path}: missing header row")
        cols: list[tuple[str, int]] = []
        for token in header.split(","):
            name, _, flag = token.rpartition(":")
            if not name:
                raise StoreFormatError(f"{path}: malformed header token {token!r}")
            cols.append((name, int(flag)))
        rows = []
        for lineno, line in enumerate(f, start=3):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(cols):
                raise StoreFormatError(
                    f"{path}:{lineno}: expected {len(cols)} values, got {len(parts)}"
                )
            rows.append([float(p) for p in parts])
    X = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(cols))
    return cols, X
