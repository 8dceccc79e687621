"""Labeled pair construction from session logs.

Two regimes, kept apart by provenance: the carousel bootstrap (positive =
the purchased category, negative = a uniformly sampled co-displayed one)
and the mature protocol built from exploration-flagged sessions only, where
the display was a uniformly sampled pair, so display composition is
independent of the incumbent ranker. Both produce exactly one positive and
one negative row per qualifying session, which is what makes the 50/50
balance exact globally and per home.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from ._util import rng_for
from .errors import ConfigError, StoreFormatError
from .features.extract import FeatureExtractor, read_matrix, write_matrix
from .features.schema import FeatureSchema
from .marketplace.policies import DisplayPolicy, ExplorationPolicy
from .marketplace.types import Context, Marketplace, MealShift, SessionEvent

_RNG_STREAM = 0xDA7A

PAIRS_FORMAT_LINE = "# collectionrank pair-index v1"
_PAIRS_HEADER = (
    "pos_row,neg_row,user_id,meal_shift,home_id,region_id,timestamp,"
    "positive_collection_id,negative_collection_id,provenance"
)


class Provenance(enum.Enum):
    CAROUSEL = "CAROUSEL"
    SAMPLED = "SAMPLED"


@dataclass(frozen=True)
class LabeledPair:
    """One purchase against one co-displayed non-purchase, same session."""

    user_id: int
    context: Context
    positive_collection_id: int
    negative_collection_id: int
    home_id: int
    provenance: Provenance

    def __post_init__(self):
        if self.positive_collection_id == self.negative_collection_id:
            raise ValueError("positive and negative must differ")
        if self.home_id != self.context.home_id:
            raise ValueError("pair home must equal its context home")


@dataclass
class LabeledDataset:
    """Feature rows plus the pair structure linking positives to negatives.

    Rows are interleaved: row 2i is pair i's positive, row 2i+1 its
    negative; ``pair_index`` spells that out explicitly for the on-disk
    format. y is implied by the structure (1 for positive rows).
    """

    schema: FeatureSchema
    X: np.ndarray
    y: np.ndarray
    pairs: list[LabeledPair]
    pair_index: np.ndarray  # (n_pairs, 2) row indices

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if len(self.X) != len(self.y):
            raise ValueError("X and y length mismatch")
        self.pair_index = np.asarray(self.pair_index, dtype=np.int64).reshape(-1, 2)
        if len(self.pair_index) != len(self.pairs):
            raise ValueError("pair_index and pairs length mismatch")

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    @property
    def n_rows(self) -> int:
        return len(self.X)

    def row_home_ids(self) -> np.ndarray:
        homes = np.empty(self.n_rows, dtype=np.int64)
        for pair, (i, j) in zip(self.pairs, self.pair_index):
            homes[i] = pair.home_id
            homes[j] = pair.home_id
        return homes

    def row_shifts(self) -> np.ndarray:
        shifts = np.empty(self.n_rows, dtype=np.int64)
        for pair, (i, j) in zip(self.pairs, self.pair_index):
            shifts[i] = int(pair.context.meal_shift)
            shifts[j] = int(pair.context.meal_shift)
        return shifts

    def row_user_ids(self) -> np.ndarray:
        users = np.empty(self.n_rows, dtype=np.int64)
        for pair, (i, j) in zip(self.pairs, self.pair_index):
            users[i] = pair.user_id
            users[j] = pair.user_id
        return users

    def row_collection_ids(self) -> np.ndarray:
        cols = np.empty(self.n_rows, dtype=np.int64)
        for pair, (i, j) in zip(self.pairs, self.pair_index):
            cols[i] = pair.positive_collection_id
            cols[j] = pair.negative_collection_id
        return cols

    def validate(self) -> None:
        """Re-verify the balance and locality invariants by scan."""
        if self.n_rows != 2 * self.n_pairs:
            raise ValueError("dataset rows must be exactly two per pair")
        if self.n_pairs == 0:
            return
        if int(self.y.sum()) * 2 != self.n_rows:
            raise ValueError("global positive fraction is not exactly 0.5")
        pos_per_home: dict[int, int] = {}
        neg_per_home: dict[int, int] = {}
        for pair, (i, j) in zip(self.pairs, self.pair_index):
            if self.y[i] != 1 or self.y[j] != 0:
                raise ValueError("pair rows must be labeled (1, 0)")
            if pair.positive_collection_id == pair.negative_collection_id:
                raise ValueError("pair with identical collections")
            if pair.home_id != pair.context.home_id:
                raise ValueError("pair home differs from its context home")
            pos_per_home[pair.home_id] = pos_per_home.get(pair.home_id, 0) + 1
            neg_per_home[pair.home_id] = neg_per_home.get(pair.home_id, 0) + 1
        if pos_per_home != neg_per_home:
            raise ValueError("per-home positive fraction is not exactly 0.5")

    def provenances(self) -> set[Provenance]:
        return {p.provenance for p in self.pairs}


def _dataset_from_pairs(
    pairs: list[LabeledPair], extractor: FeatureExtractor, schema: FeatureSchema
) -> LabeledDataset:
    users, cols, shifts = [], [], []
    for pair in pairs:
        users += [pair.user_id, pair.user_id]
        cols += [pair.positive_collection_id, pair.negative_collection_id]
        shifts += [int(pair.context.meal_shift)] * 2
    if pairs:
        X = extractor.extract_batch(users, cols, shifts)
    else:
        X = np.empty((0, len(schema)))
    y = np.tile([1, 0], len(pairs))
    pair_index = np.arange(2 * len(pairs), dtype=np.int64).reshape(-1, 2)
    ds = LabeledDataset(schema=schema, X=X, y=y, pairs=pairs, pair_index=pair_index)
    ds.validate()
    return ds


def build_carousel_dataset(
    log: Sequence[SessionEvent],
    market: Marketplace,
    extractor: FeatureExtractor,
    seed: int,
) -> LabeledDataset:
    """Bootstrap pairs from category-carousel sessions.

    Sessions without a purchase contribute nothing; a purchase with no
    co-displayed alternative is skipped (no negative available). The
    negative is drawn uniformly among the other displayed categories.
    """
    rng = rng_for(seed, _RNG_STREAM, 0xCA)
    pairs: list[LabeledPair] = []
    for event in log:
        if event.purchased_collection_id is None:
            continue
        others = [
            c
            for c in event.displayed_collection_ids
            if c != event.purchased_collection_id
        ]
        if not others:
            continue
        negative = int(others[rng.integers(0, len(others))])
        pairs.append(
            LabeledPair(
                user_id=event.user_id,
                context=event.context,
                positive_collection_id=event.purchased_collection_id,
                negative_collection_id=negative,
                home_id=event.context.home_id,
                provenance=Provenance.CAROUSEL,
            )
        )
    return _dataset_from_pairs(pairs, extractor, extractor.schema)


def build_unbiased_dataset(
    log: Sequence[SessionEvent],
    market: Marketplace,
    extractor: FeatureExtractor,
) -> LabeledDataset:
    """Pairs from exploration-flagged purchase sessions only.

    The display was a uniformly sampled pair, so the non-purchased card of
    each qualifying session becomes the negative. Unflagged sessions are
    ignored no matter what happened in them.
    """
    pairs: list[LabeledPair] = []
    for event in log:
        if not event.exploration_flag or event.purchased_collection_id is None:
            continue
        others = [
            c
            for c in event.displayed_collection_ids
            if c != event.purchased_collection_id
        ]
        if len(others) != 1:
            raise ValueError(
                "exploration sessions must display exactly 2 collections, got "
                f"{len(event.displayed_collection_ids)}"
            )
        pairs.append(
            LabeledPair(
                user_id=event.user_id,
                context=event.context,
                positive_collection_id=event.purchased_collection_id,
                negative_collection_id=int(others[0]),
                home_id=event.context.home_id,
                provenance=Provenance.SAMPLED,
            )
        )
    return _dataset_from_pairs(pairs, extractor, extractor.schema)


def exploration_display_policy(
    base_policy: DisplayPolicy, rate: float = 0.005
) -> ExplorationPolicy:
    """Wrap an incumbent ranking with uniform-pair exploration.

    With probability ``rate`` a session shows a uniformly sampled unordered
    pair of its home's eligible collections and is flagged; otherwise the
    incumbent display runs unflagged. Homes with fewer than two eligible
    collections fall back to the incumbent, unflagged.
    """
    return ExplorationPolicy(base_policy, rate)


def merge_datasets(
    a: LabeledDataset, b: LabeledDataset, *, allow_mixed_provenance: bool = False
) -> LabeledDataset:
    """Concatenate two datasets built under the same schema.

    Refuses to mix CAROUSEL and SAMPLED rows unless explicitly allowed;
    the two regimes were never trained together in one era.
    """
    if a.schema != b.schema:
        raise ConfigError("cannot merge datasets with different schemas")
    if not allow_mixed_provenance and a.pairs and b.pairs:
        if a.provenances() | b.provenances() != a.provenances() & b.provenances():
            raise ConfigError(
                "refusing to mix CAROUSEL and SAMPLED provenance; "
                "pass allow_mixed_provenance=True to override"
            )
    X = np.vstack([a.X, b.X])
    y = np.concatenate([a.y, b.y])
    pair_index = np.vstack([a.pair_index, b.pair_index + a.n_rows])
    ds = LabeledDataset(
        schema=a.schema, X=X, y=y, pairs=a.pairs + b.pairs, pair_index=pair_index
    )
    ds.validate()
    return ds


def filter_users(ds: LabeledDataset, exclude: set[int]) -> LabeledDataset:
    """Drop every pair whose user is in ``exclude``.

    Used to keep an alternative training source disjoint from a holdout
    drawn on a different dataset over the same user population.
    """
    keep = [k for k, p in enumerate(ds.pairs) if p.user_id not in exclude]
    rows = ds.pair_index[keep].ravel()
    out = LabeledDataset(
        schema=ds.schema,
        X=ds.X[rows],
        y=ds.y[rows],
        pairs=[ds.pairs[k] for k in keep],
        pair_index=np.arange(2 * len(keep), dtype=np.int64).reshape(-1, 2),
    )
    out.validate()
    return out


def split_dataset(
    ds: LabeledDataset, holdout_fraction: float, seed: int
) -> tuple[LabeledDataset, LabeledDataset]:
    """User-disjoint train/test split that never separates a pair.

    The holdout user count is floor(fraction * n_users + 0.5); all of a
    user's pairs travel together, so no user (and hence no pair) straddles
    the boundary.
    """
    if not 0.0 < holdout_fraction < 1.0:
        raise ConfigError("holdout_fraction must be in (0, 1)")
    users = sorted({p.user_id for p in ds.pairs})
    rng = rng_for(seed, _RNG_STREAM, 0x59)
    perm = rng.permutation(len(users))
    n_test = int(np.floor(holdout_fraction * len(users) + 0.5))
    test_users = {users[i] for i in perm[:n_test]}

    def take(selector) -> LabeledDataset:
        keep = [k for k, p in enumerate(ds.pairs) if selector(p.user_id)]
        rows = ds.pair_index[keep].ravel()
        remap_pairs = [ds.pairs[k] for k in keep]
        sub = LabeledDataset(
            schema=ds.schema,
            X=ds.X[rows],
            y=ds.y[rows],
            pairs=remap_pairs,
            pair_index=np.arange(2 * len(keep), dtype=np.int64).reshape(-1, 2),
        )
        sub.validate()
        return sub

    train = take(lambda u: u not in test_users)
    test = take(lambda u: u in test_users)
    return train, test


def save_dataset(ds: LabeledDataset, matrix_path: str | Path, pairs_path: str | Path) -> None:
    """Write the feature matrix and the pair-index sidecar."""
    write_matrix(ds.X, ds.schema, matrix_path)
    with Path(pairs_path).open("w", encoding="utf-8", newline="\n") as f:
        f.write(PAIRS_FORMAT_LINE + "\n")
        f.write(_PAIRS_HEADER + "\n")
        for pair, (i, j) in zip(ds.pairs, ds.pair_index):
            f.write(
                f"{i},{j},{pair.user_id},{pair.context.meal_shift.name},"
                f"{pair.home_id},{pair.context.region_id},{pair.context.timestamp},"
                f"{pair.positive_collection_id},{pair.negative_collection_id},"
                f"{pair.provenance.value}\n"
            )


def load_dataset(
    matrix_path: str | Path, pairs_path: str | Path, schema: FeatureSchema
) -> LabeledDataset:
    cols, X = read_matrix(matrix_path)
    expected = [
        (f.name, f.monotone) for f in schema.features
    ]
    if cols != expected:
        raise StoreFormatError(
            f"{matrix_path}: matrix columns do not match the expected schema"
        )
    pairs: list[LabeledPair] = []
    pair_index: list[tuple[int, int]] = []
    path = Path(pairs_path)
    with path.open("r", encoding="utf-8") as f:
        if f.readline().rstrip("\n") != PAIRS_FORMAT_LINE:
            raise StoreFormatError(f"{path}: not a pair-index file")
        if f.readline().rstrip("\n") != _PAIRS_HEADER:
            raise StoreFormatError(f"{path}: unexpected pair-index header")
        for lineno, line in enumerate(f, start=3):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 10:
                raise StoreFormatError(f"{path}:{lineno}: expected 10 fields")
            (
                i,
                j,
                user_id,
                shift_name,
                home_id,
                region_id,
                ts,
                pos_id,
                neg_id,
                prov,
            ) = parts
            pair_index.append((int(i), int(j)))
            pairs.append(
                LabeledPair(
                    user_id=int(user_id),
                    context=Context(
                        meal_shift=MealShift[shift_name],
                        home_id=int(home_id),
                        region_id=int(region_id),
                        timestamp=int(ts),
                    ),
                    positive_collection_id=int(pos_id),
                    negative_collection_id=int(neg_id),
                    home_id=int(home_id),
                    provenance=Provenance(prov),
                )
            )
    y = np.zeros(len(X), dtype=np.int64)
    for i, j in pair_index:
        y[i] = 1
        y[j] = 0
    ds = LabeledDataset(
        schema=schema, X=X, y=y, pairs=pairs, pair_index=np.asarray(pair_index)
    )
    ds.validate()
    return ds


def dataset_meta(ds: LabeledDataset) -> dict[str, Any]:
    """Small JSON-able summary used in artifact manifests."""
    per_home: dict[str, int] = {}
    for pair in ds.pairs:
        key = str(pair.home_id)
        per_home[key] = per_home.get(key, 0) + 1
    return {
        "n_pairs": ds.n_pairs,
        "n_rows": ds.n_rows,
        "pairs_per_home": dict(sorted(per_home.items())),
        "provenance": sorted(p.value for p in ds.provenances()),
        "schema_fingerprint": ds.schema.fingerprint(),
    }


def dataset_meta_json(ds: LabeledDataset) -> str:
    return json.dumps(dataset_meta(ds), sort_keys=True, separators=(",", ":"))
