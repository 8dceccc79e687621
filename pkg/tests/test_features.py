"""Feature schema, windowed collection stats, and tuple extraction."""

from __future__ import annotations

import math

import numpy as np
import pytest

from collectionrank.embedding import cosine
from collectionrank.errors import ConfigError, SchemaMismatchError, StoreFormatError
from collectionrank.features import (
    ANCHOR_SIMILARITY_NAMES,
    FeatureExtractor,
    FeatureGroup,
    FeatureSchema,
    FeatureSpec,
    MissingPolicy,
    build_collection_vectors,
    build_feature_schema,
    build_user_representations,
    compute_collection_stats,
    extract_features,
    read_matrix,
    shift_onehot_name,
    shift_specificity,
    write_matrix,
)
from collectionrank.features.stats import CollectionStats
from collectionrank.marketplace import MealShift, Order, OrderSource
from collectionrank.marketplace.types import SECONDS_PER_DAY, VEGAN_ONLY

CANONICAL_WIDE_ORDER = [
    ("popularity_shift_similarity", +1),
    ("is_dish_collection", 0),
    ("free_delivery_order_fraction", 0),
    ("shift_specificity", +1),
    ("collection_size", 0),
    ("mean_delivery_fee", -1),
    ("total_orders", 0),
    ("anchor_similarity_1", +1),
    ("anchor_similarity_2", +1),
    ("anchor_similarity_3", +1),
    ("user_orders_in_collection_restaurants", 0),
    ("vegan_match", +1),
    ("shift_orders_per_restaurant", +1),
    ("shift_is_dawn", 0),
    ("shift_is_breakfast", 0),
    ("shift_is_lunch", 0),
    ("shift_is_snack", 0),
    ("shift_is_dinner", 0),
]


# ---------------------------------------------------------------------------
# schema


def test_schema_canonical_order_and_monotone_flags(wide_schema):
    got = [(f.name, f.monotone) for f in wide_schema.features]
    assert got == CANONICAL_WIDE_ORDER
    np.testing.assert_array_equal(
        wide_schema.monotone_constraints,
        np.asarray([m for _, m in CANONICAL_WIDE_ORDER], dtype=np.int8),
    )


def test_schema_extension_toggles():
    default = build_feature_schema()
    assert "total_orders" not in default.names
    assert "collection_size" in default.names and "mean_delivery_fee" in default.names
    minimal = build_feature_schema(
        include_collection_size=False, include_mean_delivery_fee=False
    )
    assert "collection_size" not in minimal.names
    assert "mean_delivery_fee" not in minimal.names
    # dropping extensions preserves the relative order of what remains
    wide = build_feature_schema(include_total_orders=True)
    kept = [n for n in wide.names if n in set(minimal.names)]
    assert kept == list(minimal.names)


def test_schema_missing_policy_marks_similarity_columns(wide_schema):
    by_name = {f.name: f for f in wide_schema.features}
    for name in (
        "popularity_shift_similarity",
        "free_delivery_order_fraction",
        "shift_specificity",
        *ANCHOR_SIMILARITY_NAMES,
    ):
        assert by_name[name].missing is MissingPolicy.ALLOWED
    for name in ("vegan_match", "collection_size", "shift_is_lunch", "total_orders"):
        assert by_name[name].missing is MissingPolicy.NEVER


def test_schema_groups(wide_schema):
    by_name = {f.name: f for f in wide_schema.features}
    assert by_name["popularity_shift_similarity"].group is FeatureGroup.COLLECTION
    assert by_name["anchor_similarity_2"].group is FeatureGroup.USER_COLLECTION
    assert by_name["shift_is_dinner"].group is FeatureGroup.CONTEXT
    assert shift_onehot_name(MealShift.SNACK) == "shift_is_snack"


def test_schema_rejects_duplicates_and_bad_flags():
    spec = FeatureSpec("x", FeatureGroup.COLLECTION, 0, MissingPolicy.NEVER)
    with pytest.raises(ConfigError):
        FeatureSchema([spec, spec])
    with pytest.raises(ConfigError):
        FeatureSchema([])
    with pytest.raises(ConfigError):
        FeatureSpec("y", FeatureGroup.COLLECTION, 2, MissingPolicy.NEVER)


def test_schema_subset_keeps_canonical_order(wide_schema):
    sub = wide_schema.subset(["vegan_match", "popularity_shift_similarity"])
    assert list(sub.names) == ["popularity_shift_similarity", "vegan_match"]
    with pytest.raises(ConfigError, match="no_such"):
        wide_schema.subset(["no_such_feature"])


def test_schema_fingerprint_tracks_content(wide_schema):
    again = build_feature_schema(include_total_orders=True)
    assert again.fingerprint() == wide_schema.fingerprint()
    assert build_feature_schema().fingerprint() != wide_schema.fingerprint()
    assert wide_schema.subset(["vegan_match"]).fingerprint() != wide_schema.fingerprint()


def test_schema_dict_round_trip(wide_schema):
    d = wide_schema.to_dict()
    again = FeatureSchema.from_dict(d)
    assert [f for f in again.features] == list(wide_schema.features)
    assert again.fingerprint() == wide_schema.fingerprint()
    bad = dict(d, format_version=9)
    with pytest.raises(ConfigError):
        FeatureSchema.from_dict(bad)


def test_validate_matrix_enforces_shape_and_missing_policy(wide_schema):
    n = len(wide_schema)
    X = np.zeros((4, n))
    wide_schema.validate_matrix(X)  # fine
    X2 = X.copy()
    X2[1, wide_schema.names.index("anchor_similarity_3")] = np.nan
    wide_schema.validate_matrix(X2)  # ALLOWED column may hold NaN
    X3 = X.copy()
    X3[2, wide_schema.names.index("vegan_match")] = np.nan
    with pytest.raises(SchemaMismatchError, match="vegan_match"):
        wide_schema.validate_matrix(X3)
    with pytest.raises(SchemaMismatchError):
        wide_schema.validate_matrix(np.zeros((4, n + 1)))


# ---------------------------------------------------------------------------
# stats


def test_shift_specificity_values():
    stats = CollectionStats(
        collection_id=1,
        total_orders=10,
        orders_per_shift=np.array([2, 0, 3, 0, 5]),
        free_delivery_order_fraction=0.5,
        popularity_by_shift=np.zeros(5),
    )
    assert shift_specificity(stats, MealShift.LUNCH) == 0.3
    assert shift_specificity(stats, MealShift.DINNER) == 0.5
    assert shift_specificity(stats, MealShift.BREAKFAST) == 0.0
    empty = CollectionStats(
        collection_id=2,
        total_orders=0,
        orders_per_shift=np.zeros(5, dtype=int),
        free_delivery_order_fraction=float("nan"),
        popularity_by_shift=np.zeros(5),
    )
    assert math.isnan(shift_specificity(empty, MealShift.LUNCH))


def _stats_for(small_market, small_store, small_now, orders, window_days=28):
    return compute_collection_stats(
        orders,
        small_market,
        small_store,
        list(small_market.collections),
        now=small_now,
        window_days=window_days,
    )


def test_stats_window_is_left_open_right_closed(small_market, small_store, small_now):
    col = small_market.collections[0]
    dish = small_market.collection_member_dish_ids(col)[0]
    window = 28 * SECONDS_PER_DAY

    def order_at(ts):
        return Order(
            user_id=0,
            dish_id=dish,
            timestamp=ts,
            meal_shift=MealShift.LUNCH,
            source=OrderSource.CAROUSEL,
            home_id=0,
            collection_id=col.id,
        )

    orders = [
        order_at(small_now),  # inclusive right edge
        order_at(small_now - window),  # exclusive left edge: dropped
        order_at(small_now - window + 1),  # first included second
        order_at(small_now + 1),  # future: dropped
    ]
    stats = _stats_for(small_market, small_store, small_now, orders)
    assert stats[col.id].total_orders == 2


def test_stats_attribution_rules(small_market, small_store, small_now):
    cols = small_market.collections
    target = cols[0]
    dish = small_market.collection_member_dish_ids(target)[0]
    containing = [
        c.id
        for c in cols
        if dish in set(small_market.collection_member_dish_ids(c))
    ]
    ts = small_now - SECONDS_PER_DAY

    tagged = Order(
        user_id=0, dish_id=dish, timestamp=ts, meal_shift=MealShift.LUNCH,
        source=OrderSource.RED_CARD, home_id=0, collection_id=target.id,
    )
    stats = _stats_for(small_market, small_store, small_now, [tagged])
    for c in cols:
        assert stats[c.id].total_orders == (1 if c.id == target.id else 0)

    organic = Order(
        user_id=0, dish_id=dish, timestamp=ts, meal_shift=MealShift.DINNER,
        source=OrderSource.ORGANIC,
    )
    stats = _stats_for(small_market, small_store, small_now, [organic])
    for c in cols:
        expect = 1 if c.id in containing else 0
        assert stats[c.id].total_orders == expect
        if expect:
            assert stats[c.id].orders_per_shift[int(MealShift.DINNER)] == 1

    # an order tagged with an out-of-universe collection counts nowhere
    foreign = Order(
        user_id=0, dish_id=dish, timestamp=ts, meal_shift=MealShift.LUNCH,
        source=OrderSource.RED_CARD, home_id=0, collection_id=123_456_789,
    )
    stats = _stats_for(small_market, small_store, small_now, [foreign])
    assert all(stats[c.id].total_orders == 0 for c in cols)


def test_stats_free_delivery_fraction(small_market, small_store, small_now):
    def fee_of(dish):
        return small_market.restaurant_by_id[
            small_market.dish_by_id[dish].restaurant_id
        ].delivery_fee

    col = free = paid = None
    for candidate in small_market.collections:
        member = small_market.collection_member_dish_ids(candidate)
        free = [d for d in member if fee_of(d) == 0]
        paid = [d for d in member if fee_of(d) > 0]
        if free and paid:
            col = candidate
            break
    assert col is not None, "no collection mixes free and paid delivery"
    ts = small_now - SECONDS_PER_DAY

    def order_for(dish):
        return Order(
            user_id=0, dish_id=dish, timestamp=ts, meal_shift=MealShift.LUNCH,
            source=OrderSource.RED_CARD, home_id=0, collection_id=col.id,
        )

    orders = [order_for(free[0]), order_for(paid[0]), order_for(paid[0])]
    stats = _stats_for(small_market, small_store, small_now, orders)
    assert stats[col.id].free_delivery_order_fraction == pytest.approx(1 / 3)
    # zero orders leave the fraction undefined rather than zero
    other = next(c for c in small_market.collections if c.id != col.id)
    assert math.isnan(stats[other.id].free_delivery_order_fraction)


def test_stats_popularity_matches_brute_force(small_market, small_store, small_now):
    reps = build_user_representations(small_market, small_store, small_now)
    vectors = build_collection_vectors(
        small_market, small_store, list(small_market.collections)
    )
    stats = compute_collection_stats(
        small_market.all_orders(),
        small_market,
        small_store,
        list(small_market.collections),
        now=small_now,
        reps=reps,
        collection_vectors=vectors,
    )
    shift = MealShift.LUNCH
    pooled = [
        rep.pooled_vector()
        for (uid, s), rep in sorted(reps.items())
        if s == int(shift)
    ]
    assert pooled
    for c in small_market.collections[:4]:
        expect = np.mean([float(vectors[c.id] @ p) for p in pooled])
        got = stats[c.id].popularity_by_shift[int(shift)]
        assert got == pytest.approx(expect, abs=1e-12)


def test_stats_popularity_nan_without_active_users(small_market, small_store, small_now):
    stats = compute_collection_stats(
        [],
        small_market,
        small_store,
        list(small_market.collections),
        now=small_now,
        reps={},  # nobody holds a representation
    )
    for c in small_market.collections[:3]:
        assert np.isnan(stats[c.id].popularity_by_shift).all()


# ---------------------------------------------------------------------------
# extraction: reference path vs batch path


def test_batch_extraction_matches_reference(small_market, small_store, small_now, small_extractor):
    ext = small_extractor
    rng = np.random.default_rng(5)
    users = [small_market.users[i] for i in rng.integers(0, len(small_market.users), 150)]
    cols = [ext.collections[i] for i in rng.integers(0, len(ext.collections), 150)]
    shifts = rng.integers(0, 5, 150)

    X_batch = ext.extract_batch(
        [u.id for u in users], [c.id for c in cols], shifts
    )
    for i, (user, col, s) in enumerate(zip(users, cols, shifts)):
        from collectionrank.marketplace import Context

        ctx = Context(
            meal_shift=MealShift(int(s)),
            home_id=0,
            region_id=user.region_id,
            timestamp=small_now,
        )
        ref = extract_features(
            user, col, ctx, small_market, small_store,
            ext.stats, ext.reps, ext.schema, now=small_now,
        )
        same_nan = np.isnan(ref) == np.isnan(X_batch[i])
        assert same_nan.all(), ext.schema.names[int(np.flatnonzero(~same_nan)[0])]
        both = ~np.isnan(ref)
        np.testing.assert_allclose(X_batch[i][both], ref[both], atol=1e-9)


def test_extract_single_row_agrees_with_batch(small_extractor):
    ext = small_extractor
    uid = ext.market.users[3].id
    cid = ext.collections[2].id
    row = ext.extract(uid, cid, MealShift.DINNER)
    batch = ext.extract_batch([uid], [cid], [int(MealShift.DINNER)])
    np.testing.assert_array_equal(row, batch[0])


def test_extracted_matrix_respects_missing_policy(small_extractor, wide_schema):
    ext = small_extractor
    rng = np.random.default_rng(6)
    n = 300
    uids = [ext.market.users[i].id for i in rng.integers(0, len(ext.market.users), n)]
    cids = [ext.collections[i].id for i in rng.integers(0, len(ext.collections), n)]
    shifts = rng.integers(0, 5, n)
    X = ext.extract_batch(uids, cids, shifts)
    wide_schema.validate_matrix(X)  # raises if a NEVER column carries NaN
    assert X.shape == (n, len(wide_schema))


def test_anchor_similarities_sorted_descending_nan_padded(small_extractor):
    X = small_extractor.extract_batch(
        [u.id for u in small_extractor.market.users],
        [small_extractor.collections[0].id] * len(small_extractor.market.users),
        [int(MealShift.LUNCH)] * len(small_extractor.market.users),
    )
    names = small_extractor.schema.names
    block = X[:, [names.index(n) for n in ANCHOR_SIMILARITY_NAMES]]
    for row in block:
        present = row[~np.isnan(row)]
        assert sorted(present, reverse=True) == list(present)
        # NaN padding only ever trails the real values
        if np.isnan(row).any():
            first_nan = int(np.isnan(row).argmax())
            assert np.isnan(row[first_nan:]).all()


def test_anchor_similarity_values_match_cosine(small_market, small_store, small_extractor, small_now):
    ext = small_extractor
    reps = ext.reps
    (uid, shift), rep = next(iter(sorted(reps.items())))
    col = ext.collections[5]
    row = ext.extract(uid, col.id, shift)
    cvec = ext.collection_vectors[col.id]
    expect = sorted((cosine(v, cvec) for _, v in rep.anchor_items), reverse=True)
    names = ext.schema.names
    got = [row[names.index(n)] for n in ANCHOR_SIMILARITY_NAMES[: len(expect)]]
    np.testing.assert_allclose(got, expect, atol=1e-9)


def test_cold_user_rows(small_market, small_extractor):
    cold = [u for u in small_market.users if not u.order_history]
    assert cold, "small world should include cold-start users"
    names = small_extractor.schema.names
    row = small_extractor.extract(cold[0].id, small_extractor.collections[0].id, 2)
    for n in ANCHOR_SIMILARITY_NAMES:
        assert math.isnan(row[names.index(n)])
    assert row[names.index("user_orders_in_collection_restaurants")] == 0.0
    assert row[names.index("shift_orders_per_restaurant")] == 0.0


def test_vegan_match_column(small_market, small_extractor):
    names = small_extractor.schema.names
    j = names.index("vegan_match")
    vegan_user = next(u for u in small_market.users if u.is_vegan)
    plain_user = next(u for u in small_market.users if not u.is_vegan)
    vegan_cols = [
        c for c in small_extractor.collections if VEGAN_ONLY in c.theme_filters
    ]
    plain_cols = [
        c for c in small_extractor.collections if VEGAN_ONLY not in c.theme_filters
    ]
    assert vegan_cols and plain_cols
    assert small_extractor.extract(vegan_user.id, vegan_cols[0].id, 2)[j] == 1.0
    assert small_extractor.extract(vegan_user.id, plain_cols[0].id, 2)[j] == 0.0
    assert small_extractor.extract(plain_user.id, vegan_cols[0].id, 2)[j] == 0.0


def test_shift_onehots_are_exclusive(small_extractor):
    names = small_extractor.schema.names
    onehots = [names.index(shift_onehot_name(s)) for s in MealShift]
    uid = small_extractor.market.users[0].id
    cid = small_extractor.collections[0].id
    for s in MealShift:
        row = small_extractor.extract(uid, cid, s)
        hot = [row[j] for j in onehots]
        assert hot == [float(x == s) for x in MealShift]


def test_user_order_counts_match_brute_force(small_market, small_extractor, small_now):
    ext = small_extractor
    names = ext.schema.names
    j_total = names.index("user_orders_in_collection_restaurants")
    j_rate = names.index("shift_orders_per_restaurant")
    user = max(small_market.users, key=lambda u: len(u.order_history))
    for col in ext.collections[:6]:
        rests = set(small_market.collection_restaurant_ids(col))
        for shift in (MealShift.LUNCH, MealShift.DINNER):
            row = ext.extract(user.id, col.id, shift)
            total = sum(
                1
                for o in user.order_history
                if o.timestamp <= small_now
                and small_market.dish_by_id[o.dish_id].restaurant_id in rests
            )
            in_shift = sum(
                1
                for o in user.order_history
                if o.timestamp <= small_now
                and o.meal_shift == shift
                and small_market.dish_by_id[o.dish_id].restaurant_id in rests
            )
            assert row[j_total] == total
            assert row[j_rate] == pytest.approx(in_shift / len(rests))


def test_extractor_snapshot_time_freezes_features(small_config, small_now):
    from collectionrank.embedding import build_item_embeddings
    from collectionrank.marketplace import (
        PopularityPolicy,
        generate_marketplace,
        simulate_sessions,
    )

    market = generate_marketplace(small_config, 7)
    store = build_item_embeddings(market, dim=8, seed=7)
    before = FeatureExtractor(market, store, now=small_now)
    uid = market.users[0].id
    cid = before.collections[0].id
    row_before = before.extract(uid, cid, 2)
    simulate_sessions(
        market, PopularityPolicy(4, as_of=small_now), 2000, seed=33,
        start_time=small_now, append_orders=True,
    )
    after = FeatureExtractor(market, store, now=small_now)
    row_after = after.extract(uid, cid, 2)
    np.testing.assert_array_equal(
        np.nan_to_num(row_before, nan=-9.0), np.nan_to_num(row_after, nan=-9.0)
    )


def test_extractor_rejects_misaligned_batches(small_extractor):
    with pytest.raises(ValueError):
        small_extractor.extract_batch([1, 2], [3], [0, 1])


# ---------------------------------------------------------------------------
# matrix files


def test_matrix_round_trip_exact(tmp_path, small_extractor, wide_schema):
    rng = np.random.default_rng(8)
    n = 50
    uids = [small_extractor.market.users[i].id for i in rng.integers(0, 100, n)]
    cids = [small_extractor.collections[i].id for i in rng.integers(0, 8, n)]
    X = small_extractor.extract_batch(uids, cids, rng.integers(0, 5, n))
    path = tmp_path / "features.txt"
    write_matrix(X, wide_schema, path)
    cols, back = read_matrix(path)
    assert cols == [(f.name, f.monotone) for f in wide_schema.features]
    assert back.shape == X.shape
    # repr-based serialization reproduces every float bit-for-bit
    np.testing.assert_array_equal(
        np.nan_to_num(back, nan=-123.25), np.nan_to_num(X, nan=-123.25)
    )
    assert np.array_equal(np.isnan(back), np.isnan(X))


def test_matrix_read_rejects_corruption(tmp_path, wide_schema):
    X = np.zeros((2, len(wide_schema)))
    path = tmp_path / "features.txt"
    write_matrix(X, wide_schema, path)
    lines = path.read_text().splitlines()

    bad = tmp_path / "bad.txt"
    bad.write_text("\n".join(["# wrong"] + lines[1:]) + "\n")
    with pytest.raises(StoreFormatError, match="format"):
        read_matrix(bad)

    bad.write_text(lines[0] + "\n")
    with pytest.raises(StoreFormatError, match="header"):
        read_matrix(bad)

    short_row = ",".join(["0.0"] * (len(wide_schema) - 1))
    bad.write_text("\n".join([lines[0], lines[1], short_row]) + "\n")
    with pytest.raises(StoreFormatError, match="expected"):
        read_matrix(bad)


def test_empty_matrix_round_trip(tmp_path, wide_schema):
    path = tmp_path / "empty.txt"
    write_matrix(np.zeros((0, len(wide_schema))), wide_schema, path)
    cols, X = read_matrix(path)
    assert X.shape == (0, len(wide_schema))
    assert [n for n, _ in cols] == list(wide_schema.names)
