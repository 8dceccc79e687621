"""The from-scratch histogram GBDT: binning, growth, constraints, io."""

from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from collectionrank.boost import (
    GbdtClassifier,
    QuantileBinner,
    ScoringModel,
    feature_importance,
    load_model,
    logistic_gradients,
    model_from_dict,
    model_to_dict,
    save_model,
)
from collectionrank.errors import (
    ConfigError,
    ModelFormatError,
    ModelVersionError,
    SchemaMismatchError,
    TrainingError,
)


def _random_training_data(rng, n=400, d=4):
    X = rng.normal(size=(n, d))
    logits = X @ rng.normal(size=d)
    y = (rng.random(n) < 1.0 / (1.0 + np.exp(-logits))).astype(np.int64)
    if y.min() == y.max():  # fix pathological draws
        y[0] = 1 - y[0]
    return X, y


# ---------------------------------------------------------------------------
# binner


def test_binner_uses_midpoints_for_few_uniques():
    X = np.array([[0.0], [1.0], [1.0], [3.0]])
    binner = QuantileBinner(64).fit(X)
    np.testing.assert_array_equal(binner.thresholds_[0], [0.5, 2.0])
    assert binner.n_real_bins(0) == 3
    codes = binner.transform(np.array([[-5.0], [0.0], [0.7], [1.0], [2.5], [99.0]]))
    assert codes.ravel().tolist() == [0, 0, 1, 1, 2, 2]


def test_binner_missing_code():
    X = np.array([[0.0], [np.nan], [2.0]])
    binner = QuantileBinner(8).fit(X)
    codes = binner.transform(np.array([[np.nan], [0.0], [2.0]]))
    assert codes.ravel().tolist() == [binner.missing_code, 0, 1]
    assert binner.missing_code == 8


def test_binner_constant_feature_has_no_thresholds():
    X = np.column_stack([np.full(10, 3.0), np.arange(10.0)])
    binner = QuantileBinner(64).fit(X)
    assert len(binner.thresholds_[0]) == 0
    assert binner.n_real_bins(0) == 1
    assert len(binner.thresholds_[1]) == 9


def test_binner_quantile_path_caps_bins():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(5000, 1))
    binner = QuantileBinner(16).fit(X)
    assert 2 <= binner.n_real_bins(0) <= 16
    codes = binner.transform(X)
    assert codes.max() < 16
    # roughly balanced occupancy is the point of quantile binning
    counts = np.bincount(codes.ravel(), minlength=16)
    assert counts.min() > 5000 / 16 * 0.5


def test_binner_rejects_too_few_bins():
    with pytest.raises(ValueError):
        QuantileBinner(1)


# ---------------------------------------------------------------------------
# gradients


def test_logistic_gradients_at_zero_score():
    y = np.array([0.0, 1.0])
    g, h = logistic_gradients(y, np.zeros(2))
    np.testing.assert_array_equal(g, [0.5, -0.5])
    np.testing.assert_array_equal(h, [0.25, 0.25])


def test_logistic_gradients_match_finite_differences_quick():
    rng = np.random.default_rng(1)
    margins = rng.uniform(-4, 4, size=40)
    y = rng.integers(0, 2, size=40).astype(float)
    g, h = logistic_gradients(y, margins)
    eps = 1e-6

    def loss(m, yy):
        return yy * np.logaddexp(0.0, -m) + (1 - yy) * np.logaddexp(0.0, m)

    g_fd = (loss(margins + eps, y) - loss(margins - eps, y)) / (2 * eps)
    np.testing.assert_allclose(g, g_fd, rtol=1e-7, atol=1e-9)
    gp, _ = logistic_gradients(y, margins + eps)
    gm, _ = logistic_gradients(y, margins - eps)
    np.testing.assert_allclose(h, (gp - gm) / (2 * eps), rtol=1e-7, atol=1e-9)


# ---------------------------------------------------------------------------
# single-tree growth


def test_first_split_hand_computed_gain():
    # Perfectly separable singleton: p = 0.5, g = +-0.5, h = 0.25 per row.
    # Split at 0.5: GL = 1.0, HL = 0.5; with lambda = 0 the gain is
    # 0.5 * (1/0.5 + 1/0.5 - 0) = 2.0.
    X = np.array([[0.0], [0.0], [1.0], [1.0]])
    y = np.array([0, 0, 1, 1])
    clf = GbdtClassifier(
        n_estimators=1, learning_rate=1.0, max_leaves=2,
        min_samples_leaf=1, l2_regularization=0.0,
    ).fit(X, y)
    tree = clf.trees_[0]
    assert tree.feature[0] == 0
    assert tree.threshold[0] == 0.5
    assert tree.gain[0] == 2.0
    assert tree.n_nodes == 3
    # leaf values are the Newton step -G/H: +-2, i.e. probabilities move
    # from 0.5 toward the pure-leaf labels
    left, right = tree.left[0], tree.right[0]
    assert tree.value[left] == -2.0 and tree.value[right] == 2.0
    assert clf.predict(X).tolist() == [0, 0, 1, 1]


def test_no_admissible_split_grows_a_stump():
    X = np.full((30, 3), 7.0)  # all features constant
    y = np.array([0, 1] * 15)
    clf = GbdtClassifier(n_estimators=3, learning_rate=0.5).fit(X, y)
    for tree in clf.trees_:
        assert tree.n_nodes == 1
        assert tree.feature[0] == -1
    p = clf.predict_proba(X)[:, 1]
    np.testing.assert_allclose(p, 0.5, atol=1e-9)


def test_min_samples_leaf_respected():
    rng = np.random.default_rng(2)
    X, y = _random_training_data(rng, n=300)
    msl = 25
    clf = GbdtClassifier(n_estimators=10, min_samples_leaf=msl).fit(X, y)
    for tree in clf.trees_:
        leaves = tree.feature == -1
        assert (tree.n_samples[leaves] >= msl).all()
        assert tree.n_samples[0] == 300


def test_leafwise_growth_caps_leaves():
    rng = np.random.default_rng(3)
    X, y = _random_training_data(rng, n=500)
    clf = GbdtClassifier(n_estimators=5, max_leaves=6, min_samples_leaf=5).fit(X, y)
    for tree in clf.trees_:
        n_leaves = int((tree.feature == -1).sum())
        assert 1 <= n_leaves <= 6
        # a binary tree with L leaves has exactly 2L - 1 nodes
        assert tree.n_nodes == 2 * n_leaves - 1


def test_predict_one_agrees_with_vectorized_traversal():
    rng = np.random.default_rng(4)
    X, y = _random_training_data(rng, n=300)
    X[rng.random(X.shape) < 0.15] = np.nan
    clf = GbdtClassifier(n_estimators=8, min_samples_leaf=5).fit(X, y)
    X_test = rng.normal(size=(80, 4))
    X_test[rng.random(X_test.shape) < 0.25] = np.nan
    for tree in clf.trees_:
        vec = tree.predict_rows(X_test)
        ref = np.array([tree.predict_one(row) for row in X_test])
        np.testing.assert_array_equal(vec, ref)


# ---------------------------------------------------------------------------
# estimator behaviour


def test_training_loss_never_increases():
    rng = np.random.default_rng(5)
    X, y = _random_training_data(rng, n=600)
    clf = GbdtClassifier(n_estimators=40, learning_rate=0.2).fit(X, y)
    losses = np.asarray(clf.train_losses_)
    assert len(losses) == 41
    assert (np.diff(losses) <= 1e-9).all()
    assert losses[-1] < losses[0]


def test_base_score_is_prior_log_odds():
    X = np.column_stack([np.arange(10.0)])
    y = np.array([0, 0, 0, 0, 0, 0, 0, 1, 1, 1])
    clf = GbdtClassifier(n_estimators=1).fit(X, y)
    assert clf.base_score_ == pytest.approx(math.log(0.3 / 0.7), rel=1e-12)


def test_perfectly_separable_1d():
    X = np.arange(20.0).reshape(-1, 1)
    y = (X.ravel() >= 11).astype(int)
    clf = GbdtClassifier(
        n_estimators=30, learning_rate=0.3, min_samples_leaf=1
    ).fit(X, y)
    assert clf.predict(X).tolist() == y.tolist()
    p = clf.predict_proba(X)[:, 1]
    assert p[y == 1].min() > 0.9 and p[y == 0].max() < 0.1


def test_predict_proba_and_predict_consistency():
    rng = np.random.default_rng(6)
    X, y = _random_training_data(rng)
    clf = GbdtClassifier(n_estimators=10).fit(X, y)
    proba = clf.predict_proba(X)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-12)
    assert (proba >= 0).all() and (proba <= 1).all()
    np.testing.assert_array_equal(clf.predict(X), clf.decision_function(X) > 0)
    np.testing.assert_array_equal(clf.classes_, [0, 1])


def test_fit_is_deterministic():
    rng = np.random.default_rng(7)
    X, y = _random_training_data(rng)
    a = GbdtClassifier(n_estimators=12).fit(X, y)
    b = GbdtClassifier(n_estimators=12).fit(X, y)
    assert model_to_dict(a) == model_to_dict(b)


def test_label_validation():
    X = np.zeros((4, 1))
    with pytest.raises(TrainingError, match="single class"):
        GbdtClassifier().fit(np.arange(4.0).reshape(-1, 1), [1, 1, 1, 1])
    with pytest.raises(TrainingError, match="0/1"):
        GbdtClassifier().fit(X, [0, 1, 2, 1])
    with pytest.raises(ValueError):
        GbdtClassifier().fit(X, [0, 1])  # wrong length


@pytest.mark.parametrize(
    "kwargs",
    [
        {"n_estimators": 0},
        {"learning_rate": 0.0},
        {"learning_rate": 1.5},
        {"max_leaves": 1},
        {"min_samples_leaf": 0},
        {"l2_regularization": -0.5},
        {"n_bins": 1},
    ],
)
def test_hyperparameter_validation(kwargs):
    X = np.arange(8.0).reshape(-1, 1)
    y = np.array([0, 1, 0, 1, 0, 1, 0, 1])
    with pytest.raises(ConfigError):
        GbdtClassifier(**kwargs).fit(X, y)


def test_monotonic_cst_validation():
    X = np.zeros((6, 2))
    X[:, 0] = np.arange(6)
    y = np.array([0, 1, 0, 1, 0, 1])
    with pytest.raises(ConfigError, match="one flag per feature"):
        GbdtClassifier(monotonic_cst=[1]).fit(X, y)
    with pytest.raises(ConfigError, match="-1, 0, or \\+1"):
        GbdtClassifier(monotonic_cst=[1, 2]).fit(X, y)


def test_unfitted_and_shape_errors():
    clf = GbdtClassifier()
    with pytest.raises(ValueError, match="not fitted"):
        clf.predict(np.zeros((2, 2)))
    rng = np.random.default_rng(8)
    X, y = _random_training_data(rng, n=100, d=3)
    clf.fit(X, y)
    with pytest.raises(ValueError, match="features"):
        clf.predict(np.zeros((2, 5)))
    with pytest.raises(ValueError, match="2-dimensional"):
        clf.predict(np.zeros(3))


def test_get_params_round_trip():
    clf = GbdtClassifier(n_estimators=5, learning_rate=0.3, monotonic_cst=[1, 0])
    params = clf.get_params()
    assert params["n_estimators"] == 5
    again = GbdtClassifier(**params)
    assert again.get_params() == params


# ---------------------------------------------------------------------------
# monotone constraints


def _check_monotone(clf, X_base, flags, rng, deltas=(0.25, 1.0, 3.0)):
    base = clf.decision_function(X_base)
    for f, flag in enumerate(flags):
        if flag == 0:
            continue
        for d in deltas:
            X_up = X_base.copy()
            X_up[:, f] = X_up[:, f] + d
            up = clf.decision_function(X_up)
            diff = (up - base) * flag
            assert (diff >= 0).all(), (
                f"monotone violation on feature {f} (flag {flag:+d}, delta {d})"
            )


def test_monotone_flags_enforced_on_random_models():
    rng = np.random.default_rng(9)
    flags = [1, -1, 0, 1]
    for trial in range(3):
        X, y = _random_training_data(rng, n=400, d=4)
        clf = GbdtClassifier(
            n_estimators=25, learning_rate=0.2, min_samples_leaf=5,
            monotonic_cst=flags,
        ).fit(X, y)
        X_base = rng.normal(size=(60, 4))
        X_base[rng.random(X_base.shape) < 0.1] = np.nan
        # NaN in the perturbed coordinate itself routes identically, so only
        # perturb rows where the flagged feature is present
        for f, flag in enumerate(flags):
            if flag == 0:
                continue
            rows = ~np.isnan(X_base[:, f])
            _check_monotone(clf, X_base[rows], flags, rng)
            break


def test_monotone_constraint_binds_against_the_data():
    # y falls with x, yet the +1 flag forbids a decreasing score
    X = np.arange(40.0).reshape(-1, 1)
    y = (X.ravel() < 20).astype(int)
    clf = GbdtClassifier(
        n_estimators=20, learning_rate=0.3, min_samples_leaf=1, monotonic_cst=[1]
    ).fit(X, y)
    scores = clf.decision_function(X)
    assert (np.diff(scores) >= 0).all()
    free = GbdtClassifier(
        n_estimators=20, learning_rate=0.3, min_samples_leaf=1
    ).fit(X, y)
    assert (np.diff(free.decision_function(X)) < 0).any()


def test_monotone_increasing_scores_on_sorted_inputs():
    rng = np.random.default_rng(10)
    X, y0 = _random_training_data(rng, n=500, d=3)
    y = ((X[:, 0] + 0.3 * rng.normal(size=500)) > 0).astype(int)
    clf = GbdtClassifier(
        n_estimators=30, monotonic_cst=[1, 0, 0], min_samples_leaf=5
    ).fit(X, y)
    grid = np.linspace(-3, 3, 61)
    probe = np.zeros((61, 3))
    probe[:, 0] = grid
    scores = clf.decision_function(probe)
    assert (np.diff(scores) >= 0).all()


@settings(max_examples=15, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_monotone_single_feature_property(seed):
    rng = np.random.default_rng(seed)
    n = 80
    X = rng.choice([0.0, 0.5, 1.0, 2.0, 5.0], size=(n, 2))
    y = rng.integers(0, 2, size=n)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    clf = GbdtClassifier(
        n_estimators=6, learning_rate=0.4, min_samples_leaf=2,
        monotonic_cst=[-1, 1],
    ).fit(X, y)
    probe = rng.choice([0.0, 0.25, 0.75, 1.5, 4.0], size=(30, 2))
    base = clf.decision_function(probe)
    bumped = probe.copy()
    bumped[:, 0] += 0.6
    assert (clf.decision_function(bumped) <= base).all()
    bumped = probe.copy()
    bumped[:, 1] += 0.6
    assert (clf.decision_function(bumped) >= base).all()


# ---------------------------------------------------------------------------
# serialization


def _fitted(rng=None, **kwargs):
    rng = rng or np.random.default_rng(11)
    X, y = _random_training_data(rng, n=300, d=4)
    X[rng.random(X.shape) < 0.1] = np.nan
    defaults = dict(n_estimators=15, min_samples_leaf=5, monotonic_cst=[1, 0, -1, 0])
    defaults.update(kwargs)
    return GbdtClassifier(**defaults).fit(X, y)


def test_model_file_round_trip_bitwise(tmp_path):
    rng = np.random.default_rng(12)
    clf = _fitted(rng)
    path = tmp_path / "model.json"
    save_model(clf, path)
    again = load_model(path)
    assert isinstance(again, GbdtClassifier)
    X_test = rng.normal(size=(50, 4))
    X_test[rng.random(X_test.shape) < 0.2] = np.nan
    np.testing.assert_array_equal(
        clf.decision_function(X_test), again.decision_function(X_test)
    )
    # byte-stable re-save
    path2 = tmp_path / "model2.json"
    save_model(again, path2)
    assert path.read_bytes() == path2.read_bytes()
    assert path.read_bytes().endswith(b"\n")


def test_scoring_model_round_trip(tmp_path, wide_schema, small_model):
    path = tmp_path / "model.json"
    save_model(small_model, path)
    again = load_model(path)
    assert isinstance(again, ScoringModel)
    assert again.schema.fingerprint() == wide_schema.fingerprint()
    rng = np.random.default_rng(13)
    X = rng.normal(size=(20, len(wide_schema)))
    np.testing.assert_array_equal(
        small_model.score_matrix(X, wide_schema), again.score_matrix(X, wide_schema)
    )


def test_scoring_model_rejects_wrong_schema(small_model):
    from collectionrank.features import build_feature_schema

    narrow = build_feature_schema()  # no total_orders column
    X = np.zeros((2, len(narrow)))
    with pytest.raises(SchemaMismatchError):
        small_model.score_matrix(X, narrow)


def test_model_file_error_paths(tmp_path):
    clf = _fitted()
    path = tmp_path / "model.json"
    save_model(clf, path)
    d = json.loads(path.read_text())

    with pytest.raises(ModelFormatError, match="format"):
        model_from_dict(dict(d, format="something.else"))

    with pytest.raises(ModelVersionError):
        model_from_dict(dict(d, format_version=[2, 0]))

    # newer minor version must load
    assert model_from_dict(dict(d, format_version=[1, 9])) is not None

    bad = dict(d)
    del bad["base_score"]
    with pytest.raises(ModelFormatError):
        model_from_dict(bad)

    path.write_text("{broken json")
    with pytest.raises(ModelFormatError, match="corrupt"):
        load_model(path)


def test_model_fingerprint_tamper_detected(tmp_path, small_model):
    path = tmp_path / "model.json"
    save_model(small_model, path)
    d = json.loads(path.read_text())
    d["schema_fingerprint"] = "0" * 64
    with pytest.raises(ModelFormatError, match="fingerprint"):
        model_from_dict(d)


def test_unfitted_model_cannot_serialize():
    with pytest.raises(ValueError, match="unfitted"):
        model_to_dict(GbdtClassifier())


def test_feature_importance_accounts_every_split():
    clf = _fitted()
    imp = feature_importance(clf)
    assert set(imp) == {"f0", "f1", "f2", "f3"}
    total_splits = sum(v["split_count"] for v in imp.values())
    expect = sum(int((t.feature >= 0).sum()) for t in clf.trees_)
    assert total_splits == expect
    total_gain = sum(v["total_gain"] for v in imp.values())
    expect_gain = sum(float(t.gain[t.feature >= 0].sum()) for t in clf.trees_)
    assert total_gain == pytest.approx(expect_gain, rel=1e-12)
    assert all(v["total_gain"] >= 0 for v in imp.values())


def test_feature_importance_uses_schema_names(small_model):
    imp = feature_importance(small_model)
    assert set(imp) == set(small_model.schema.names)
