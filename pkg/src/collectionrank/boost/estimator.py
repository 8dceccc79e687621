"""Gradient-boosted trees binary classifier with monotone constraints.

sklearn-style estimator: construct with hyperparameters, ``fit(X, y)``,
then ``predict_proba``/``predict``/``decision_function``. NaN in X means
"missing" and is routed down learned default branches. ``monotonic_cst``
takes one flag per feature: +1 forces the score to be non-decreasing in the
feature, -1 non-increasing, 0 unconstrained.

Training is logistic-loss Newton boosting: per round, gradients
g = p - y and hessians h = p(1 - p) at the current scores, one histogram
tree grown leaf-wise per round, leaf values -G/(H + lambda) clipped to
monotone bounds, scores updated by learning_rate times the leaf value.
Training has no stochastic component; ``random_state`` is accepted for API
familiarity and echoed into artifacts but never consumed.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from ..errors import ConfigError, TrainingError
from .grower import QuantileBinner, Tree, TreeGrower

_LOGLOSS_BACKSLIDE_TOL = 1e-9


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _logloss(y: np.ndarray, p: np.ndarray) -> float:
    eps = 1e-15
    p = np.clip(p, eps, 1 - eps)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def logistic_gradients(y: np.ndarray, scores: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-row (gradient, hessian) of the logistic loss at raw scores."""
    p = _sigmoid(scores)
    return p - y, p * (1.0 - p)


class GbdtClassifier(ClassifierMixin, BaseEstimator):
    """Histogram GBDT for y in {0, 1} with per-feature monotone flags."""

    def __init__(
        self,
        n_estimators: int = 200,
        learning_rate: float = 0.1,
        max_leaves: int = 31,
        min_samples_leaf: int = 20,
        l2_regularization: float = 1.0,
        n_bins: int = 64,
        monotonic_cst=None,
        random_state: int = 0,
    ):
        self.n_estimators = n_estimators
        self.learning_rate = learning_rate
        self.max_leaves = max_leaves
        self.min_samples_leaf = min_samples_leaf
        self.l2_regularization = l2_regularization
        self.n_bins = n_bins
        self.monotonic_cst = monotonic_cst
        self.random_state = random_state

    def _validate_params_strict(self) -> None:
        if self.n_estimators < 1:
            raise ConfigError("n_estimators must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ConfigError("learning_rate must be in (0, 1]")
        if self.max_leaves < 2:
            raise ConfigError("max_leaves must be >= 2")
        if self.min_samples_leaf < 1:
            raise ConfigError("min_samples_leaf must be >= 1")
        if self.l2_regularization < 0:
            raise ConfigError("l2_regularization must be >= 0")
        if self.n_bins < 2:
            raise ConfigError("n_bins must be >= 2")

    def _check_X(self, X, *, fitted: bool) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError(f"X must be 2-dimensional, got shape {X.shape}")
        if fitted and X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, model was fit with {self.n_features_in_}"
            )
        return X

    def fit(self, X, y) -> "GbdtClassifier":
        self._validate_params_strict()
        X = self._check_X(X, fitted=False)
        y = np.asarray(y)
        if y.shape != (len(X),):
            raise ValueError("y must be one label per row")
        classes = np.unique(y)
        if not np.isin(classes, (0, 1)).all():
            raise TrainingError(f"labels must be 0/1, got classes {classes}")
        if len(classes) < 2:
            raise TrainingError("training data contains a single class")
        y = y.astype(np.float64)

        n_features = X.shape[1]
        if self.monotonic_cst is None:
            monotone = np.zeros(n_features, dtype=np.int64)
        else:
            monotone = np.asarray(self.monotonic_cst, dtype=np.int64)
            if monotone.shape != (n_features,):
                raise ConfigError(
                    f"monotonic_cst needs one flag per feature "
                    f"({n_features}), got shape {monotone.shape}"
                )
            if not np.isin(monotone, (-1, 0, 1)).all():
                raise ConfigError("monotonic_cst entries must be -1, 0, or +1")

        binner = QuantileBinner(self.n_bins).fit(X)
        codes = binner.transform(X)
        grower = TreeGrower(
            binner,
            monotone,
            max_leaves=self.max_leaves,
            min_samples_leaf=self.min_samples_leaf,
            l2_regularization=self.l2_regularization,
        )

        mean_y = float(np.clip(y.mean(), 1e-12, 1 - 1e-12))
        base = float(np.log(mean_y / (1.0 - mean_y)))
        scores = np.full(len(X), base)
        trees: list[Tree] = []
        losses = [_logloss(y, _sigmoid(scores))]
        for _ in range(self.n_estimators):
            g, h = logistic_gradients(y, scores)
            tree, leaf_out = grower.grow(codes, g, h)
            trees.append(tree)
            scores += self.learning_rate * leaf_out
            loss = _logloss(y, _sigmoid(scores))
            if loss > losses[-1] + _LOGLOSS_BACKSLIDE_TOL:
                raise TrainingError(
                    f"training logloss increased ({losses[-1]:.6g} -> {loss:.6g}); "
                    "lower the learning rate"
                )
            losses.append(loss)

        self.classes_ = np.asarray([0, 1])
        self.n_features_in_ = n_features
        self.monotonic_cst_ = monotone
        self.base_score_ = base
        self.trees_ = trees
        self.train_losses_ = losses
        return self

    def _assert_fitted(self) -> None:
        if not hasattr(self, "trees_"):
            raise ValueError("this GbdtClassifier instance is not fitted yet")

    def decision_function(self, X) -> np.ndarray:
        """Raw log-odds scores: base + lr * sum of tree outputs."""
        self._assert_fitted()
        X = self._check_X(X, fitted=True)
        scores = np.full(len(X), self.base_score_)
        for tree in self.trees_:
            scores += self.learning_rate * tree.predict_rows(X)
        return scores

    def predict_proba(self, X) -> np.ndarray:
        p1 = _sigmoid(self.decision_function(X))
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) > 0).astype(np.int64)
