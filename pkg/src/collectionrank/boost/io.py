"""Model serialization and the schema-bound scoring wrapper.

The model file is canonical JSON (sorted keys, compact separators, one
trailing newline): floats survive the round trip exactly, so a reloaded
model predicts bit-identically, and re-saving an unchanged model reproduces
the file byte-for-byte. The format is versioned [major, minor]; readers
reject files with a newer major version.

Layout (all keys always present):
    format: "collectionrank.model"
    format_version: [1, 0]
    schema: embedded feature schema dict, or null for a bare model
    schema_fingerprint: sha256 hex of the schema, or null
    params: constructor hyperparameters incl. monotonic_cst
    n_features: column count the model was fit on
    base_score: prior log-odds
    trees: list of flat node-array dicts (feature -1 = leaf; rows go left
        when x <= threshold; NaN follows missing_left)
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from ..errors import ModelFormatError, ModelVersionError, SchemaMismatchError
from ..features.schema import FeatureSchema
from .estimator import GbdtClassifier
from .grower import Tree

MODEL_FORMAT = "collectionrank.model"
FORMAT_VERSION = (1, 0)


@dataclass
class ScoringModel:
    """A fitted booster bound to the feature schema it was trained under."""

    estimator: GbdtClassifier
    schema: FeatureSchema

    def fingerprint(self) -> str:
        return self.schema.fingerprint()

    def _check_schema(self, schema: FeatureSchema) -> None:
        if schema.fingerprint() != self.schema.fingerprint():
            raise SchemaMismatchError(
                "feature rows come from a different schema than the model was "
                "trained on; rebuild the dataset or retrain"
            )

    def score_matrix(self, X: np.ndarray, schema: FeatureSchema) -> np.ndarray:
        """Purchase probability per row; refuses mismatched schemas."""
        self._check_schema(schema)
        return self.estimator.predict_proba(X)[:, 1]

    def predict(self, X: np.ndarray, schema: FeatureSchema) -> np.ndarray:
        return self.score_matrix(X, schema)


def _tree_to_dict(tree: Tree) -> dict[str, Any]:
    return {
        "feature": tree.feature.tolist(),
        "threshold": tree.threshold.tolist(),
        "missing_left": [int(b) for b in tree.missing_left],
        "left": tree.left.tolist(),
        "right": tree.right.tolist(),
        "value": tree.value.tolist(),
        "n_samples": tree.n_samples.tolist(),
        "gain": tree.gain.tolist(),
    }


def _tree_from_dict(d: dict[str, Any]) -> Tree:
    try:
        return Tree(
            feature=np.asarray(d["feature"], dtype=np.int32),
            threshold=np.asarray(d["threshold"], dtype=np.float64),
            missing_left=np.asarray(d["missing_left"], dtype=bool),
            left=np.asarray(d["left"], dtype=np.int32),
            right=np.asarray(d["right"], dtype=np.int32),
            value=np.asarray(d["value"], dtype=np.float64),
            n_samples=np.asarray(d["n_samples"], dtype=np.int64),
            gain=np.asarray(d["gain"], dtype=np.float64),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFormatError(f"malformed tree record: {e}") from e


def model_to_dict(model: GbdtClassifier | ScoringModel) -> dict[str, Any]:
    if isinstance(model, ScoringModel):
        estimator, schema = model.estimator, model.schema
    else:
        estimator, schema = model, None
    if not hasattr(estimator, "trees_"):
        raise ValueError("cannot serialize an unfitted model")
    monotone = getattr(estimator, "monotonic_cst_", None)
    return {
        "format": MODEL_FORMAT,
        "format_version": list(FORMAT_VERSION),
        "schema": schema.to_dict() if schema is not None else None,
        "schema_fingerprint": schema.fingerprint() if schema is not None else None,
        "params": {
            "n_estimators": estimator.n_estimators,
            "learning_rate": estimator.learning_rate,
            "max_leaves": estimator.max_leaves,
            "min_samples_leaf": estimator.min_samples_leaf,
            "l2_regularization": estimator.l2_regularization,
            "n_bins": estimator.n_bins,
            "monotonic_cst": None if monotone is None else [int(m) for m in monotone],
            "random_state": estimator.random_state,
        },
        "n_features": int(estimator.n_features_in_),
        "base_score": float(estimator.base_score_),
        "trees": [_tree_to_dict(t) for t in estimator.trees_],
    }


def model_from_dict(d: dict[str, Any]) -> GbdtClassifier | ScoringModel:
    if not isinstance(d, dict) or d.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"not a model file (format={d.get('format')!r})")
    version = d.get("format_version")
    if not (isinstance(version, list) and len(version) == 2):
        raise ModelFormatError(f"malformed format_version {version!r}")
    if version[0] > FORMAT_VERSION[0]:
        raise ModelVersionError(
            f"model format major version {version[0]} is newer than supported "
            f"{FORMAT_VERSION[0]}"
        )
    try:
        params = d["params"]
        estimator = GbdtClassifier(
            n_estimators=params["n_estimators"],
            learning_rate=params["learning_rate"],
            max_leaves=params["max_leaves"],
            min_samples_leaf=params["min_samples_leaf"],
            l2_regularization=params["l2_regularization"],
            n_bins=params["n_bins"],
            monotonic_cst=params["monotonic_cst"],
            random_state=params["random_state"],
        )
        estimator.classes_ = np.asarray([0, 1])
        estimator.n_features_in_ = int(d["n_features"])
        if params["monotonic_cst"] is not None:
            estimator.monotonic_cst_ = np.asarray(params["monotonic_cst"], dtype=np.int64)
        else:
            estimator.monotonic_cst_ = np.zeros(estimator.n_features_in_, dtype=np.int64)
        estimator.base_score_ = float(d["base_score"])
        estimator.trees_ = [_tree_from_dict(t) for t in d["trees"]]
    except (KeyError, TypeError) as e:
        raise ModelFormatError(f"malformed model file: {e}") from e
    if d.get("schema") is None:
        return estimator
    schema = FeatureSchema.from_dict(d["schema"])
    if d.get("schema_fingerprint") != schema.fingerprint():
        raise ModelFormatError("schema fingerprint does not match embedded schema")
    return ScoringModel(estimator=estimator, schema=schema)


def save_model(model: GbdtClassifier | ScoringModel, path: str | Path) -> None:
    blob = json.dumps(model_to_dict(model), sort_keys=True, separators=(",", ":"))
    Path(path).write_bytes(blob.encode() + b"\n")


def load_model(path: str | Path) -> GbdtClassifier | ScoringModel:
    try:
        d = json.loads(Path(path).read_bytes())
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"{path}: corrupt model file: {e}") from e
    return model_from_dict(d)


def feature_importance(
    model: GbdtClassifier | ScoringModel,
) -> dict[str, dict[str, float]]:
    """Per-feature split counts and total gain summed over all trees."""
    if isinstance(model, ScoringModel):
        estimator = model.estimator
        names = model.schema.names
    else:
        estimator = model
        names = [f"f{i}" for i in range(estimator.n_features_in_)]
    counts = np.zeros(estimator.n_features_in_, dtype=np.int64)
    gains = np.zeros(estimator.n_features_in_)
    for tree in getattr(estimator, "trees_", []):
        internal = tree.feature >= 0
        np.add.at(counts, tree.feature[internal], 1)
        np.add.at(gains, tree.feature[internal], tree.gain[internal])
    return {
        name: {"split_count": int(counts[i]), "total_gain": float(gains[i])}
        for i, name in enumerate(names)
    }
