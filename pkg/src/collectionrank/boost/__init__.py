"""From-scratch monotonicity-constrained histogram gradient boosting."""

from .estimator import GbdtClassifier, logistic_gradients
from .grower import QuantileBinner, Tree, TreeGrower
from .io import (
    ScoringModel,
    feature_importance,
    load_model,
    model_from_dict,
    model_to_dict,
    save_model,
)

__all__ = [
    "GbdtClassifier",
    "QuantileBinner",
    "ScoringModel",
    "Tree",
    "TreeGrower",
    "feature_importance",
    "load_model",
    "logistic_gradients",
    "model_from_dict",
    "model_to_dict",
    "save_model",
]
