"""A common scoring interface over trained models and baselines.

Every scorer assigns a relevance score to (user, collection, shift) rows;
evaluation code only ever compares scores, so any strictly increasing
transform of a scorer's output is equivalent.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from typing import TYPE_CHECKING, Sequence

import numpy as np

from ..boost.io import ScoringModel
from ..errors import ConfigError, SchemaMismatchError
from ..features.extract import FeatureExtractor
from ..marketplace.choice import ChoiceSetup
from ..marketplace.policies import popularity_counts
from ..marketplace.types import Marketplace

if TYPE_CHECKING:
    from ..dataset import LabeledDataset


class Scorer(ABC):
    """Scores (user, collection, shift) rows; higher means better."""

    model_id: str = "scorer"

    @abstractmethod
    def score_rows(
        self,
        user_ids: Sequence[int],
        collection_ids: Sequence[int],
        shifts: Sequence[int],
    ) -> np.ndarray:
        """Return one float score per row."""

    def score_dataset(self, ds: "LabeledDataset") -> np.ndarray:
        return self.score_rows(
            ds.row_user_ids(), ds.row_collection_ids(), ds.row_shifts()
        )


class ModelScorer(Scorer):
    """Trained model scores, via stored features or on-the-fly extraction.

    A dataset scores through its own matrix; the model's feature set may be
    a subset of the dataset's columns (same names, same monotone flags),
    which is how ablation variants share one extracted matrix. Ad hoc rows
    need an extractor covering the model's features.
    """

    def __init__(
        self,
        model: ScoringModel,
        extractor: FeatureExtractor | None = None,
        model_id: str = "model",
    ):
        self.model = model
        self.extractor = extractor
        self.model_id = model_id
        if extractor is not None:
            self._extract_cols = self._projection(extractor.schema)

    def _projection(self, wide_schema) -> list[int]:
        pos = {f.name: i for i, f in enumerate(wide_schema.features)}
        cols = []
        for f in self.model.schema.features:
            if f.name not in pos or wide_schema.features[pos[f.name]] != f:
                raise SchemaMismatchError(
                    f"feature {f.name!r} of model {self.model_id!r} is absent "
                    "from the provided columns (or flagged differently)"
                )
            cols.append(pos[f.name])
        return cols

    def score_rows(self, user_ids, collection_ids, shifts) -> np.ndarray:
        if self.extractor is None:
            raise ConfigError(
                "ModelScorer needs a FeatureExtractor to score ad hoc rows"
            )
        X = self.extractor.extract_batch(user_ids, collection_ids, shifts)
        return self.model.score_matrix(X[:, self._extract_cols], self.model.schema)

    def score_dataset(self, ds: "LabeledDataset") -> np.ndarray:
        cols = self._projection(ds.schema)
        return self.model.score_matrix(ds.X[:, cols], self.model.schema)


class PopularityScorer(Scorer):
    """Aggregate demand per collection; the user and shift are ignored."""

    def __init__(
        self,
        market: Marketplace,
        setup: ChoiceSetup,
        as_of: int | None = None,
        model_id: str = "popularity",
    ):
        self.model_id = model_id
        self._counts = popularity_counts(market, setup, as_of)
        self._ids = setup.collection_ids

    def score_rows(self, user_ids, collection_ids, shifts) -> np.ndarray:
        cids = np.asarray(collection_ids, dtype=np.int64)
        j = np.searchsorted(self._ids, cids)
        j_safe = np.clip(j, 0, len(self._ids) - 1)
        known = self._ids[j_safe] == cids
        # Cold collections have no demand yet; score them zero.
        return np.where(known, self._counts[j_safe], 0.0)


class OracleScorer(Scorer):
    """The simulator's own latent utilities; an upper bound, not a model."""

    def __init__(self, market: Marketplace, setup: ChoiceSetup, model_id: str = "oracle"):
        self.model_id = model_id
        self._setup = setup
        self._user_index = {u.id: i for i, u in enumerate(market.users)}

    def score_rows(self, user_ids, collection_ids, shifts) -> np.ndarray:
        uidx = np.asarray([self._user_index[int(u)] for u in user_ids])
        cidx = np.asarray(
            [self._setup.index_of(int(c)) for c in collection_ids]
        )
        sidx = np.asarray(shifts, dtype=np.int64)
        return self._setup.utilities[uidx, cidx, sidx]


class ConstantScorer(Scorer):
    def __init__(self, value: float = 0.0, model_id: str = "constant"):
        self.model_id = model_id
        self.value = float(value)

    def score_rows(self, user_ids, collection_ids, shifts) -> np.ndarray:
        return np.full(len(user_ids), self.value)


class NegatedScorer(Scorer):
    """Sign-flipped wrapper; turns a scorer into its own worst case."""

    def __init__(self, inner: Scorer):
        self.inner = inner
        self.model_id = f"negated-{inner.model_id}"

    def score_rows(self, user_ids, collection_ids, shifts) -> np.ndarray:
        return -self.inner.score_rows(user_ids, collection_ids, shifts)

    def score_dataset(self, ds: "LabeledDataset") -> np.ndarray:
        return -self.inner.score_dataset(ds)


def as_scorer(model) -> Scorer:
    """Accept a Scorer as-is; wrap a bare ScoringModel."""
    if isinstance(model, Scorer):
        return model
    if isinstance(model, ScoringModel):
        return ModelScorer(model)
    raise ConfigError(f"cannot score with object of type {type(model).__name__}")


def score_tensor(
    scorer: Scorer, market: Marketplace, setup: ChoiceSetup, n_shifts: int = 5
) -> np.ndarray:
    """Score every (user, collection, shift) cell for a display policy table."""
    n_users, m = len(market.users), len(setup.collections)
    user_ids = np.repeat([u.id for u in market.users], m * n_shifts)
    col_ids = np.tile(np.repeat(setup.collection_ids, n_shifts), n_users)
    shifts = np.tile(np.arange(n_shifts), n_users * m)
    flat = scorer.score_rows(user_ids, col_ids, shifts)
    return np.asarray(flat, dtype=float).reshape(n_users, m, n_shifts)
