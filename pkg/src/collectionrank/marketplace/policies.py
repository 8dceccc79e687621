"""Display policies: which collections a session shows to the user.

A policy turns (user, shift, home) batches into rows of displayed collection
indices. Indices refer to positions in the ChoiceSetup's sorted collection
universe; -1 pads unused card slots. Policies must only display collections
eligible for the session's home; the engine enforces this.
"""

from __future__ import annotations

import numpy as np

from .choice import ChoiceSetup
from .types import Marketplace


class DisplayPolicy:
    """Base class. Subclasses fill display_batch; prepare may precompute."""

    def __init__(self, n_cards: int):
        if n_cards < 1:
            raise ValueError("n_cards must be >= 1")
        self.n_cards = n_cards
        self.setup: ChoiceSetup | None = None

    def prepare(self, setup: ChoiceSetup, market: Marketplace) -> None:
        self.setup = setup

    def display_batch(
        self,
        user_idx: np.ndarray,
        shift_idx: np.ndarray,
        home_idx: np.ndarray,
        rng: np.random.Generator,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Return (displayed, exploration_flags).

        displayed: (n, n_cards) int32 universe indices, -1 padded.
        exploration_flags: (n,) bool, True where the row was an exploration
        override rather than the policy's own ranking.
        """
        raise NotImplementedError


class RankingPolicy(DisplayPolicy):
    """Top-k by a score tensor, ties broken by ascending collection id.

    ``scores`` may be (n_users, m, n_shifts) for personalized scores or (m,)
    for a static ranking; m is the size of the collection universe.
    """

    def __init__(self, scores: np.ndarray | None, n_cards: int):
        super().__init__(n_cards)
        self._scores = None if scores is None else np.asarray(scores, dtype=float)
        self._table: np.ndarray | None = None  # (homes, users, shifts, k)

    def _score_tensor(self, setup: ChoiceSetup, market: Marketplace) -> np.ndarray:
        if self._scores is None:
            raise ValueError("RankingPolicy needs scores")
        return self._scores

    def prepare(self, setup: ChoiceSetup, market: Marketplace) -> None:
        super().prepare(setup, market)
        n_users = len(market.users)
        n_shifts = setup.utilities.shape[2]
        m = len(setup.collections)
        scores = self._score_tensor(setup, market)
        if scores.ndim == 1:
            scores = np.broadcast_to(scores[None, :, None], (n_users, m, n_shifts))
        if scores.shape != (n_users, m, n_shifts):
            raise ValueError(f"scores shape {scores.shape} does not match universe")
        n_homes = setup.eligibility.shape[0]
        table = np.full((n_homes, n_users, n_shifts, self.n_cards), -1, dtype=np.int32)
        for h in range(n_homes):
            elig = np.flatnonzero(setup.eligibility[h])
            if len(elig) == 0:
                continue
            k = min(self.n_cards, len(elig))
            sub = scores[:, elig, :]  # (users, m_h, shifts)
            # Stable sort keeps ascending universe order (= ascending id) on ties.
            order = np.argsort(-sub, axis=1, kind="stable")[:, :k, :]
            picked = elig[order]  # (users, k, shifts)
            table[h, :, :, :k] = picked.transpose(0, 2, 1)
        self._table = table

    def display_batch(self, user_idx, shift_idx, home_idx, rng):
        assert self._table is not None, "prepare() not called"
        disp = self._table[home_idx, user_idx, shift_idx]
        flags = np.zeros(len(user_idx), dtype=bool)
        return disp, flags


class OraclePolicy(RankingPolicy):
    """Ranks by the ground-truth utility tensor (upper bound policy)."""

    def __init__(self, n_cards: int):
        super().__init__(None, n_cards)

    def _score_tensor(self, setup: ChoiceSetup, market: Marketplace) -> np.ndarray:
        return setup.utilities


class PopularityPolicy(RankingPolicy):
    """Static ranking by historical order counts attributed by membership.

    An order counts toward every collection in the universe containing
    its dish (directly, or via the dish's restaurant).
    """

    def __init__(self, n_cards: int, as_of: int | None = None):
        super().__init__(None, n_cards)
        self.as_of = as_of

    def _score_tensor(self, setup: ChoiceSetup, market: Marketplace) -> np.ndarray:
        return popularity_counts(market, setup, as_of=self.as_of)


def popularity_counts(
    market: Marketplace, setup: ChoiceSetup, as_of: int | None = None
) -> np.ndarray:
    """Per-collection order counts over the universe, optionally time-capped."""
    dish_to_cols: dict[int, list[int]] = {}
    for j, c in enumerate(setup.collections):
        for did in market.collection_member_dish_ids(c):
            dish_to_cols.setdefault(did, []).append(j)
    counts = np.zeros(len(setup.collections))
    for order in market.all_orders():
        if as_of is not None and order.timestamp > as_of:
            continue
        for j in dish_to_cols.get(order.dish_id, ()):
            counts[j] += 1
    return counts


class FixedPolicy(DisplayPolicy):
    """Displays the same collections every session (test hook)."""

    def __init__(self, collection_ids: list[int]):
        super().__init__(len(collection_ids))
        self.collection_ids = list(collection_ids)
        self._row: np.ndarray | None = None

    def prepare(self, setup: ChoiceSetup, market: Marketplace) -> None:
        super().prepare(setup, market)
        self._row = np.asarray(
            [setup.index_of(cid) for cid in self.collection_ids], dtype=np.int32
        )

    def display_batch(self, user_idx, shift_idx, home_idx, rng):
        assert self._row is not None, "prepare() not called"
        disp = np.broadcast_to(self._row, (len(user_idx), self.n_cards)).copy()
        return disp, np.zeros(len(user_idx), dtype=bool)


class UniformRandomPolicy(DisplayPolicy):
    """Uniform random subset of the home-eligible collections each session."""

    def __init__(self, n_cards: int):
        super().__init__(n_cards)
        self._elig: list[np.ndarray] = []

    def prepare(self, setup: ChoiceSetup, market: Marketplace) -> None:
        super().prepare(setup, market)
        self._elig = [np.flatnonzero(row) for row in setup.eligibility]

    def display_batch(self, user_idx, shift_idx, home_idx, rng):
        n = len(user_idx)
        disp = np.full((n, self.n_cards), -1, dtype=np.int32)
        for h in np.unique(home_idx):
            rows = np.flatnonzero(home_idx == h)
            elig = self._elig[h]
            k = min(self.n_cards, len(elig))
            if k == 0:
                continue
            keys = rng.random((len(rows), len(elig)))
            picked = np.argpartition(keys, k - 1, axis=1)[:, :k]
            disp[rows[:, None], np.arange(k)[None, :]] = elig[picked]
        return disp, np.zeros(n, dtype=bool)


class ExplorationPolicy(DisplayPolicy):
    """Wraps a base policy, replacing a random fraction of sessions with a
    uniformly drawn unordered pair of eligible collections.

    Exploration rows are flagged so downstream dataset builders can restrict
    to displays whose composition is independent of the base ranker.
    """

    def __init__(self, base: DisplayPolicy, rate: float):
        if not 0.0 < rate <= 1.0:
            raise ValueError("exploration rate must be in (0, 1]")
        super().__init__(max(base.n_cards, 2))
        self.base = base
        self.rate = rate
        self._elig: list[np.ndarray] = []

    def prepare(self, setup: ChoiceSetup, market: Marketplace) -> None:
        super().prepare(setup, market)
        self.base.prepare(setup, market)
        self._elig = [np.flatnonzero(row) for row in setup.eligibility]

    def display_batch(self, user_idx, shift_idx, home_idx, rng):
        n = len(user_idx)
        flags = rng.random(n) < self.rate
        base_disp, _ = self.base.display_batch(user_idx, shift_idx, home_idx, rng)
        disp = np.full((n, self.n_cards), -1, dtype=np.int32)
        disp[:, : base_disp.shape[1]] = base_disp
        for h in np.unique(home_idx[flags]):
            rows = np.flatnonzero(flags & (home_idx == h))
            elig = self._elig[h]
            m = len(elig)
            if m < 2:
                # Cannot draw a pair: keep the incumbent display, unflagged.
                flags[rows] = False
                continue
            first = rng.integers(0, m, size=len(rows))
            second = rng.integers(0, m - 1, size=len(rows))
            second = second + (second >= first)
            lo = np.minimum(first, second)
            hi = np.maximum(first, second)
            disp[rows] = -1
            disp[rows, 0] = elig[lo]
            disp[rows, 1] = elig[hi]
        return disp, flags
