"""Ground-truth choice model for simulated sessions.

Purchase probability is a softmax over the displayed collections plus a
no-purchase outside option:

    P(c) ∝ exp(utility(user, c, shift) / temperature)

with utility(user, c, shift)
    = dot(latent_taste[user, shift], taxonomy_histogram(c))
      - price_sensitivity[user] * mean_delivery_fee(c)
      + vegan_affinity_bonus    if the user is vegan and c filters vegan content.

Per-home conversion multipliers scale the odds of purchasing at all by
shifting the outside option:  u_out(home) = outside_utility - T * ln(m_home).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import Collection, CollectionKind, Marketplace, MealShift, VEGAN_ONLY


def taxonomy_histogram(market: Marketplace, collection: Collection) -> np.ndarray:
    """Distribution over taxonomies of the collection's reachable dishes."""
    counts = np.zeros(len(market.taxonomies))
    for did in market.collection_member_dish_ids(collection):
        counts[market.dish_by_id[did].taxonomy_id] += 1
    total = counts.sum()
    if total == 0:
        return counts
    return counts / total


def collection_mean_fee(market: Marketplace, collection: Collection) -> float:
    """Mean delivery fee over member restaurants (per-dish for DISH kind)."""
    if collection.kind is CollectionKind.RESTAURANT:
        fees = [market.restaurant_by_id[r].delivery_fee for r in collection.member_ids]
    else:
        fees = [
            market.restaurant_by_id[market.dish_by_id[d].restaurant_id].delivery_fee
            for d in collection.member_ids
        ]
    return float(np.mean(fees))


def latent_utilities(
    market: Marketplace,
    collections: list[Collection],
    utility_override: dict[int, float] | None = None,
) -> np.ndarray:
    """Utility tensor of shape (n_users, n_collections, n_shifts).

    ``utility_override`` pins a collection's utility to a constant for every
    user and shift (test hook; +inf forces the choice).
    """
    n_users = len(market.users)
    n_shifts = len(MealShift)
    hists = np.stack([taxonomy_histogram(market, c) for c in collections])
    fees = np.asarray([collection_mean_fee(market, c) for c in collections])
    taste = np.stack([u.latent_taste for u in market.users])  # (u, s, t)
    sens = np.asarray([u.price_sensitivity for u in market.users])

    util = np.einsum("ust,ct->ucs", taste, hists)
    util -= sens[:, None, None] * fees[None, :, None]

    bonus = market.config.vegan_affinity_bonus
    if bonus:
        vegan_users = np.asarray([u.is_vegan for u in market.users])
        vegan_cols = np.asarray([VEGAN_ONLY in c.theme_filters for c in collections])
        util += bonus * (vegan_users[:, None, None] & vegan_cols[None, :, None])

    if utility_override:
        for cid, value in utility_override.items():
            for i, c in enumerate(collections):
                if c.id == cid:
                    util[:, i, :] = value
    assert util.shape == (n_users, len(collections), n_shifts)
    return util


@dataclass
class ChoiceSetup:
    """Precomputed state shared by the session engine and display policies."""

    collections: list[Collection]
    collection_ids: np.ndarray  # (m,) global ids, ascending
    utilities: np.ndarray  # (n_users, m, n_shifts)
    eligibility: np.ndarray  # (n_homes, m) bool
    outside_by_home: np.ndarray  # (n_homes,)
    temperature: float

    def index_of(self, collection_id: int) -> int:
        i = int(np.searchsorted(self.collection_ids, collection_id))
        if i >= len(self.collection_ids) or self.collection_ids[i] != collection_id:
            raise KeyError(f"collection {collection_id} not in choice setup")
        return i


def build_choice_setup(
    market: Marketplace,
    collections: list[Collection] | None = None,
    utility_override: dict[int, float] | None = None,
) -> ChoiceSetup:
    if collections is None:
        collections = market.collections
    collections = sorted(collections, key=lambda c: c.id)
    cfg = market.config
    eligibility = np.zeros((len(market.home_ids), len(collections)), dtype=bool)
    for j, c in enumerate(collections):
        for h in c.eligible_homes:
            eligibility[h, j] = True
    outside = cfg.outside_utility - cfg.choice_temperature * np.log(
        np.asarray(market.home_conversion_multipliers)
    )
    return ChoiceSetup(
        collections=collections,
        collection_ids=np.asarray([c.id for c in collections], dtype=np.int64),
        utilities=latent_utilities(market, collections, utility_override),
        eligibility=eligibility,
        outside_by_home=outside,
        temperature=cfg.choice_temperature,
    )


def sample_purchases(
    card_utilities: np.ndarray,
    outside_utilities: np.ndarray,
    temperature: float,
    uniforms: np.ndarray,
) -> np.ndarray:
    """Vectorized draw from the softmax choice model.

    Parameters
    ----------
    card_utilities : (n, k) with -inf marking padded card slots.
    outside_utilities : (n,) no-purchase option utility per session.
    temperature : softmax temperature.
    uniforms : (n,) U(0,1) draws, one per session.

    Returns
    -------
    (n,) chosen card column, or -1 for no purchase. Any +inf card utility
    forces a purchase (uniform over the +inf cards).
    """
    n, k = card_utilities.shape
    full = np.concatenate([card_utilities, outside_utilities[:, None]], axis=1)
    m = full.max(axis=1, keepdims=True)
    forced = np.isposinf(m[:, 0])
    safe_m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(invalid="ignore"):
        w = np.exp((full - safe_m) / temperature)
    w[~np.isfinite(full)] = 0.0
    if forced.any():
        w[forced] = (full[forced] == np.inf).astype(float)
    total = w.sum(axis=1)
    # Guard: all-(-inf) rows (no cards, no outside) cannot occur by design.
    cdf = np.cumsum(w, axis=1) / total[:, None]
    col = (uniforms[:, None] > cdf).sum(axis=1)
    col = np.minimum(col, k)  # numerical safety at the upper edge
    return np.where(col == k, -1, col)
