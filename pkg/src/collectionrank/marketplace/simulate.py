"""Vectorized session engine.

A session is one visit to a home surface: the policy picks cards, the
ground-truth choice model decides whether and where the user purchases.
The engine draws everything in fixed RNG order (users, timestamps, homes,
policy, choice) so two policies that consume no randomness see identical
contexts under the same seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .._util import rng_for
from ..errors import PolicyViolationError
from .choice import ChoiceSetup, build_choice_setup, sample_purchases
from .generate import organic_reference_time
from .policies import DisplayPolicy
from .types import (
    Collection,
    Context,
    Marketplace,
    MealShift,
    Order,
    OrderSource,
    SECONDS_PER_DAY,
    SHIFT_HOURS,
    SessionEvent,
)

_RNG_STREAM = 0x5E55

#: hour-of-day -> MealShift value, for vectorized timestamp bucketing.
SHIFT_OF_HOUR = np.zeros(24, dtype=np.int8)
for _shift, (_start, _end) in SHIFT_HOURS.items():
    SHIFT_OF_HOUR[_start:_end] = int(_shift)


@dataclass
class SessionBatch:
    """Column-oriented result of a simulation run.

    ``displayed`` holds indices into ``setup.collections`` (-1 pads unused
    card slots); ``purchased_col`` is the chosen card column or -1.
    """

    user_idx: np.ndarray
    timestamps: np.ndarray
    shifts: np.ndarray
    homes: np.ndarray
    displayed: np.ndarray
    exploration_flags: np.ndarray
    purchased_col: np.ndarray
    setup: ChoiceSetup

    def __len__(self) -> int:
        return len(self.user_idx)

    @property
    def purchased_universe_idx(self) -> np.ndarray:
        """(n,) universe index of the purchased collection, -1 if none."""
        bought = self.purchased_col >= 0
        out = np.full(len(self), -1, dtype=np.int64)
        rows = np.flatnonzero(bought)
        out[rows] = self.displayed[rows, self.purchased_col[rows]]
        return out

    @property
    def purchase_rate(self) -> float:
        if len(self) == 0:
            return 0.0
        return float(np.mean(self.purchased_col >= 0))


def _validate_display(
    disp: np.ndarray, homes: np.ndarray, setup: ChoiceSetup
) -> None:
    if disp.ndim != 2 or len(disp) != len(homes):
        raise PolicyViolationError("display batch has wrong shape")
    real = disp >= 0
    if not real.any(axis=1).all():
        raise PolicyViolationError("policy displayed zero collections in a session")
    ok = np.ones_like(real)
    ok[real] = setup.eligibility[
        np.broadcast_to(homes[:, None], disp.shape)[real], disp[real]
    ]
    if not ok.all():
        row = int(np.flatnonzero(~ok.all(axis=1))[0])
        bad = disp[row][~ok[row]][0]
        raise PolicyViolationError(
            f"collection {int(setup.collection_ids[bad])} displayed in "
            f"home {int(homes[row])} where it is not eligible"
        )
    # Padding must be right-aligned so card columns are contiguous.
    if (np.diff(real.astype(np.int8), axis=1) > 0).any():
        raise PolicyViolationError("display rows must left-pack their cards")
    # Pads get distinct sentinel values so only real cards can collide.
    pad_fill = np.iinfo(np.int64).max - np.arange(disp.shape[1], dtype=np.int64)
    srt = np.sort(np.where(real, disp.astype(np.int64), pad_fill[None, :]), axis=1)
    if (np.diff(srt, axis=1) == 0).any():
        raise PolicyViolationError("policy displayed a collection twice in one session")


def simulate_session_batch(
    market: Marketplace,
    policy: DisplayPolicy,
    n_sessions: int,
    seed: int,
    *,
    collections: list[Collection] | None = None,
    utility_override: dict[int, float] | None = None,
    setup: ChoiceSetup | None = None,
    user_pool: np.ndarray | None = None,
    start_time: int | None = None,
    duration_days: int = 14,
) -> SessionBatch:
    """Run the engine and return columns without materializing events.

    ``user_pool`` restricts sessions to a subset of user indices (ids);
    ``setup`` lets callers share one precomputed ChoiceSetup across runs.
    """
    if n_sessions < 0:
        raise ValueError("n_sessions must be >= 0")
    if setup is None:
        setup = build_choice_setup(market, collections, utility_override)
    policy.prepare(setup, market)
    rng = rng_for(seed, _RNG_STREAM)
    if start_time is None:
        start_time = organic_reference_time(market.config)
    n_homes = len(market.home_ids)

    if user_pool is None:
        user_pool = np.arange(len(market.users), dtype=np.int64)
    else:
        user_pool = np.asarray(user_pool, dtype=np.int64)
        if len(user_pool) == 0:
            raise ValueError("user_pool is empty")

    users = user_pool[rng.integers(0, len(user_pool), size=n_sessions)]
    ts = start_time + rng.integers(
        0, duration_days * SECONDS_PER_DAY, size=n_sessions
    )
    shifts = SHIFT_OF_HOUR[(ts % SECONDS_PER_DAY) // 3600].astype(np.int64)
    homes = rng.integers(0, n_homes, size=n_sessions)

    if n_sessions == 0:
        k = max(policy.n_cards, 1)
        return SessionBatch(
            user_idx=users,
            timestamps=ts,
            shifts=shifts,
            homes=homes,
            displayed=np.empty((0, k), dtype=np.int32),
            exploration_flags=np.empty(0, dtype=bool),
            purchased_col=np.empty(0, dtype=np.int64),
            setup=setup,
        )

    disp, flags = policy.display_batch(users, shifts, homes, rng)
    _validate_display(disp, homes, setup)

    card_util = np.where(
        disp >= 0,
        setup.utilities[users[:, None], np.maximum(disp, 0), shifts[:, None]],
        -np.inf,
    )
    outside = setup.outside_by_home[homes]
    uniforms = rng.random(n_sessions)
    purchased_col = sample_purchases(card_util, outside, setup.temperature, uniforms)

    return SessionBatch(
        user_idx=users,
        timestamps=ts,
        shifts=shifts,
        homes=homes,
        displayed=disp,
        exploration_flags=flags,
        purchased_col=purchased_col,
        setup=setup,
    )


def batch_to_events(batch: SessionBatch, market: Marketplace) -> list[SessionEvent]:
    """Materialize SessionEvent records from engine columns."""
    setup = batch.setup
    ids = setup.collection_ids
    region_of_user = np.asarray([u.region_id for u in market.users])
    purchased = batch.purchased_universe_idx
    events: list[SessionEvent] = []
    for i in range(len(batch)):
        row = batch.displayed[i]
        shown = tuple(int(ids[j]) for j in row if j >= 0)
        events.append(
            SessionEvent(
                user_id=int(batch.user_idx[i]),
                context=Context(
                    meal_shift=MealShift(int(batch.shifts[i])),
                    home_id=int(batch.homes[i]),
                    region_id=int(region_of_user[batch.user_idx[i]]),
                    timestamp=int(batch.timestamps[i]),
                ),
                displayed_collection_ids=shown,
                purchased_collection_id=(
                    int(ids[purchased[i]]) if purchased[i] >= 0 else None
                ),
                exploration_flag=bool(batch.exploration_flags[i]),
            )
        )
    return events


def append_purchase_orders(
    batch: SessionBatch,
    market: Marketplace,
    seed: int,
    source: OrderSource = OrderSource.RED_CARD,
) -> list[Order]:
    """Sample a concrete dish for every purchase and append Orders to users.

    The dish follows the user's latent taste for the session's shift within
    the purchased collection's reachable dishes; vegan users stick to vegan
    dishes when the collection has any.
    """
    rng = rng_for(seed, _RNG_STREAM, 0xD15B)
    setup = batch.setup
    purchased = batch.purchased_universe_idx
    rows = np.flatnonzero(purchased >= 0)

    member_dishes: dict[int, np.ndarray] = {}
    member_tax: dict[int, np.ndarray] = {}
    member_vegan: dict[int, np.ndarray] = {}
    orders: list[Order] = []
    for i in rows:
        j = int(purchased[i])
        if j not in member_dishes:
            c = setup.collections[j]
            dids = np.asarray(market.collection_member_dish_ids(c), dtype=np.int64)
            member_dishes[j] = dids
            member_tax[j] = np.asarray(
                [market.dish_by_id[d].taxonomy_id for d in dids]
            )
            member_vegan[j] = np.asarray(
                [market.dish_by_id[d].is_vegan for d in dids]
            )
        user = market.users[int(batch.user_idx[i])]
        shift = int(batch.shifts[i])
        dids, tax, veg = member_dishes[j], member_tax[j], member_vegan[j]
        if user.is_vegan and veg.any():
            keep = np.flatnonzero(veg)
            dids, tax = dids[keep], tax[keep]
        w = user.latent_taste[shift][tax]
        total = w.sum()
        if total <= 0:
            w = np.full(len(dids), 1.0 / len(dids))
        else:
            w = w / total
        dish_id = int(rng.choice(dids, p=w))
        order = Order(
            user_id=user.id,
            dish_id=dish_id,
            timestamp=int(batch.timestamps[i]),
            meal_shift=MealShift(shift),
            source=source,
            home_id=int(batch.homes[i]),
            collection_id=int(setup.collection_ids[int(purchased[i])]),
        )
        user.order_history.append(order)
        orders.append(order)
    return orders


def simulate_sessions(
    market: Marketplace,
    policy: DisplayPolicy,
    n_sessions: int,
    seed: int,
    *,
    collections: list[Collection] | None = None,
    utility_override: dict[int, float] | None = None,
    setup: ChoiceSetup | None = None,
    user_pool: np.ndarray | None = None,
    start_time: int | None = None,
    duration_days: int = 14,
    append_orders: bool = True,
    order_source: OrderSource = OrderSource.RED_CARD,
) -> list[SessionEvent]:
    """Simulate sessions and return their event log.

    With ``append_orders`` (default) each purchase also becomes an Order in
    the buying user's history, dated inside the session era so snapshot-time
    feature extraction never sees it.
    """
    batch = simulate_session_batch(
        market,
        policy,
        n_sessions,
        seed,
        collections=collections,
        utility_override=utility_override,
        setup=setup,
        user_pool=user_pool,
        start_time=start_time,
        duration_days=duration_days,
    )
    if append_orders:
        append_purchase_orders(batch, market, seed, source=order_source)
    return batch_to_events(batch, market)
