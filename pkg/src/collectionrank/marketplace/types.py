"""Domain types for the synthetic food-delivery world.

Everything here is plain data. Generation lives in :mod:`.generate`, session
simulation in :mod:`.simulate`, serialization in :mod:`.logio`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class MealShift(enum.IntEnum):
    """Coarse time-of-day bucket, in chronological order."""

    DAWN = 0
    BREAKFAST = 1
    LUNCH = 2
    SNACK = 3
    DINNER = 4


N_SHIFTS = len(MealShift)

#: Left-closed hour boundaries: shift s covers [start, end) local hours.
SHIFT_HOURS: dict[MealShift, tuple[int, int]] = {
    MealShift.DAWN: (0, 6),
    MealShift.BREAKFAST: (6, 11),
    MealShift.LUNCH: (11, 15),
    MealShift.SNACK: (15, 19),
    MealShift.DINNER: (19, 24),
}

SECONDS_PER_DAY = 86_400

#: Category pseudo-collections (one per taxonomy) live in a reserved id range
#: so they can never collide with curated collection ids.
CATEGORY_COLLECTION_ID_BASE = 1_000_000


class CollectionKind(enum.Enum):
    DISH = "DISH"
    RESTAURANT = "RESTAURANT"


class OrderSource(enum.Enum):
    ORGANIC = "ORGANIC"
    CAROUSEL = "CAROUSEL"
    RED_CARD = "RED_CARD"


#: Theme filter names understood by the generator and the feature extractor.
VEGAN_ONLY = "vegan_only"
FREE_DELIVERY_ONLY = "free_delivery_only"


def meal_shift_of(timestamp: int) -> MealShift:
    """Map an epoch timestamp (seconds, single-zone world clock) to its meal shift.

    Boundaries are left-closed whole hours, so 11:00:00 exactly is LUNCH.
    """
    hour = (int(timestamp) % SECONDS_PER_DAY) // 3600
    for shift, (start, end) in SHIFT_HOURS.items():
        if start <= hour < end:
            return shift
    raise AssertionError(f"hour {hour} not covered by shift table")


@dataclass(frozen=True, slots=True)
class Dish:
    id: int
    restaurant_id: int
    taxonomy_id: int
    price: float
    is_vegan: bool


@dataclass(frozen=True, slots=True)
class Restaurant:
    id: int
    region_id: int
    delivery_fee: float
    dish_ids: tuple[int, ...]
    #: Dominant cuisine of the menu; generator metadata, not a model feature.
    primary_taxonomy_id: int


@dataclass(frozen=True, slots=True)
class Collection:
    id: int
    kind: CollectionKind
    member_ids: tuple[int, ...]
    theme_filters: frozenset[str]
    eligible_homes: frozenset[int]
    title: str


@dataclass(slots=True)
class Order:
    user_id: int
    dish_id: int
    timestamp: int
    meal_shift: MealShift
    source: OrderSource
    home_id: int | None = None
    collection_id: int | None = None


@dataclass(slots=True)
class User:
    id: int
    region_id: int
    is_vegan: bool
    #: (n_shifts, n_taxonomies) rows are probability simplexes. Ground truth
    #: for the choice model; hidden from the scoring model.
    latent_taste: np.ndarray
    price_sensitivity: float
    order_history: list[Order] = field(default_factory=list)


@dataclass(frozen=True, slots=True)
class Context:
    meal_shift: MealShift
    home_id: int
    region_id: int
    timestamp: int


@dataclass(frozen=True, slots=True)
class SessionEvent:
    user_id: int
    context: Context
    displayed_collection_ids: tuple[int, ...]
    purchased_collection_id: int | None
    exploration_flag: bool


@dataclass(eq=False)
class Marketplace:
    """Immutable-by-convention synthetic world plus lookup indexes.

    Regeneration from the same (config, seed) is byte-identical after
    serialization. Treat as read-only once generated; only
    :func:`~collectionrank.marketplace.simulate.simulate_sessions` appends
    orders to user histories, and downstream feature extraction ignores
    orders after the snapshot reference time.
    """

    regions: list[int]
    taxonomies: list[int]
    restaurants: list[Restaurant]
    dishes: list[Dish]
    users: list[User]
    collections: list[Collection]
    home_ids: list[int]
    home_conversion_multipliers: list[float]
    rng_seed: int
    config: "MarketplaceConfig"  # noqa: F821 - forward ref, see config.py

    @cached_property
    def dish_by_id(self) -> dict[int, Dish]:
        return {d.id: d for d in self.dishes}

    @cached_property
    def restaurant_by_id(self) -> dict[int, Restaurant]:
        return {r.id: r for r in self.restaurants}

    @cached_property
    def user_by_id(self) -> dict[int, User]:
        return {u.id: u for u in self.users}

    @cached_property
    def collection_by_id(self) -> dict[int, Collection]:
        out = {c.id: c for c in self.collections}
        for c in self.category_collections:
            out[c.id] = c
        return out

    @cached_property
    def category_collections(self) -> list[Collection]:
        """One pseudo-collection per taxonomy: the category carousel surface.

        These stand in for carousel categories so the bootstrap dataset can
        reuse the collection feature pipeline unchanged.
        """
        by_tax: dict[int, list[int]] = {t: [] for t in self.taxonomies}
        for d in self.dishes:
            by_tax[d.taxonomy_id].append(d.id)
        out = []
        for t in self.taxonomies:
            out.append(
                Collection(
                    id=CATEGORY_COLLECTION_ID_BASE + t,
                    kind=CollectionKind.DISH,
                    member_ids=tuple(by_tax[t]),
                    theme_filters=frozenset(),
                    eligible_homes=frozenset(self.home_ids),
                    title=f"Category {t}",
                )
            )
        return out

    def collection_restaurant_ids(self, collection: Collection) -> tuple[int, ...]:
        """Distinct restaurants backing a collection, ascending ids.

        DISH collections map to the restaurants owning their member dishes;
        RESTAURANT collections are their members.
        """
        if collection.kind is CollectionKind.RESTAURANT:
            return tuple(sorted(set(collection.member_ids)))
        return tuple(sorted({self.dish_by_id[d].restaurant_id for d in collection.member_ids}))

    def collection_member_dish_ids(self, collection: Collection) -> tuple[int, ...]:
        """All dishes reachable from a collection (members, or members' menus)."""
        if collection.kind is CollectionKind.DISH:
            return collection.member_ids
        out: list[int] = []
        for rid in collection.member_ids:
            out.extend(self.restaurant_by_id[rid].dish_ids)
        return tuple(out)

    def all_orders(self) -> list[Order]:
        out: list[Order] = []
        for u in self.users:
            out.extend(u.order_history)
        return out
