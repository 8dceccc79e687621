"""Deterministic synthetic-world generation.

The generated world is the data source *and* the ground-truth oracle for
every downstream test: user behavior is driven by latent per-shift tastes
that other modules never see.
"""

from __future__ import annotations

import math

import numpy as np

from .._util import rng_for
from ..errors import ConfigError
from .config import WORLD_EPOCH, MarketplaceConfig
from .types import (
    Collection,
    CollectionKind,
    Dish,
    FREE_DELIVERY_ONLY,
    Marketplace,
    MealShift,
    Order,
    OrderSource,
    Restaurant,
    SECONDS_PER_DAY,
    User,
    VEGAN_ONLY,
    meal_shift_of,
)

_ALPHA_FLOOR = 0.02


def _exact_count(fraction: float, n: int) -> int:
    """Nearest-integer count (half rounds up) so fractions are realized exactly."""
    return int(math.floor(fraction * n + 0.5))


def _exact_flags(fraction: float, n: int, rng: np.random.Generator) -> np.ndarray:
    k = _exact_count(fraction, n)
    flags = np.zeros(n, dtype=bool)
    flags[:k] = True
    rng.shuffle(flags)
    return flags


def generate_marketplace(config: MarketplaceConfig, seed: int) -> Marketplace:
    """Generate a marketplace; byte-identical for identical (config, seed).

    Raises
    ------
    ConfigError
        If the configuration is inconsistent (zero counts, theme weights
        pointing at attributes the config disables, ...).
    """
    config.validate()
    rng = rng_for(seed, 0x5EED)

    regions = list(range(config.n_regions))
    taxonomies = list(range(config.n_taxonomies))

    restaurants = _generate_restaurants(config, rng)
    dishes, restaurants = _generate_dishes(config, restaurants, rng)
    collections = _generate_collections(config, restaurants, dishes, rng)
    users = _generate_users(config, dishes, rng)

    market = Marketplace(
        regions=regions,
        taxonomies=taxonomies,
        restaurants=restaurants,
        dishes=dishes,
        users=users,
        collections=collections,
        home_ids=list(range(config.n_homes)),
        home_conversion_multipliers=list(config.home_conversion_multipliers),
        rng_seed=seed,
        config=config,
    )
    _generate_organic_histories(market, rng)
    return market


def _generate_restaurants(config: MarketplaceConfig, rng: np.random.Generator) -> list[Restaurant]:
    n = config.n_restaurants
    # First restaurant per region is pinned so every region is populated.
    region_ids = np.concatenate(
        [
            np.arange(config.n_regions),
            rng.integers(0, config.n_regions, size=n - config.n_regions),
        ]
    )
    primary_tax = rng.integers(0, config.n_taxonomies, size=n)
    free = _exact_flags(config.free_delivery_fraction, n, rng)
    paid_fees = rng.choice(np.asarray(config.delivery_fee_choices, dtype=float), size=n)
    fees = np.where(free, 0.0, paid_fees)
    return [
        Restaurant(
            id=i,
            region_id=int(region_ids[i]),
            delivery_fee=float(fees[i]),
            dish_ids=(),  # filled after dish assignment
            primary_taxonomy_id=int(primary_tax[i]),
        )
        for i in range(n)
    ]


def _generate_dishes(
    config: MarketplaceConfig,
    restaurants: list[Restaurant],
    rng: np.random.Generator,
) -> tuple[list[Dish], list[Restaurant]]:
    n = config.n_dishes
    n_rest = len(restaurants)
    # One pinned dish per restaurant; the rest land uniformly.
    rest_ids = np.concatenate([np.arange(n_rest), rng.integers(0, n_rest, size=n - n_rest)])
    use_primary = rng.random(n) < config.menu_focus
    random_tax = rng.integers(0, config.n_taxonomies, size=n)
    vegan = _exact_flags(config.vegan_dish_fraction, n, rng)
    prices = np.round(rng.uniform(config.price_min, config.price_max, size=n), 2)

    dishes = []
    menu: dict[int, list[int]] = {r.id: [] for r in restaurants}
    for i in range(n):
        rid = int(rest_ids[i])
        tax = restaurants[rid].primary_taxonomy_id if use_primary[i] else int(random_tax[i])
        dishes.append(
            Dish(
                id=i,
                restaurant_id=rid,
                taxonomy_id=tax,
                price=float(prices[i]),
                is_vegan=bool(vegan[i]),
            )
        )
        menu[rid].append(i)

    filled = [
        Restaurant(
            id=r.id,
            region_id=r.region_id,
            delivery_fee=r.delivery_fee,
            dish_ids=tuple(menu[r.id]),
            primary_taxonomy_id=r.primary_taxonomy_id,
        )
        for r in restaurants
    ]
    return dishes, filled


def _sample_members(pool: list[int], config: MarketplaceConfig, rng: np.random.Generator) -> tuple[int, ...]:
    size = int(rng.integers(config.collection_min_size, config.collection_max_size + 1))
    size = min(size, len(pool))
    picked = rng.choice(np.asarray(pool), size=size, replace=False)
    return tuple(int(x) for x in np.sort(picked))


def _generate_collections(
    config: MarketplaceConfig,
    restaurants: list[Restaurant],
    dishes: list[Dish],
    rng: np.random.Generator,
) -> list[Collection]:
    dishes_by_tax: dict[int, list[int]] = {t: [] for t in range(config.n_taxonomies)}
    for d in dishes:
        dishes_by_tax[d.taxonomy_id].append(d.id)
    rest_by_tax: dict[int, list[int]] = {t: [] for t in range(config.n_taxonomies)}
    for r in restaurants:
        rest_by_tax[r.primary_taxonomy_id].append(r.id)
    vegan_dishes = [d.id for d in dishes if d.is_vegan]
    free_restaurants = [r.id for r in restaurants if r.delivery_fee == 0.0]

    themes = sorted(config.collection_theme_weights)
    weights = np.asarray([config.collection_theme_weights[t] for t in themes], dtype=float)
    weights = weights / weights.sum()

    collections: list[Collection] = []
    for cid in range(config.n_collections):
        theme = themes[int(rng.choice(len(themes), p=weights))]
        if theme == "free_delivery" and not free_restaurants:
            theme = "mixed"
        if theme == "vegan" and not vegan_dishes:
            theme = "mixed"

        filters: frozenset[str] = frozenset()
        if theme == "taxonomy":
            tax = int(rng.integers(0, config.n_taxonomies))
            as_restaurants = bool(rng.random() < 0.5) and len(rest_by_tax[tax]) >= config.collection_min_size
            if as_restaurants:
                kind = CollectionKind.RESTAURANT
                members = _sample_members(rest_by_tax[tax], config, rng)
            else:
                kind = CollectionKind.DISH
                members = _sample_members(dishes_by_tax[tax] or [d.id for d in dishes], config, rng)
            title = f"Taxonomy {tax} picks #{cid}"
        elif theme == "vegan":
            kind = CollectionKind.DISH
            members = _sample_members(vegan_dishes, config, rng)
            filters = frozenset({VEGAN_ONLY})
            title = f"Vegan corner #{cid}"
        elif theme == "free_delivery":
            kind = CollectionKind.RESTAURANT
            members = _sample_members(free_restaurants, config, rng)
            filters = frozenset({FREE_DELIVERY_ONLY})
            title = f"Free delivery #{cid}"
        else:
            kind = CollectionKind.DISH
            members = _sample_members([d.id for d in dishes], config, rng)
            title = f"Editor's mix #{cid}"

        if rng.random() < 0.5:
            homes = frozenset(range(config.n_homes))
        else:
            k = int(rng.integers(1, config.n_homes + 1))
            homes = frozenset(
                int(h) for h in rng.choice(config.n_homes, size=k, replace=False)
            )
        collections.append(
            Collection(
                id=cid,
                kind=kind,
                member_ids=members,
                theme_filters=filters,
                eligible_homes=homes,
                title=title,
            )
        )

    # Top up sparse homes so every home has a workable candidate pool.
    target = min(config.min_collections_per_home, config.n_collections)
    for home in range(config.n_homes):
        eligible = [i for i, c in enumerate(collections) if home in c.eligible_homes]
        missing = target - len(eligible)
        if missing <= 0:
            continue
        others = [i for i in range(len(collections)) if home not in collections[i].eligible_homes]
        extra = rng.choice(len(others), size=missing, replace=False)
        for j in sorted(int(e) for e in extra):
            i = others[j]
            c = collections[i]
            collections[i] = Collection(
                id=c.id,
                kind=c.kind,
                member_ids=c.member_ids,
                theme_filters=c.theme_filters,
                eligible_homes=c.eligible_homes | {home},
                title=c.title,
            )
    return collections


def _generate_users(
    config: MarketplaceConfig, dishes: list[Dish], rng: np.random.Generator
) -> list[User]:
    n = config.n_users
    n_tax = config.n_taxonomies
    region_ids = rng.integers(0, config.n_regions, size=n)
    vegan = _exact_flags(config.vegan_user_fraction, n, rng)
    sens = np.clip(
        rng.normal(config.price_sensitivity_mean, config.price_sensitivity_sd, size=n), 0.0, None
    )

    # Population-level taste per shift; individual tastes scatter around it.
    shift_mix = rng.dirichlet(
        np.full(n_tax, config.shift_profile_concentration), size=len(MealShift)
    )
    alpha = config.taste_concentration * n_tax * shift_mix + _ALPHA_FLOOR

    users = []
    for i in range(n):
        taste = np.stack([rng.dirichlet(alpha[s]) for s in range(len(MealShift))])
        users.append(
            User(
                id=i,
                region_id=int(region_ids[i]),
                is_vegan=bool(vegan[i]),
                latent_taste=taste,
                price_sensitivity=float(sens[i]),
                order_history=[],
            )
        )
    return users


def _generate_organic_histories(market: Marketplace, rng: np.random.Generator) -> None:
    config = market.config
    n_tax = config.n_taxonomies

    dish_ids_by_tax: list[np.ndarray] = []
    vegan_ids_by_tax: list[np.ndarray] = []
    fees_by_tax: list[np.ndarray] = []
    vegan_fees_by_tax: list[np.ndarray] = []
    for t in range(n_tax):
        ids = np.asarray([d.id for d in market.dishes if d.taxonomy_id == t], dtype=np.int64)
        vids = np.asarray(
            [d.id for d in market.dishes if d.taxonomy_id == t and d.is_vegan], dtype=np.int64
        )
        dish_ids_by_tax.append(ids)
        vegan_ids_by_tax.append(vids)
        fee = np.asarray(
            [market.restaurant_by_id[market.dish_by_id[i].restaurant_id].delivery_fee for i in ids]
        )
        vfee = np.asarray(
            [market.restaurant_by_id[market.dish_by_id[i].restaurant_id].delivery_fee for i in vids]
        )
        fees_by_tax.append(fee)
        vegan_fees_by_tax.append(vfee)
    all_vegan = np.asarray([d.id for d in market.dishes if d.is_vegan], dtype=np.int64)
    all_vegan_fees = np.asarray(
        [market.restaurant_by_id[market.dish_by_id[i].restaurant_id].delivery_fee for i in all_vegan]
    )

    cold = _exact_flags(config.cold_user_fraction, config.n_users, rng)
    span = config.organic_days * SECONDS_PER_DAY

    for user in market.users:
        if cold[user.id]:
            continue
        n_orders = int(rng.poisson(config.orders_per_user_mean))
        if n_orders == 0:
            continue
        timestamps = np.sort(WORLD_EPOCH + rng.integers(0, span, size=n_orders))
        for ts in timestamps:
            shift = meal_shift_of(int(ts))
            tax = int(rng.choice(n_tax, p=user.latent_taste[shift]))
            if user.is_vegan:
                ids, fees = vegan_ids_by_tax[tax], vegan_fees_by_tax[tax]
                if len(ids) == 0:
                    ids, fees = all_vegan, all_vegan_fees
            else:
                ids, fees = dish_ids_by_tax[tax], fees_by_tax[tax]
            if len(ids) == 0:
                ids = np.asarray([d.id for d in market.dishes], dtype=np.int64)
                fees = np.asarray(
                    [market.restaurant_by_id[d.restaurant_id].delivery_fee for d in market.dishes]
                )
            w = np.exp(
                -user.price_sensitivity * fees / config.dish_choice_temperature
            )
            w = w / w.sum()
            dish_id = int(rng.choice(ids, p=w))
            user.order_history.append(
                Order(
                    user_id=user.id,
                    dish_id=dish_id,
                    timestamp=int(ts),
                    meal_shift=shift,
                    source=OrderSource.ORGANIC,
                )
            )


def organic_reference_time(config: MarketplaceConfig) -> int:
    """Snapshot time separating the organic era from logged card traffic."""
    return WORLD_EPOCH + config.organic_days * SECONDS_PER_DAY
