"""On-disk formats for the synthetic world and the session event log.

Both formats are line-oriented JSON with a fixed key order, so regenerating
from the same (config, seed) produces byte-identical files. Floats use
Python's shortest round-trip repr and survive a save/load cycle exactly.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from ..errors import StoreFormatError
from .config import MarketplaceConfig
from .types import (
    Collection,
    CollectionKind,
    Context,
    Dish,
    Marketplace,
    MealShift,
    Order,
    OrderSource,
    Restaurant,
    SessionEvent,
    User,
)

MARKETPLACE_FORMAT = "collectionrank.world"
MARKETPLACE_VERSION = 1
EVENTS_FORMAT = "collectionrank.sessions"
EVENTS_VERSION = 1


def _order_to_dict(o: Order) -> dict[str, Any]:
    return {
        "dish_id": o.dish_id,
        "timestamp": o.timestamp,
        "meal_shift": o.meal_shift.name,
        "source": o.source.value,
        "home_id": o.home_id,
        "collection_id": o.collection_id,
    }


def _order_from_dict(user_id: int, d: dict[str, Any]) -> Order:
    return Order(
        user_id=user_id,
        dish_id=d["dish_id"],
        timestamp=d["timestamp"],
        meal_shift=MealShift[d["meal_shift"]],
        source=OrderSource(d["source"]),
        home_id=d["home_id"],
        collection_id=d["collection_id"],
    )


def marketplace_to_dict(market: Marketplace) -> dict[str, Any]:
    return {
        "format": MARKETPLACE_FORMAT,
        "format_version": MARKETPLACE_VERSION,
        "rng_seed": market.rng_seed,
        "config": market.config.to_dict(),
        "regions": list(market.regions),
        "taxonomies": list(market.taxonomies),
        "home_ids": list(market.home_ids),
        "home_conversion_multipliers": [float(m) for m in market.home_conversion_multipliers],
        "restaurants": [
            {
                "id": r.id,
                "region_id": r.region_id,
                "delivery_fee": float(r.delivery_fee),
                "dish_ids": list(r.dish_ids),
                "primary_taxonomy_id": r.primary_taxonomy_id,
            }
            for r in market.restaurants
        ],
        "dishes": [
            {
                "id": d.id,
                "restaurant_id": d.restaurant_id,
                "taxonomy_id": d.taxonomy_id,
                "price": float(d.price),
                "is_vegan": d.is_vegan,
            }
            for d in market.dishes
        ],
        "collections": [
            {
                "id": c.id,
                "kind": c.kind.value,
                "member_ids": list(c.member_ids),
                "theme_filters": sorted(c.theme_filters),
                "eligible_homes": sorted(c.eligible_homes),
                "title": c.title,
            }
            for c in market.collections
        ],
        "users": [
            {
                "id": u.id,
                "region_id": u.region_id,
                "is_vegan": u.is_vegan,
                "price_sensitivity": float(u.price_sensitivity),
                "latent_taste": [[float(x) for x in row] for row in u.latent_taste],
                "orders": [_order_to_dict(o) for o in u.order_history],
            }
            for u in market.users
        ],
    }


def marketplace_from_dict(d: dict[str, Any]) -> Marketplace:
    if d.get("format") != MARKETPLACE_FORMAT:
        raise StoreFormatError(f"not a marketplace file (format={d.get('format')!r})")
    if d.get("format_version") != MARKETPLACE_VERSION:
        raise StoreFormatError(
            f"unsupported marketplace format_version {d.get('format_version')!r}"
        )
    config = MarketplaceConfig.from_dict(d["config"])
    return Marketplace(
        regions=list(d["regions"]),
        taxonomies=list(d["taxonomies"]),
        restaurants=[
            Restaurant(
                id=r["id"],
                region_id=r["region_id"],
                delivery_fee=r["delivery_fee"],
                dish_ids=tuple(r["dish_ids"]),
                primary_taxonomy_id=r["primary_taxonomy_id"],
            )
            for r in d["restaurants"]
        ],
        dishes=[
            Dish(
                id=x["id"],
                restaurant_id=x["restaurant_id"],
                taxonomy_id=x["taxonomy_id"],
                price=x["price"],
                is_vegan=x["is_vegan"],
            )
            for x in d["dishes"]
        ],
        users=[
            User(
                id=u["id"],
                region_id=u["region_id"],
                is_vegan=u["is_vegan"],
                latent_taste=np.asarray(u["latent_taste"], dtype=float),
                price_sensitivity=u["price_sensitivity"],
                order_history=[_order_from_dict(u["id"], o) for o in u["orders"]],
            )
            for u in d["users"]
        ],
        collections=[
            Collection(
                id=c["id"],
                kind=CollectionKind(c["kind"]),
                member_ids=tuple(c["member_ids"]),
                theme_filters=frozenset(c["theme_filters"]),
                eligible_homes=frozenset(c["eligible_homes"]),
                title=c["title"],
            )
            for c in d["collections"]
        ],
        home_ids=list(d["home_ids"]),
        home_conversion_multipliers=list(d["home_conversion_multipliers"]),
        rng_seed=d["rng_seed"],
        config=config,
    )


def save_marketplace(market: Marketplace, path: str | Path) -> None:
    path = Path(path)
    path.write_bytes(
        json.dumps(marketplace_to_dict(market), separators=(",", ":")).encode()
        + b"\n"
    )


def load_marketplace(path: str | Path) -> Marketplace:
    path = Path(path)
    try:
        d = json.loads(path.read_bytes())
    except json.JSONDecodeError as e:
        raise StoreFormatError(f"{path}: not valid JSON: {e}") from e
    return marketplace_from_dict(d)


def event_to_dict(event: SessionEvent) -> dict[str, Any]:
    return {
        "user_id": event.user_id,
        "meal_shift": event.context.meal_shift.name,
        "home_id": event.context.home_id,
        "region_id": event.context.region_id,
        "timestamp": event.context.timestamp,
        "displayed_collection_ids": list(event.displayed_collection_ids),
        "purchased_collection_id": event.purchased_collection_id,
        "exploration_flag": event.exploration_flag,
    }


def event_from_dict(d: dict[str, Any]) -> SessionEvent:
    event = SessionEvent(
        user_id=d["user_id"],
        context=Context(
            meal_shift=MealShift[d["meal_shift"]],
            home_id=d["home_id"],
            region_id=d["region_id"],
            timestamp=d["timestamp"],
        ),
        displayed_collection_ids=tuple(d["displayed_collection_ids"]),
        purchased_collection_id=d["purchased_collection_id"],
        exploration_flag=d["exploration_flag"],
    )
    if (
        event.purchased_collection_id is not None
        and event.purchased_collection_id not in event.displayed_collection_ids
    ):
        raise StoreFormatError(
            f"purchased collection {event.purchased_collection_id} was not displayed"
        )
    return event


def write_events(events: Iterable[SessionEvent], path: str | Path) -> int:
    """Write one JSON record per line; returns the number of records."""
    path = Path(path)
    n = 0
    with path.open("w", encoding="utf-8", newline="\n") as f:
        f.write(
            json.dumps(
                {"format": EVENTS_FORMAT, "format_version": EVENTS_VERSION},
                separators=(",", ":"),
            )
            + "\n"
        )
        for event in events:
            f.write(json.dumps(event_to_dict(event), separators=(",", ":")) + "\n")
            n += 1
    return n


def read_events(path: str | Path) -> list[SessionEvent]:
    path = Path(path)
    events: list[SessionEvent] = []
    with path.open("r", encoding="utf-8") as f:
        header_line = f.readline()
        try:
            header = json.loads(header_line) if header_line.strip() else {}
        except json.JSONDecodeError as e:
            raise StoreFormatError(f"{path}: bad header line: {e}") from e
        if header.get("format") != EVENTS_FORMAT:
            raise StoreFormatError(
                f"{path}: not a session log (format={header.get('format')!r})"
            )
        if header.get("format_version") != EVENTS_VERSION:
            raise StoreFormatError(
                f"{path}: unsupported session log version {header.get('format_version')!r}"
            )
        for lineno, line in enumerate(f, start=2):
            if not line.strip():
                continue
            try:
                events.append(event_from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError) as e:
                raise StoreFormatError(f"{path}:{lineno}: bad session record: {e}") from e
    return events
