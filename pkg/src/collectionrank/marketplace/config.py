"""Marketplace configuration: the documented key set for world generation.

The same keys appear under ``marketplace:`` in the pipeline config file; see
``configs/default.yaml`` for the annotated reference copy.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any

from ..errors import ConfigError

SCHEMA_VERSION = 1

#: Epoch anchor of the synthetic world clock (2025-01-01T00:00Z). Fixed so
#: artifacts never depend on wall-clock time.
WORLD_EPOCH = 1_735_689_600


@dataclass
class MarketplaceConfig:
    schema_version: int = SCHEMA_VERSION

    # catalog sizes
    n_regions: int = 3
    n_taxonomies: int = 10
    n_restaurants: int = 200
    n_dishes: int = 1000
    n_users: int = 2000
    n_collections: int = 30
    n_homes: int = 4

    # boolean attributes are realized as exact rounded counts, then shuffled
    vegan_dish_fraction: float = 0.25
    vegan_user_fraction: float = 0.2
    free_delivery_fraction: float = 0.3

    # price / fee model
    price_min: float = 5.0
    price_max: float = 60.0
    delivery_fee_choices: tuple[float, ...] = (3.99, 5.99, 7.99, 9.99)

    # latent taste model
    taste_concentration: float = 0.4
    shift_profile_concentration: float = 1.5
    price_sensitivity_mean: float = 0.02
    price_sensitivity_sd: float = 0.012

    # organic history
    orders_per_user_mean: float = 30.0
    cold_user_fraction: float = 0.05
    organic_days: int = 45
    dish_choice_temperature: float = 0.25

    # session choice model
    choice_temperature: float = 0.05
    outside_utility: float = 0.25
    vegan_affinity_bonus: float = 0.35
    home_conversion_multipliers: tuple[float, ...] = (1.0, 0.7, 1.4, 0.55)

    # restaurant menus: fraction of dishes drawn from the primary taxonomy
    menu_focus: float = 0.8

    # curated collection mix
    collection_min_size: int = 6
    collection_max_size: int = 20
    collection_theme_weights: dict[str, float] = field(
        default_factory=lambda: {
            "taxonomy": 0.6,
            "vegan": 0.15,
            "free_delivery": 0.15,
            "mixed": 0.1,
        }
    )
    #: Every home is guaranteed at least this many eligible collections.
    min_collections_per_home: int = 6

    def validate(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(
                f"unsupported marketplace schema_version {self.schema_version}, "
                f"expected {SCHEMA_VERSION}"
            )
        for name in (
            "n_regions",
            "n_taxonomies",
            "n_restaurants",
            "n_dishes",
            "n_users",
            "n_collections",
            "n_homes",
        ):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.n_dishes < self.n_restaurants:
            raise ConfigError("need at least one dish per restaurant")
        if self.n_restaurants < self.n_regions:
            raise ConfigError("need at least one restaurant per region")
        for name in ("vegan_dish_fraction", "vegan_user_fraction", "free_delivery_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        if not 0.0 <= self.cold_user_fraction < 1.0:
            raise ConfigError("cold_user_fraction must be in [0, 1)")
        if self.price_min <= 0 or self.price_max < self.price_min:
            raise ConfigError("require 0 < price_min <= price_max")
        if any(f < 0 for f in self.delivery_fee_choices):
            raise ConfigError("delivery fees must be >= 0")
        if len(self.home_conversion_multipliers) != self.n_homes:
            raise ConfigError(
                "home_conversion_multipliers must have one entry per home "
                f"({self.n_homes}), got {len(self.home_conversion_multipliers)}"
            )
        if any(m <= 0 for m in self.home_conversion_multipliers):
            raise ConfigError("home conversion multipliers must be positive")
        if self.choice_temperature <= 0 or self.dish_choice_temperature <= 0:
            raise ConfigError("temperatures must be positive")
        if self.taste_concentration <= 0 or self.shift_profile_concentration <= 0:
            raise ConfigError("concentration parameters must be positive")
        if self.collection_min_size < 1 or self.collection_max_size < self.collection_min_size:
            raise ConfigError("require 1 <= collection_min_size <= collection_max_size")
        if self.organic_days < 1:
            raise ConfigError("organic_days must be >= 1")
        weights = self.collection_theme_weights
        unknown = set(weights) - {"taxonomy", "vegan", "free_delivery", "mixed"}
        if unknown:
            raise ConfigError(f"unknown collection themes: {sorted(unknown)}")
        if not weights or sum(weights.values()) <= 0:
            raise ConfigError("collection_theme_weights must have positive total weight")
        if weights.get("vegan", 0) > 0 and self.vegan_dish_fraction == 0:
            raise ConfigError("vegan-themed collections need vegan_dish_fraction > 0")
        if weights.get("free_delivery", 0) > 0 and self.free_delivery_fraction == 0:
            raise ConfigError("free-delivery collections need free_delivery_fraction > 0")

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["delivery_fee_choices"] = list(self.delivery_fee_choices)
        d["home_conversion_multipliers"] = list(self.home_conversion_multipliers)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "MarketplaceConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown marketplace config keys: {sorted(unknown)}")
        kwargs = dict(d)
        for key in ("delivery_fee_choices", "home_conversion_multipliers"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg
