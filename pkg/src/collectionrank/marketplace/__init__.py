"""Synthetic marketplace: world generation, choice model, session simulation."""

from .config import WORLD_EPOCH, MarketplaceConfig
from .choice import ChoiceSetup, build_choice_setup, latent_utilities
from .generate import generate_marketplace, organic_reference_time
from .logio import (
    load_marketplace,
    read_events,
    save_marketplace,
    write_events,
)
from .policies import (
    DisplayPolicy,
    ExplorationPolicy,
    FixedPolicy,
    OraclePolicy,
    PopularityPolicy,
    RankingPolicy,
    UniformRandomPolicy,
)
from .simulate import (
    SessionBatch,
    batch_to_events,
    simulate_session_batch,
    simulate_sessions,
)
from .types import (
    Collection,
    CollectionKind,
    Context,
    Dish,
    Marketplace,
    MealShift,
    N_SHIFTS,
    Order,
    OrderSource,
    Restaurant,
    SessionEvent,
    User,
    meal_shift_of,
)

__all__ = [
    "ChoiceSetup",
    "Collection",
    "CollectionKind",
    "Context",
    "Dish",
    "DisplayPolicy",
    "ExplorationPolicy",
    "FixedPolicy",
    "Marketplace",
    "MarketplaceConfig",
    "MealShift",
    "N_SHIFTS",
    "OraclePolicy",
    "Order",
    "OrderSource",
    "PopularityPolicy",
    "RankingPolicy",
    "Restaurant",
    "SessionBatch",
    "SessionEvent",
    "UniformRandomPolicy",
    "User",
    "WORLD_EPOCH",
    "batch_to_events",
    "build_choice_setup",
    "generate_marketplace",
    "latent_utilities",
    "load_marketplace",
    "meal_shift_of",
    "organic_reference_time",
    "read_events",
    "save_marketplace",
    "simulate_session_batch",
    "simulate_sessions",
    "write_events",
]
