"""Shared fixtures: one compact generated world reused across test modules.

Session-scoped fixtures are treated as immutable; tests that need to mutate
user histories (order appending) regenerate their own world. The terminal
summary hook prints one PASS/FAIL line per acceptance criterion so the
acceptance verdicts are visible even under default output capture.
"""

from __future__ import annotations

import re

import numpy as np
import pytest

from collectionrank.boost import GbdtClassifier, ScoringModel
from collectionrank.dataset import build_unbiased_dataset, split_dataset
from collectionrank.embedding import build_item_embeddings
from collectionrank.features import FeatureExtractor, build_feature_schema
from collectionrank.marketplace import (
    ExplorationPolicy,
    MarketplaceConfig,
    PopularityPolicy,
    build_choice_setup,
    generate_marketplace,
    organic_reference_time,
    simulate_sessions,
)

SMALL_SEED = 7


def small_marketplace_config() -> MarketplaceConfig:
    return MarketplaceConfig(
        n_regions=2,
        n_taxonomies=6,
        n_restaurants=50,
        n_dishes=220,
        n_users=180,
        n_collections=10,
        n_homes=3,
        home_conversion_multipliers=(1.0, 0.7, 1.3),
        orders_per_user_mean=18.0,
        min_collections_per_home=4,
    )


@pytest.fixture(scope="session")
def small_config() -> MarketplaceConfig:
    return small_marketplace_config()


@pytest.fixture(scope="session")
def small_market(small_config):
    return generate_marketplace(small_config, SMALL_SEED)


@pytest.fixture()
def fresh_small_market(small_config):
    """A private copy for tests that append orders or otherwise mutate."""
    return generate_marketplace(small_config, SMALL_SEED)


@pytest.fixture(scope="session")
def small_now(small_config) -> int:
    return organic_reference_time(small_config)


@pytest.fixture(scope="session")
def small_store(small_market):
    return build_item_embeddings(small_market, dim=8, seed=SMALL_SEED)


@pytest.fixture(scope="session")
def small_setup(small_market):
    return build_choice_setup(small_market)


@pytest.fixture(scope="session")
def wide_schema():
    return build_feature_schema(include_total_orders=True)


@pytest.fixture(scope="session")
def small_extractor(small_market, small_store, small_now, wide_schema):
    return FeatureExtractor(
        small_market,
        small_store,
        collections=list(small_market.collections),
        schema=wide_schema,
        now=small_now,
    )


@pytest.fixture(scope="session")
def small_log(small_market, small_now):
    policy = ExplorationPolicy(PopularityPolicy(4, as_of=small_now), rate=0.5)
    return simulate_sessions(
        small_market,
        policy,
        6000,
        seed=11,
        start_time=small_now,
        append_orders=False,
    )


@pytest.fixture(scope="session")
def small_dataset(small_log, small_market, small_extractor):
    return build_unbiased_dataset(small_log, small_market, small_extractor)


@pytest.fixture(scope="session")
def small_split(small_dataset):
    return split_dataset(small_dataset, 0.25, seed=3)


@pytest.fixture(scope="session")
def small_model(small_split, wide_schema):
    train, _ = small_split
    clf = GbdtClassifier(
        n_estimators=60,
        learning_rate=0.1,
        max_leaves=15,
        min_samples_leaf=10,
        l2_regularization=1.0,
        n_bins=64,
        monotonic_cst=[f.monotone for f in wide_schema.features],
        random_state=0,
    )
    clf.fit(train.X, train.y)
    return ScoringModel(estimator=clf, schema=wide_schema)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20250823)


_CRITERION = re.compile(r"test_criterion_(\d+)")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    verdicts: dict[int, str] = {}
    durations: dict[int, float] = {}
    # Durations accumulate over all phases so module-fixture time (the
    # ladder runs) is attributed to the first criterion that triggers it.
    for outcome in ("", "passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance" not in nodeid:
                continue
            m = _CRITERION.search(nodeid)
            if m is None:
                continue
            n = int(m.group(1))
            durations[n] = durations.get(n, 0.0) + float(
                getattr(rep, "duration", 0.0)
            )
            if outcome in ("failed", "error"):
                verdicts[n] = "FAIL"
            elif outcome == "passed" and getattr(rep, "when", "call") == "call":
                verdicts.setdefault(n, "PASS")
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(verdicts):
        terminalreporter.write_line(
            f"{verdicts[n]} criterion {n} ({durations.get(n, 0.0):.1f}s)"
        )
