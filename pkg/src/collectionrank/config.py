"""Pipeline configuration: one YAML file drives every command.

Each section mirrors a pipeline stage; ``configs/default.yaml`` is the
annotated reference copy. Stage commands hash only the keys they depend
on, so editing, say, the A/B session budget never invalidates a generated
world.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError
from .features.schema import build_feature_schema
from .marketplace.config import MarketplaceConfig

PIPELINE_SCHEMA_VERSION = 1


@dataclass
class EmbeddingConfig:
    dim: int = 16
    noise_scale: float = 0.25
    half_life_days: float = 30.0

    def validate(self) -> None:
        if self.dim < 2:
            raise ConfigError("embedding.dim must be >= 2")
        if self.noise_scale < 0:
            raise ConfigError("embedding.noise_scale must be >= 0")
        if self.half_life_days <= 0:
            raise ConfigError("embedding.half_life_days must be > 0")


@dataclass
class FeatureConfig:
    window_days: int = 28
    include_collection_size: bool = True
    include_mean_delivery_fee: bool = True
    include_total_orders: bool = False

    def validate(self) -> None:
        if self.window_days < 1:
            raise ConfigError("features.window_days must be >= 1")

    def schema(self):
        return build_feature_schema(
            include_collection_size=self.include_collection_size,
            include_mean_delivery_fee=self.include_mean_delivery_fee,
            include_total_orders=self.include_total_orders,
        )


@dataclass
class BoostConfig:
    n_estimators: int = 200
    learning_rate: float = 0.1
    max_leaves: int = 31
    min_samples_leaf: int = 20
    l2_regularization: float = 1.0
    n_bins: int = 64

    def validate(self) -> None:
        if self.n_estimators < 1:
            raise ConfigError("boost.n_estimators must be >= 1")
        if not 0 < self.learning_rate <= 1:
            raise ConfigError("boost.learning_rate must be in (0, 1]")
        if self.max_leaves < 2:
            raise ConfigError("boost.max_leaves must be >= 2")
        if self.min_samples_leaf < 1:
            raise ConfigError("boost.min_samples_leaf must be >= 1")
        if self.l2_regularization < 0:
            raise ConfigError("boost.l2_regularization must be >= 0")
        if self.n_bins < 2:
            raise ConfigError("boost.n_bins must be >= 2")


@dataclass
class DatasetConfig:
    #: Logged sessions in the exploration-instrumented stream.
    n_sessions: int = 100_000
    #: Fraction of sessions replaced by a uniform random pair. Production
    #: systems run well under 1%; at simulator scale the rate compensates
    #: for traffic volume, since only flagged purchases become pairs.
    exploration_rate: float = 0.2
    #: Sessions in the category-carousel bootstrap log.
    carousel_sessions: int = 50_000
    #: Cards per incumbent display.
    display_cards: int = 6
    holdout_fraction: float = 0.2
    #: Training rows to use: "sampled" (exploration pairs), "carousel"
    #: (bootstrap pairs), or "merged" (both; acts as the explicit opt-in
    #: for mixing provenances).
    provenance: str = "sampled"

    def validate(self) -> None:
        if self.n_sessions < 1 or self.carousel_sessions < 0:
            raise ConfigError("dataset session counts must be positive")
        if not 0.0 < self.exploration_rate <= 1.0:
            raise ConfigError("dataset.exploration_rate must be in (0, 1]")
        if self.display_cards < 1:
            raise ConfigError("dataset.display_cards must be >= 1")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ConfigError("dataset.holdout_fraction must be in (0, 1)")
        if self.provenance not in ("sampled", "carousel", "merged"):
            raise ConfigError(
                "dataset.provenance must be sampled, carousel or merged, "
                f"got {self.provenance!r}"
            )


@dataclass
class LadderVariant:
    name: str
    features: list[str]


def default_ladder_variants() -> list[LadderVariant]:
    """Nested ablations: demand only, plus flat features, plus similarity
    representations, plus the per-shift restaurant-affinity feature."""
    v1 = ["total_orders"]
    v2 = v1 + [
        "is_dish_collection",
        "free_delivery_order_fraction",
        "shift_specificity",
        "collection_size",
        "mean_delivery_fee",
        "user_orders_in_collection_restaurants",
        "vegan_match",
        "shift_is_dawn",
        "shift_is_breakfast",
        "shift_is_lunch",
        "shift_is_snack",
        "shift_is_dinner",
    ]
    v3 = v2 + [
        "anchor_similarity_1",
        "anchor_similarity_2",
        "anchor_similarity_3",
        "popularity_shift_similarity",
    ]
    v4 = v3 + ["shift_orders_per_restaurant"]
    return [
        LadderVariant("v1", v1),
        LadderVariant("v2", v2),
        LadderVariant("v3", v3),
        LadderVariant("v4", v4),
    ]


@dataclass
class EvalConfig:
    #: Sessions per arm in a single A/B comparison.
    ab_sessions: int = 100_000
    display_cards: int = 6
    ladder_sessions: int = 100_000
    ladder_seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    ladder_variants: list[LadderVariant] = field(
        default_factory=default_ladder_variants
    )

    def validate(self) -> None:
        if self.ab_sessions < 2:
            raise ConfigError("eval.ab_sessions must be >= 2")
        if self.ladder_sessions < 2:
            raise ConfigError("eval.ladder_sessions must be >= 2")
        if self.display_cards < 1:
            raise ConfigError("eval.display_cards must be >= 1")
        if not self.ladder_seeds:
            raise ConfigError("eval.ladder_seeds must not be empty")
        if len(self.ladder_variants) < 3:
            raise ConfigError("eval.ladder_variants needs >= 3 entries")
        names = [v.name for v in self.ladder_variants]
        if len(set(names)) != len(names):
            raise ConfigError("ladder variant names must be unique")
        known = set(build_feature_schema(include_total_orders=True).names)
        for v in self.ladder_variants:
            if not v.features:
                raise ConfigError(f"ladder variant {v.name!r} has no features")
            unknown = set(v.features) - known
            if unknown:
                raise ConfigError(
                    f"ladder variant {v.name!r} references unknown features: "
                    f"{sorted(unknown)}"
                )


@dataclass
class PipelineConfig:
    schema_version: int = PIPELINE_SCHEMA_VERSION
    seed: int = 0
    artifacts_dir: str = "artifacts"
    marketplace: MarketplaceConfig = field(default_factory=MarketplaceConfig)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    boost: BoostConfig = field(default_factory=BoostConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def validate(self) -> None:
        if self.schema_version != PIPELINE_SCHEMA_VERSION:
            raise ConfigError(
                f"unsupported pipeline schema_version {self.schema_version}, "
                f"expected {PIPELINE_SCHEMA_VERSION}"
            )
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        if not self.artifacts_dir:
            raise ConfigError("artifacts_dir must be set")
        self.marketplace.validate()
        self.embedding.validate()
        self.features.validate()
        self.boost.validate()
        self.dataset.validate()
        self.eval.validate()

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": self.schema_version,
            "seed": self.seed,
            "artifacts_dir": self.artifacts_dir,
            "marketplace": self.marketplace.to_dict(),
            "embedding": dataclasses.asdict(self.embedding),
            "features": dataclasses.asdict(self.features),
            "boost": dataclasses.asdict(self.boost),
            "dataset": dataclasses.asdict(self.dataset),
            "eval": {
                "ab_sessions": self.eval.ab_sessions,
                "display_cards": self.eval.display_cards,
                "ladder_sessions": self.eval.ladder_sessions,
                "ladder_seeds": list(self.eval.ladder_seeds),
                "ladder_variants": [
                    {"name": v.name, "features": list(v.features)}
                    for v in self.eval.ladder_variants
                ],
            },
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PipelineConfig":
        if not isinstance(d, dict):
            raise ConfigError("pipeline config must be a mapping")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown pipeline config keys: {sorted(unknown)}")
        kwargs: dict[str, Any] = {
            k: d[k] for k in ("schema_version", "seed", "artifacts_dir") if k in d
        }
        if "marketplace" in d:
            kwargs["marketplace"] = MarketplaceConfig.from_dict(d["marketplace"])
        for key, klass in (
            ("embedding", EmbeddingConfig),
            ("features", FeatureConfig),
            ("boost", BoostConfig),
            ("dataset", DatasetConfig),
        ):
            if key in d:
                kwargs[key] = _section_from_dict(klass, key, d[key])
        if "eval" in d:
            kwargs["eval"] = _eval_from_dict(d["eval"])
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg


def _section_from_dict(klass, section: str, d: dict[str, Any]):
    if not isinstance(d, dict):
        raise ConfigError(f"config section {section!r} must be a mapping")
    known = {f.name for f in dataclasses.fields(klass)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown {section} config keys: {sorted(unknown)}")
    return klass(**d)


def _eval_from_dict(d: dict[str, Any]) -> EvalConfig:
    if not isinstance(d, dict):
        raise ConfigError("config section 'eval' must be a mapping")
    known = {f.name for f in dataclasses.fields(EvalConfig)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown eval config keys: {sorted(unknown)}")
    kwargs = dict(d)
    if "ladder_variants" in kwargs:
        variants = []
        for entry in kwargs["ladder_variants"]:
            extra = set(entry) - {"name", "features"}
            if extra:
                raise ConfigError(
                    f"ladder variant entries take 'name' and 'features' only, "
                    f"got extra {sorted(extra)}"
                )
            variants.append(
                LadderVariant(name=entry["name"], features=list(entry["features"]))
            )
        kwargs["ladder_variants"] = variants
    return EvalConfig(**kwargs)


def load_pipeline_config(path: str | Path) -> PipelineConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        raw = yaml.safe_load(p.read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse {p}: {e}") from e
    if raw is None:
        raw = {}
    try:
        return PipelineConfig.from_dict(raw)
    except TypeError as e:
        raise ConfigError(f"invalid config in {p}: {e}") from e
