"""Stage orchestration: artifacts, manifests, staleness detection.

Every command writes its outputs plus a manifest holding the hash of the
config keys it depends on, the hashes of the files it read, and the tool
version. A downstream command compares the producer's recorded config
hash against the current config and refuses to run on stale artifacts
unless forced. All writers are deterministic, so re-running a stage with
unchanged config and seed reproduces every byte, manifest included.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from . import __version__
from ._util import stable_hash
from .boost.estimator import GbdtClassifier
from .boost.io import ScoringModel, load_model, save_model
from .config import PipelineConfig
from .dataset import (
    LabeledDataset,
    build_carousel_dataset,
    build_unbiased_dataset,
    dataset_meta,
    exploration_display_policy,
    filter_users,
    load_dataset,
    merge_datasets,
    save_dataset,
    split_dataset,
)
from .embedding.store import build_item_embeddings, load_store, save_store
from .errors import MissingArtifactError, StaleArtifactError
from .evaluation import (
    CorrelationReport,
    LadderStep,
    ModelScorer,
    PopularityScorer,
    correlation_summary_lines,
    offline_online_correlation,
    pairwise_accuracy,
    rank_correlation_of,
    save_report,
    score_tensor,
    simulate_ab_test,
    summary_lines,
)
from .features.extract import FeatureExtractor
from .features.schema import build_feature_schema
from .marketplace.choice import build_choice_setup
from .marketplace.generate import generate_marketplace, organic_reference_time
from .marketplace.logio import (
    load_marketplace,
    read_events,
    save_marketplace,
    write_events,
)
from .marketplace.policies import ExplorationPolicy, PopularityPolicy, RankingPolicy
from .marketplace.simulate import simulate_sessions

MANIFEST_FORMAT = "collectionrank.manifest"
MANIFEST_VERSION = (1, 0)

WORLD_FILE = "world.json"
STORE_FILE = "embeddings.cres"
CAROUSEL_LOG_FILE = "carousel_log.jsonl"
EXPLORATION_LOG_FILE = "exploration_log.jsonl"
TRAIN_MATRIX_FILE = "train_matrix.txt"
TRAIN_PAIRS_FILE = "train_pairs.csv"
TEST_MATRIX_FILE = "test_matrix.txt"
TEST_PAIRS_FILE = "test_pairs.csv"
MODEL_FILE = "model.json"
EVAL_REPORT_FILE = "eval_report.json"
AB_REPORT_FILE = "ab_report.json"
LADDER_REPORT_FILE = "ladder_report.json"

STAGE_OUTPUTS = {
    "generate": (WORLD_FILE, STORE_FILE, CAROUSEL_LOG_FILE, EXPLORATION_LOG_FILE),
    "dataset": (
        TRAIN_MATRIX_FILE,
        TRAIN_PAIRS_FILE,
        TEST_MATRIX_FILE,
        TEST_PAIRS_FILE,
    ),
    "train": (MODEL_FILE,),
    "eval": (EVAL_REPORT_FILE,),
    "abtest": (AB_REPORT_FILE,),
    "ladder": (LADDER_REPORT_FILE,),
}

#: Which command produces each stage's artifacts (for error messages).
STAGE_COMMAND = {
    "generate": "generate",
    "dataset": "build-dataset",
    "train": "train",
    "eval": "eval",
    "abtest": "abtest",
    "ladder": "ladder",
}

_GENERATE_KEYS = (
    "seed",
    "marketplace",
    "embedding",
    "dataset.n_sessions",
    "dataset.exploration_rate",
    "dataset.carousel_sessions",
    "dataset.display_cards",
)
_DATASET_KEYS = _GENERATE_KEYS + (
    "features",
    "dataset.holdout_fraction",
    "dataset.provenance",
)
_TRAIN_KEYS = _DATASET_KEYS + ("boost",)

#: Config keys each stage's outputs depend on. A stage is stale when the
#: hash over these keys no longer matches the manifest.
STAGE_CONFIG_KEYS = {
    "generate": _GENERATE_KEYS,
    "dataset": _DATASET_KEYS,
    "train": _TRAIN_KEYS,
    "eval": _TRAIN_KEYS,
    "abtest": _TRAIN_KEYS + ("eval.ab_sessions", "eval.display_cards"),
    "ladder": (
        "marketplace",
        "embedding",
        "boost",
        "features.window_days",
        "dataset.n_sessions",
        "dataset.exploration_rate",
        "dataset.display_cards",
        "dataset.holdout_fraction",
        "eval.ladder_sessions",
        "eval.ladder_seeds",
        "eval.ladder_variants",
        "eval.display_cards",
    ),
}

_SEED_CAROUSEL = 0xCA11
_SEED_EXPLORE = 0x10C5
_SEED_AB = 0xAB7E

Emit = Callable[[str], None]


def _emitter(quiet: bool) -> Emit:
    if quiet:
        return lambda line: None
    return print


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _dig(d: dict, dotted: str):
    cur = d
    for part in dotted.split("."):
        cur = cur[part]
    return cur


def stage_config_hash(config: PipelineConfig, stage: str) -> str:
    full = config.to_dict()
    subset = {key: _dig(full, key) for key in STAGE_CONFIG_KEYS[stage]}
    return hashlib.sha256(canonical_json(subset).encode()).hexdigest()


def _manifest_path(art: Path, stage: str) -> Path:
    return art / f"{stage}.manifest.json"


def write_manifest(
    art: Path,
    stage: str,
    config: PipelineConfig,
    inputs: dict[str, str],
) -> None:
    manifest = {
        "format": MANIFEST_FORMAT,
        "format_version": list(MANIFEST_VERSION),
        "command": STAGE_COMMAND[stage],
        "stage": stage,
        "tool_version": __version__,
        "config_hash": stage_config_hash(config, stage),
        "inputs": dict(sorted(inputs.items())),
        "outputs": {
            name: sha256_file(art / name) for name in STAGE_OUTPUTS[stage]
        },
    }
    _manifest_path(art, stage).write_text(
        canonical_json(manifest) + "\n", encoding="utf-8"
    )


def require_stage(
    art: Path, stage: str, config: PipelineConfig, *, force: bool = False
) -> dict:
    """Load a producer stage's manifest, verifying freshness and files."""
    command = STAGE_COMMAND[stage]
    mp = _manifest_path(art, stage)
    if not mp.exists():
        raise MissingArtifactError(
            f"no {stage} artifacts in {art}; run `collectionrank {command}` first",
            producer=command,
        )
    manifest = json.loads(mp.read_text(encoding="utf-8"))
    if not force and manifest.get("config_hash") != stage_config_hash(config, stage):
        raise StaleArtifactError(
            f"{stage} artifacts in {art} were built from a different "
            f"configuration; re-run `collectionrank {command}` or pass --force"
        )
    for name, recorded in manifest.get("outputs", {}).items():
        path = art / name
        if not path.exists():
            raise MissingArtifactError(
                f"artifact {name} is missing from {art}; "
                f"re-run `collectionrank {command}`",
                producer=command,
            )
        if not force and sha256_file(path) != recorded:
            raise StaleArtifactError(
                f"artifact {name} in {art} does not match its manifest; "
                f"re-run `collectionrank {command}` or pass --force"
            )
    return manifest


def _artifacts_dir(config: PipelineConfig) -> Path:
    art = Path(config.artifacts_dir)
    art.mkdir(parents=True, exist_ok=True)
    return art


def _input_hashes(art: Path, names: list[str]) -> dict[str, str]:
    return {name: sha256_file(art / name) for name in names}


# ---------------------------------------------------------------- commands


def cmd_generate(config: PipelineConfig, *, force: bool = False, quiet: bool = False) -> Path:
    """World, item embeddings, and the two session logs."""
    emit = _emitter(quiet)
    art = _artifacts_dir(config)
    seed = config.seed

    market = generate_marketplace(config.marketplace, seed)
    now = organic_reference_time(config.marketplace)
    save_marketplace(market, art / WORLD_FILE)
    emit(
        f"world: {len(market.users)} users, {len(market.collections)} collections, "
        f"{len(market.dishes)} dishes -> {WORLD_FILE}"
    )

    store = build_item_embeddings(
        market, config.embedding.dim, seed, config.embedding.noise_scale
    )
    save_store(store, art / STORE_FILE)
    emit(f"embeddings: {len(store)} vectors of dim {config.embedding.dim} -> {STORE_FILE}")

    # Bootstrap log: the category-carousel surface, popularity-ranked from
    # the organic snapshot. Purchases stay in the log only; the world file
    # keeps the organic snapshot so every later stage sees the same state.
    carousel_policy = PopularityPolicy(config.dataset.display_cards, as_of=now)
    carousel_log = simulate_pipeline_sessions(
        market,
        carousel_policy,
        config.dataset.carousel_sessions,
        stable_hash(seed, _SEED_CAROUSEL),
        collections=list(market.category_collections),
        start_time=now,
    )
    write_events(carousel_log, art / CAROUSEL_LOG_FILE)
    bought = sum(1 for e in carousel_log if e.purchased_collection_id is not None)
    emit(
        f"carousel log: {len(carousel_log)} sessions, "
        f"{bought} purchases -> {CAROUSEL_LOG_FILE}"
    )

    exploration = exploration_display_policy(
        PopularityPolicy(config.dataset.display_cards, as_of=now),
        config.dataset.exploration_rate,
    )
    log = simulate_pipeline_sessions(
        market,
        exploration,
        config.dataset.n_sessions,
        stable_hash(seed, _SEED_EXPLORE),
        start_time=now,
    )
    write_events(log, art / EXPLORATION_LOG_FILE)
    flagged = sum(1 for e in log if e.exploration_flag)
    bought = sum(1 for e in log if e.purchased_collection_id is not None)
    emit(
        f"exploration log: {len(log)} sessions, {flagged} flagged, "
        f"{bought} purchases -> {EXPLORATION_LOG_FILE}"
    )

    write_manifest(art, "generate", config, inputs={})
    return art


def simulate_pipeline_sessions(market, policy, n_sessions, seed, **kwargs):
    """Simulate and log sessions without mutating the world snapshot.

    Pipeline stages re-load the world from disk, so appending purchase
    orders here would create in-memory state the artifacts never see.
    """
    return simulate_sessions(
        market, policy, n_sessions, seed, append_orders=False, **kwargs
    )


def _build_extractor(config: PipelineConfig, market, store, schema) -> FeatureExtractor:
    return FeatureExtractor(
        market,
        store,
        schema=schema,
        now=organic_reference_time(market.config),
        window_days=config.features.window_days,
        half_life_days=config.embedding.half_life_days,
    )


def cmd_build_dataset(
    config: PipelineConfig, *, force: bool = False, quiet: bool = False
) -> Path:
    """Labeled train/test pairs with extracted features."""
    emit = _emitter(quiet)
    art = _artifacts_dir(config)
    require_stage(art, "generate", config, force=force)

    market = load_marketplace(art / WORLD_FILE)
    store = load_store(art / STORE_FILE)
    log = read_events(art / EXPLORATION_LOG_FILE)
    schema = config.features.schema()
    extractor = _build_extractor(config, market, store, schema)

    ds = build_unbiased_dataset(log, market, extractor)
    train, test = split_dataset(ds, config.dataset.holdout_fraction, config.seed)
    test_users = {p.user_id for p in test.pairs}

    provenance = config.dataset.provenance
    if provenance in ("carousel", "merged"):
        carousel_log = read_events(art / CAROUSEL_LOG_FILE)
        ds_car = build_carousel_dataset(carousel_log, market, extractor, config.seed)
        # Keep the holdout user-disjoint from every training row.
        ds_car = filter_users(ds_car, exclude=test_users)
        if provenance == "carousel":
            train = ds_car
        else:
            train = merge_datasets(ds_car, train, allow_mixed_provenance=True)

    save_dataset(train, art / TRAIN_MATRIX_FILE, art / TRAIN_PAIRS_FILE)
    save_dataset(test, art / TEST_MATRIX_FILE, art / TEST_PAIRS_FILE)
    emit(
        f"train: {train.n_pairs} pairs ({provenance}), "
        f"test: {test.n_pairs} pairs (exploration holdout)"
    )
    emit(f"balance: {canonical_json(dataset_meta(test)['pairs_per_home'])} test pairs per home")

    inputs = _input_hashes(
        art, [WORLD_FILE, STORE_FILE, CAROUSEL_LOG_FILE, EXPLORATION_LOG_FILE]
    )
    write_manifest(art, "dataset", config, inputs=inputs)
    return art


def cmd_train(config: PipelineConfig, *, force: bool = False, quiet: bool = False) -> Path:
    """Fit the monotonic booster on the training pairs."""
    emit = _emitter(quiet)
    art = _artifacts_dir(config)
    require_stage(art, "dataset", config, force=force)

    schema = config.features.schema()
    train = load_dataset(art / TRAIN_MATRIX_FILE, art / TRAIN_PAIRS_FILE, schema)
    b = config.boost
    clf = GbdtClassifier(
        n_estimators=b.n_estimators,
        learning_rate=b.learning_rate,
        max_leaves=b.max_leaves,
        min_samples_leaf=b.min_samples_leaf,
        l2_regularization=b.l2_regularization,
        n_bins=b.n_bins,
        monotonic_cst=[f.monotone for f in schema.features],
        random_state=config.seed,
    )
    clf.fit(train.X, train.y)
    model = ScoringModel(estimator=clf, schema=schema)
    save_model(model, art / MODEL_FILE)
    emit(
        f"trained {b.n_estimators} trees on {train.n_rows} rows; "
        f"final train logloss {clf.train_losses_[-1]:.4f} -> {MODEL_FILE}"
    )

    inputs = _input_hashes(art, [TRAIN_MATRIX_FILE, TRAIN_PAIRS_FILE])
    write_manifest(art, "train", config, inputs=inputs)
    return art


def cmd_eval(config: PipelineConfig, *, force: bool = False, quiet: bool = False) -> Path:
    """Pairwise accuracy of the trained model on the unbiased holdout."""
    emit = _emitter(quiet)
    art = _artifacts_dir(config)
    require_stage(art, "dataset", config, force=force)
    require_stage(art, "train", config, force=force)

    model = load_model(art / MODEL_FILE)
    test = load_dataset(art / TEST_MATRIX_FILE, art / TEST_PAIRS_FILE, model.schema)
    report = pairwise_accuracy(ModelScorer(model, model_id="gbdt"), test)
    save_report(report, art / EVAL_REPORT_FILE)
    for line in summary_lines(report):
        emit(line)

    market = load_marketplace(art / WORLD_FILE)
    setup = build_choice_setup(market)
    baseline = pairwise_accuracy(
        PopularityScorer(
            market, setup, as_of=organic_reference_time(market.config)
        ),
        test,
    )
    emit(
        f"popularity baseline: {baseline.pairwise_accuracy:.4f} "
        f"({report.pairwise_accuracy - baseline.pairwise_accuracy:+.4f} model advantage)"
    )

    inputs = _input_hashes(art, [MODEL_FILE, TEST_MATRIX_FILE, TEST_PAIRS_FILE])
    write_manifest(art, "eval", config, inputs=inputs)
    return art


def cmd_abtest(config: PipelineConfig, *, force: bool = False, quiet: bool = False) -> Path:
    """Simulated A/B test: trained model against the popularity incumbent."""
    emit = _emitter(quiet)
    art = _artifacts_dir(config)
    require_stage(art, "generate", config, force=force)
    require_stage(art, "train", config, force=force)

    market = load_marketplace(art / WORLD_FILE)
    store = load_store(art / STORE_FILE)
    model = load_model(art / MODEL_FILE)
    now = organic_reference_time(market.config)
    setup = build_choice_setup(market)
    extractor = _build_extractor(config, market, store, model.schema)
    scorer = ModelScorer(model, extractor, model_id="gbdt")

    k = config.eval.display_cards
    control = PopularityPolicy(k, as_of=now)
    variant = RankingPolicy(score_tensor(scorer, market, setup), k)
    ab = simulate_ab_test(
        control,
        variant,
        market,
        config.eval.ab_sessions,
        stable_hash(config.seed, _SEED_AB),
        setup=setup,
        start_time=now,
        control_id="popularity",
        variant_id="gbdt",
    )
    (art / AB_REPORT_FILE).write_text(
        canonical_json(ab.to_dict()) + "\n", encoding="utf-8"
    )
    emit(
        f"ccr {ab.ccr_control:.4f} ({ab.control_id}) -> {ab.ccr_variant:.4f} "
        f"({ab.variant_id}): lift {ab.ccr_lift:+.2%}, z={ab.z_statistic:.2f}, "
        f"p={ab.p_value:.3g} over {ab.n_sessions_per_arm} sessions per arm"
    )

    inputs = _input_hashes(art, [WORLD_FILE, STORE_FILE, MODEL_FILE])
    write_manifest(art, "abtest", config, inputs=inputs)
    return art


def run_ladder_seed(config: PipelineConfig, seed: int) -> CorrelationReport:
    """One self-contained ladder experiment: world, log, variants, A/B."""
    market = generate_marketplace(config.marketplace, seed)
    now = organic_reference_time(config.marketplace)
    store = build_item_embeddings(
        market, config.embedding.dim, seed, config.embedding.noise_scale
    )
    wide = build_feature_schema(
        include_collection_size=True,
        include_mean_delivery_fee=True,
        include_total_orders=True,
    )
    extractor = _build_extractor(config, market, store, wide)
    setup = build_choice_setup(market)

    policy = ExplorationPolicy(
        PopularityPolicy(config.dataset.display_cards, as_of=now),
        config.dataset.exploration_rate,
    )
    log = simulate_pipeline_sessions(
        market,
        policy,
        config.dataset.n_sessions,
        stable_hash(seed, _SEED_EXPLORE),
        start_time=now,
    )
    ds = build_unbiased_dataset(log, market, extractor)
    train, test = split_dataset(ds, config.dataset.holdout_fraction, seed)

    b = config.boost
    scorers = []
    for variant in config.eval.ladder_variants:
        sub = wide.subset(variant.features)
        cols = [wide.names.index(n) for n in sub.names]
        clf = GbdtClassifier(
            n_estimators=b.n_estimators,
            learning_rate=b.learning_rate,
            max_leaves=b.max_leaves,
            min_samples_leaf=b.min_samples_leaf,
            l2_regularization=b.l2_regularization,
            n_bins=b.n_bins,
            monotonic_cst=[f.monotone for f in sub.features],
            random_state=seed,
        )
        clf.fit(train.X[:, cols], train.y)
        scorers.append(
            ModelScorer(
                ScoringModel(estimator=clf, schema=sub),
                extractor,
                model_id=variant.name,
            )
        )
    return offline_online_correlation(
        scorers,
        test,
        market,
        config.eval.ladder_sessions,
        stable_hash(seed, _SEED_AB),
        n_cards=config.eval.display_cards,
        setup=setup,
        start_time=now,
    )


def aggregate_ladder(reports: list[CorrelationReport]) -> CorrelationReport:
    """Average offline diffs and lifts across seeds, then re-rank."""
    first = reports[0]
    n = len(reports)
    for rep in reports[1:]:
        if [(s.control_id, s.variant_id) for s in rep.steps] != [
            (s.control_id, s.variant_id) for s in first.steps
        ]:
            raise ValueError("ladder reports have different step structure")
    steps = []
    for i, step in enumerate(first.steps):
        steps.append(
            LadderStep(
                control_id=step.control_id,
                variant_id=step.variant_id,
                offline_accuracy_diff=sum(
                    r.steps[i].offline_accuracy_diff for r in reports
                )
                / n,
                ccr_lift=sum(r.steps[i].ccr_lift for r in reports) / n,
            )
        )
    accuracies = {
        vid: sum(r.accuracies[vid] for r in reports) / n
        for vid in first.accuracies
    }
    rho = rank_correlation_of(
        [s.offline_accuracy_diff for s in steps], [s.ccr_lift for s in steps]
    )
    return CorrelationReport(steps=steps, rank_correlation=rho, accuracies=accuracies)


def cmd_ladder(config: PipelineConfig, *, force: bool = False, quiet: bool = False) -> Path:
    """The full ablation-ladder experiment, seed-averaged."""
    emit = _emitter(quiet)
    art = _artifacts_dir(config)

    per_seed: list[CorrelationReport] = []
    for seed in config.eval.ladder_seeds:
        rep = run_ladder_seed(config, seed)
        per_seed.append(rep)
        lifts = ", ".join(f"{s.ccr_lift:+.2%}" for s in rep.steps)
        emit(f"seed {seed}: lifts [{lifts}], rank corr {rep.rank_correlation:+.2f}")

    aggregate = aggregate_ladder(per_seed)
    payload = {
        "format": "collectionrank.ladder_report",
        "format_version": [1, 0],
        "seeds": list(config.eval.ladder_seeds),
        "aggregate": aggregate.to_dict(),
        "per_seed": [r.to_dict() for r in per_seed],
    }
    (art / LADDER_REPORT_FILE).write_text(
        canonical_json(payload) + "\n", encoding="utf-8"
    )
    for line in correlation_summary_lines(aggregate):
        emit(line)

    write_manifest(art, "ladder", config, inputs={})
    return art


def load_ladder_artifact(path: Path) -> dict:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return {
        "seeds": payload["seeds"],
        "aggregate": CorrelationReport.from_dict(payload["aggregate"]),
        "per_seed": [CorrelationReport.from_dict(r) for r in payload["per_seed"]],
    }
