"""Offline pairwise evaluation and the simulated A/B harness."""

from .abtest import (
    AbReport,
    CorrelationReport,
    LadderStep,
    correlation_summary_lines,
    ladder_scatter_rows,
    load_ab_report,
    load_correlation_report,
    offline_online_correlation,
    rank_correlation_of,
    simulate_ab_test,
    two_proportion_z,
)
from .offline import (
    EvalReport,
    SliceAccuracy,
    load_eval_report,
    pairwise_accuracy,
    rank_collections,
    save_report,
    summary_lines,
)
from .scorers import (
    ConstantScorer,
    ModelScorer,
    NegatedScorer,
    OracleScorer,
    PopularityScorer,
    Scorer,
    as_scorer,
    score_tensor,
)

__all__ = [
    "AbReport",
    "ConstantScorer",
    "CorrelationReport",
    "EvalReport",
    "LadderStep",
    "ModelScorer",
    "NegatedScorer",
    "OracleScorer",
    "PopularityScorer",
    "Scorer",
    "SliceAccuracy",
    "as_scorer",
    "correlation_summary_lines",
    "ladder_scatter_rows",
    "load_ab_report",
    "load_correlation_report",
    "load_eval_report",
    "offline_online_correlation",
    "pairwise_accuracy",
    "rank_collections",
    "rank_correlation_of",
    "save_report",
    "score_tensor",
    "simulate_ab_test",
    "summary_lines",
    "two_proportion_z",
]
