"""Simulated A/B harness and the offline-vs-online correlation ladder.

Both arms replay one identical session stream (same users, timestamps,
homes and choice noise); only the display policy differs. That is the
simulator's whole advantage over a live experiment: the comparison is
paired session by session, so identical policies measure a lift of
exactly 0.0 and small real differences are not drowned in assignment
noise. Live tests cannot share randomness across arms, which is why their
arms hold disjoint users; here the arm label identifies the policy, not a
user subset.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import norm, rankdata, spearmanr

from ..errors import ConfigError
from ..marketplace.choice import ChoiceSetup, build_choice_setup
from ..marketplace.policies import DisplayPolicy, RankingPolicy
from ..marketplace.simulate import simulate_session_batch
from ..marketplace.types import Collection, Marketplace
from .offline import pairwise_accuracy
from .scorers import Scorer, score_tensor


@dataclass
class AbReport:
    control_id: str
    variant_id: str
    n_sessions_per_arm: int
    purchases_control: int
    purchases_variant: int
    ccr_control: float
    ccr_variant: float
    ccr_lift: float
    z_statistic: float
    p_value: float

    def to_dict(self) -> dict:
        return {
            "ccr_control": self.ccr_control,
            "ccr_lift": self.ccr_lift,
            "ccr_variant": self.ccr_variant,
            "control_id": self.control_id,
            "n_sessions_per_arm": self.n_sessions_per_arm,
            "p_value": self.p_value,
            "purchases_control": self.purchases_control,
            "purchases_variant": self.purchases_variant,
            "variant_id": self.variant_id,
            "z_statistic": self.z_statistic,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AbReport":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__})


def two_proportion_z(x1: int, n1: int, x2: int, n2: int) -> tuple[float, float]:
    """Pooled z-test for p2 - p1; returns (z, two-sided p)."""
    p1, p2 = x1 / n1, x2 / n2
    pool = (x1 + x2) / (n1 + n2)
    se = math.sqrt(pool * (1.0 - pool) * (1.0 / n1 + 1.0 / n2))
    if se == 0.0:
        z = 0.0 if p1 == p2 else math.copysign(math.inf, p2 - p1)
    else:
        z = (p2 - p1) / se
    return z, float(2.0 * norm.sf(abs(z)))


def simulate_ab_test(
    control_policy: DisplayPolicy,
    variant_policy: DisplayPolicy,
    market: Marketplace,
    n_sessions: int,
    seed: int,
    *,
    collections: list[Collection] | None = None,
    setup: ChoiceSetup | None = None,
    start_time: int | None = None,
    control_id: str = "control",
    variant_id: str = "variant",
) -> AbReport:
    """Replay one session stream under each policy and compare conversion.

    CCR is the fraction of an arm's sessions ending in a card purchase.
    Purchases are observed only; no orders are appended, so the test never
    mutates the world it measures.
    """
    if n_sessions < 2:
        raise ConfigError("n_sessions too small to populate both arms (< 2)")
    if setup is None:
        setup = build_choice_setup(market, collections)

    def run(policy: DisplayPolicy) -> int:
        batch = simulate_session_batch(
            market,
            policy,
            n_sessions,
            seed,
            setup=setup,
            start_time=start_time,
        )
        return int((batch.purchased_col >= 0).sum())

    x_c = run(control_policy)
    x_v = run(variant_policy)
    ccr_c = x_c / n_sessions
    ccr_v = x_v / n_sessions
    if ccr_c == 0.0:
        lift = 0.0 if ccr_v == 0.0 else math.inf
    else:
        lift = (ccr_v - ccr_c) / ccr_c
    z, p = two_proportion_z(x_c, n_sessions, x_v, n_sessions)
    return AbReport(
        control_id=control_id,
        variant_id=variant_id,
        n_sessions_per_arm=n_sessions,
        purchases_control=x_c,
        purchases_variant=x_v,
        ccr_control=ccr_c,
        ccr_variant=ccr_v,
        ccr_lift=lift,
        z_statistic=z,
        p_value=p,
    )


@dataclass
class LadderStep:
    control_id: str
    variant_id: str
    offline_accuracy_diff: float
    ccr_lift: float

    def to_dict(self) -> dict:
        return {
            "ccr_lift": self.ccr_lift,
            "control_id": self.control_id,
            "offline_accuracy_diff": self.offline_accuracy_diff,
            "variant_id": self.variant_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LadderStep":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__})


@dataclass
class CorrelationReport:
    steps: list[LadderStep]
    rank_correlation: float
    accuracies: dict[str, float] = field(default_factory=dict)
    ab_reports: list[AbReport] = field(default_factory=list)

    @property
    def signs_agree(self) -> bool:
        """True when every step's offline diff and CCR lift share a sign."""
        return all(
            math.copysign(1.0, s.offline_accuracy_diff)
            == math.copysign(1.0, s.ccr_lift)
            for s in self.steps
        )

    def to_dict(self) -> dict:
        return {
            "accuracies": dict(sorted(self.accuracies.items())),
            "ab_reports": [r.to_dict() for r in self.ab_reports],
            "rank_correlation": self.rank_correlation,
            "signs_agree": self.signs_agree,
            "steps": [s.to_dict() for s in self.steps],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CorrelationReport":
        return cls(
            steps=[LadderStep.from_dict(s) for s in d["steps"]],
            rank_correlation=d["rank_correlation"],
            accuracies=d.get("accuracies", {}),
            ab_reports=[AbReport.from_dict(r) for r in d.get("ab_reports", [])],
        )


def rank_correlation_of(diffs: list[float], lifts: list[float]) -> float:
    """Spearman correlation; exactly 1.0 when both orderings agree everywhere.

    Untied rankings use the rank-difference formula, whose sums are exact in
    float64, so full agreement really returns 1.0 rather than a value one
    ulp short of it. Tied rankings fall back to Pearson on midranks.
    """
    if len(diffs) < 2:
        raise ConfigError("rank correlation needs at least 2 ladder steps")
    r1 = rankdata(diffs)
    r2 = rankdata(lifts)
    n = len(r1)
    if len(set(r1)) == n and len(set(r2)) == n:
        d2 = float(((r1 - r2) ** 2).sum())
        return 1.0 - 6.0 * d2 / (n * (n * n - 1))
    rho = spearmanr(diffs, lifts).statistic
    return float(rho)


def offline_online_correlation(
    variants: list[Scorer],
    test_set,
    market: Marketplace,
    n_sessions: int,
    seed: int,
    *,
    n_cards: int = 6,
    collections: list[Collection] | None = None,
    setup: ChoiceSetup | None = None,
    start_time: int | None = None,
) -> CorrelationReport:
    """Walk a variant ladder and compare offline gains with simulated lifts.

    For each consecutive pair of variants: offline diff = later accuracy
    minus earlier on the held-out pairs, online lift = simulated CCR lift
    with the earlier variant as control. All pairs share one session
    stream, so each variant's CCR is measured on identical traffic.
    """
    if len(variants) < 3:
        raise ConfigError("the ladder needs >= 3 variants for >= 2 steps")
    if setup is None:
        setup = build_choice_setup(market, collections)

    accuracies = {
        s.model_id: pairwise_accuracy(s, test_set).pairwise_accuracy for s in variants
    }
    policies = [
        RankingPolicy(score_tensor(s, market, setup, setup.utilities.shape[2]), n_cards)
        for s in variants
    ]
    steps: list[LadderStep] = []
    reports: list[AbReport] = []
    for i in range(len(variants) - 1):
        lo, hi = variants[i], variants[i + 1]
        ab = simulate_ab_test(
            policies[i],
            policies[i + 1],
            market,
            n_sessions,
            seed,
            setup=setup,
            start_time=start_time,
            control_id=lo.model_id,
            variant_id=hi.model_id,
        )
        reports.append(ab)
        steps.append(
            LadderStep(
                control_id=lo.model_id,
                variant_id=hi.model_id,
                offline_accuracy_diff=accuracies[hi.model_id]
                - accuracies[lo.model_id],
                ccr_lift=ab.ccr_lift,
            )
        )
    rho = rank_correlation_of(
        [s.offline_accuracy_diff for s in steps], [s.ccr_lift for s in steps]
    )
    return CorrelationReport(
        steps=steps, rank_correlation=rho, accuracies=accuracies, ab_reports=reports
    )


def load_ab_report(path: str | Path) -> AbReport:
    return AbReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def load_correlation_report(path: str | Path) -> CorrelationReport:
    return CorrelationReport.from_dict(
        json.loads(Path(path).read_text(encoding="utf-8"))
    )


def correlation_summary_lines(report: CorrelationReport) -> list[str]:
    lines = ["offline accuracy diff vs simulated CCR lift, per ladder step:"]
    for s in report.steps:
        lines.append(
            f"  {s.control_id} -> {s.variant_id}: "
            f"offline {s.offline_accuracy_diff:+.4f}, "
            f"ccr lift {s.ccr_lift:+.2%}"
        )
    lines.append(
        f"rank correlation {report.rank_correlation:+.2f}, "
        f"signs {'agree' if report.signs_agree else 'DISAGREE'}"
    )
    return lines


def ladder_scatter_rows(report: CorrelationReport) -> list[str]:
    """Plain rows for external plotting of the accuracy-vs-lift relation."""
    rows = ["step\toffline_accuracy_diff\tccr_lift"]
    for s in report.steps:
        rows.append(
            f"{s.control_id}->{s.variant_id}\t"
            f"{s.offline_accuracy_diff!r}\t{s.ccr_lift!r}"
        )
    return rows
