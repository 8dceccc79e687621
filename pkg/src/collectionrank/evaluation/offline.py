"""Pairwise accuracy over labeled pairs, with per-home and per-shift cuts.

A pair is credited 1 when the purchased collection outscores its
co-displayed alternative, 0.5 on an exact tie, 0 otherwise. Credits are
multiples of 0.5, so all the sums below are exact in float64 and the
overall accuracy equals the count-weighted mean of any breakdown.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from ..marketplace.types import Collection, Context, User
from .scorers import Scorer, as_scorer


@dataclass
class SliceAccuracy:
    n_pairs: int
    correct: float  # sum of per-pair credits, multiples of 0.5
    accuracy: float

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "correct": self.correct,
            "n_pairs": self.n_pairs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SliceAccuracy":
        return cls(n_pairs=d["n_pairs"], correct=d["correct"], accuracy=d["accuracy"])


@dataclass
class EvalReport:
    model_id: str
    pairwise_accuracy: float
    n_pairs: int
    per_home: dict[int, SliceAccuracy] = field(default_factory=dict)
    per_shift: dict[str, SliceAccuracy] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "n_pairs": self.n_pairs,
            "pairwise_accuracy": self.pairwise_accuracy,
            "per_home": {str(h): s.to_dict() for h, s in sorted(self.per_home.items())},
            "per_shift": {k: s.to_dict() for k, s in sorted(self.per_shift.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(
            model_id=d["model_id"],
            pairwise_accuracy=d["pairwise_accuracy"],
            n_pairs=d["n_pairs"],
            per_home={
                int(h): SliceAccuracy.from_dict(s) for h, s in d["per_home"].items()
            },
            per_shift={
                k: SliceAccuracy.from_dict(s) for k, s in d["per_shift"].items()
            },
        )


def _slice_table(keys: np.ndarray, credit: np.ndarray) -> dict:
    out = {}
    for k in np.unique(keys):
        mask = keys == k
        n = int(mask.sum())
        c = float(credit[mask].sum())
        out[k] = SliceAccuracy(n_pairs=n, correct=c, accuracy=c / n)
    return out


def pairwise_accuracy(model, test) -> EvalReport:
    """Fraction of pairs where the purchase outscores its alternative."""
    scorer: Scorer = as_scorer(model)
    if test.n_pairs == 0:
        raise ConfigError("cannot evaluate on an empty dataset")
    scores = np.asarray(scorer.score_dataset(test), dtype=float)
    pos = scores[test.pair_index[:, 0]]
    neg = scores[test.pair_index[:, 1]]
    credit = np.where(pos > neg, 1.0, np.where(pos == neg, 0.5, 0.0))

    homes = np.asarray([p.home_id for p in test.pairs])
    shifts = np.asarray([p.context.meal_shift.name for p in test.pairs])
    return EvalReport(
        model_id=scorer.model_id,
        pairwise_accuracy=float(credit.sum()) / test.n_pairs,
        n_pairs=test.n_pairs,
        per_home={int(h): s for h, s in _slice_table(homes, credit).items()},
        per_shift={str(k): s for k, s in _slice_table(shifts, credit).items()},
    )


def rank_collections(
    model, user: User, context: Context, eligible: list[Collection]
) -> list[Collection]:
    """Order candidates by score, best first; ties break on ascending id."""
    if not eligible:
        raise ConfigError("rank_collections needs at least one candidate")
    scorer = as_scorer(model)
    ids = [c.id for c in eligible]
    scores = scorer.score_rows(
        [user.id] * len(eligible), ids, [int(context.meal_shift)] * len(eligible)
    )
    order = sorted(range(len(eligible)), key=lambda i: (-scores[i], ids[i]))
    return [eligible[i] for i in order]


def save_report(report, path: str | Path) -> None:
    text = json.dumps(report.to_dict(), sort_keys=True, separators=(",", ":"))
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_eval_report(path: str | Path) -> EvalReport:
    return EvalReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def summary_lines(report: EvalReport) -> list[str]:
    lines = [
        f"model {report.model_id}: pairwise accuracy "
        f"{report.pairwise_accuracy:.4f} on {report.n_pairs} pairs"
    ]
    for h, s in sorted(report.per_home.items()):
        lines.append(f"  home {h}: {s.accuracy:.4f} ({s.n_pairs} pairs)")
    for k, s in sorted(report.per_shift.items()):
        lines.append(f"  {k.lower()}: {s.accuracy:.4f} ({s.n_pairs} pairs)")
    return lines
