"""Histogram tree growing for gradient boosting.

One tree is grown leaf-wise (best gain first) from per-node histograms of
gradient/hessian sums over quantile-binned feature codes. Monotone
constraints are enforced during growth: a split on a flagged feature is
rejected unless the (clipped) child values are ordered in the flagged
direction, and child output bounds are tightened to the midpoint of those
values, which makes the final prediction function pointwise monotone in
every flagged feature for finite inputs. NaN is a first-class "missing"
code routed down a learned default branch.

Determinism contract: candidates are scanned in (feature, bin,
missing-direction) order with missing-left first and strict improvement
required, so ties resolve to the lowest feature, then lowest bin, then
missing-left; frontier ties resolve to the oldest node.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class QuantileBinner:
    """Per-feature quantile binning with a reserved missing code.

    Each feature gets at most ``n_bins`` real-value bins separated by stored
    thresholds; code k means value <= thresholds[k] (and beyond the last
    threshold, the last code). When a feature has few distinct values the
    thresholds are midpoints between consecutive uniques, so every possible
    split of the observed values is representable; otherwise thresholds are
    value quantiles. NaN maps to the dedicated code ``n_bins``.
    """

    def __init__(self, n_bins: int = 64):
        if n_bins < 2:
            raise ValueError("n_bins must be >= 2")
        self.n_bins = n_bins
        self.thresholds_: list[np.ndarray] | None = None

    @property
    def missing_code(self) -> int:
        return self.n_bins

    def fit(self, X: np.ndarray) -> "QuantileBinner":
        X = np.asarray(X, dtype=np.float64)
        thresholds = []
        for f in range(X.shape[1]):
            col = X[:, f]
            finite = col[~np.isnan(col)]
            uniques = np.unique(finite)
            if len(uniques) <= 1:
                thresholds.append(np.empty(0))
            elif len(uniques) <= self.n_bins:
                thresholds.append((uniques[:-1] + uniques[1:]) / 2.0)
            else:
                qs = np.quantile(finite, np.arange(1, self.n_bins) / self.n_bins)
                thresholds.append(np.unique(qs))
        self.thresholds_ = thresholds
        return self

    def transform(self, X: np.ndarray) -> np.ndarray:
        assert self.thresholds_ is not None, "fit() not called"
        X = np.asarray(X, dtype=np.float64)
        codes = np.empty(X.shape, dtype=np.int64)
        for f, thr in enumerate(self.thresholds_):
            col = X[:, f]
            miss = np.isnan(col)
            codes[:, f] = np.searchsorted(thr, np.where(miss, 0.0, col), side="left")
            codes[miss, f] = self.missing_code
        return codes

    def n_real_bins(self, f: int) -> int:
        assert self.thresholds_ is not None
        return len(self.thresholds_[f]) + 1


@dataclass
class Tree:
    """Flattened binary tree; index 0 is the root.

    ``feature[i] == -1`` marks a leaf whose output is ``value[i]``. Internal
    nodes send rows left when x[feature] <= threshold, NaN down the
    ``missing_left`` branch.
    """

    feature: np.ndarray  # int32, -1 for leaves
    threshold: np.ndarray  # float64
    missing_left: np.ndarray  # bool
    left: np.ndarray  # int32 child index
    right: np.ndarray
    value: np.ndarray  # float64 leaf outputs (0.0 on internal nodes)
    n_samples: np.ndarray  # int64
    gain: np.ndarray  # float64 split gain (0.0 on leaves)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict_rows(self, X: np.ndarray) -> np.ndarray:
        """Unscaled tree output per row, vectorized level-by-level."""
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(len(X), dtype=np.int64)
        while True:
            feat = self.feature[node]
            active = feat >= 0
            if not active.any():
                return self.value[node]
            rows = np.flatnonzero(active)
            f = feat[rows]
            x = X[rows, f]
            thr = self.threshold[node[rows]]
            miss = np.isnan(x)
            go_left = np.where(miss, self.missing_left[node[rows]], x <= thr)
            node[rows] = np.where(
                go_left, self.left[node[rows]], self.right[node[rows]]
            )

    def predict_one(self, x: np.ndarray) -> float:
        """Reference scalar traversal (kept simple for cross-checks)."""
        i = 0
        while self.feature[i] >= 0:
            v = x[self.feature[i]]
            if np.isnan(v):
                i = self.left[i] if self.missing_left[i] else self.right[i]
            elif v <= self.threshold[i]:
                i = self.left[i]
            else:
                i = self.right[i]
        return float(self.value[i])


@dataclass
class _Node:
    """A growable leaf: its rows, histogram, bounds, and best found split."""

    node_id: int
    rows: np.ndarray
    hist_g: np.ndarray  # (F, n_bins + 1)
    hist_h: np.ndarray
    hist_n: np.ndarray
    lower: float
    upper: float
    # Best-split fields; gain = -inf when no admissible split exists.
    best_gain: float = -np.inf
    best_feature: int = -1
    best_bin: int = -1
    best_miss_left: bool = True
    child_value_left: float = 0.0
    child_value_right: float = 0.0
    _totals: tuple[float, float, int] = field(default=(0.0, 0.0, 0))

    @property
    def G(self) -> float:
        return self._totals[0]

    @property
    def H(self) -> float:
        return self._totals[1]

    @property
    def N(self) -> int:
        return self._totals[2]


class TreeGrower:
    def __init__(
        self,
        binner: QuantileBinner,
        monotone: np.ndarray,
        *,
        max_leaves: int,
        min_samples_leaf: int,
        l2_regularization: float,
    ):
        self.binner = binner
        self.monotone = np.asarray(monotone, dtype=np.int64)
        self.max_leaves = max_leaves
        self.min_samples_leaf = min_samples_leaf
        self.lam = l2_regularization
        n_features = len(self.monotone)
        self._offsets = np.arange(n_features, dtype=np.int64) * (binner.n_bins + 1)
        self._n_real = np.asarray(
            [binner.n_real_bins(f) for f in range(n_features)], dtype=np.int64
        )
        # valid_pos[f, b]: splitting after bin b keeps both sides non-empty
        # in code space for feature f.
        bmax = binner.n_bins
        self._valid_pos = np.arange(bmax)[None, :] < (self._n_real - 1)[:, None]

    def _histograms(
        self, codes: np.ndarray, rows: np.ndarray, g: np.ndarray, h: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        n_features = len(self.monotone)
        width = self.binner.n_bins + 1
        flat = (codes[rows] + self._offsets[None, :]).ravel()
        size = n_features * width
        hg = np.bincount(flat, weights=np.repeat(g[rows], n_features), minlength=size)
        hh = np.bincount(flat, weights=np.repeat(h[rows], n_features), minlength=size)
        hn = np.bincount(flat, minlength=size)
        shape = (n_features, width)
        return hg.reshape(shape), hh.reshape(shape), hn.reshape(shape)

    def _leaf_value(self, G: float, H: float, lower: float, upper: float) -> float:
        return float(np.clip(-G / (H + self.lam), lower, upper))

    def _find_best_split(self, node: _Node) -> None:
        """Fill node.best_* fields; vectorized over (feature, bin, variant)."""
        B = self.binner.n_bins
        lam = self.lam
        hg, hh, hn = node.hist_g, node.hist_h, node.hist_n
        G, H, N = node.G, node.H, node.N

        cg = np.cumsum(hg[:, :B], axis=1)
        ch = np.cumsum(hh[:, :B], axis=1)
        cn = np.cumsum(hn[:, :B], axis=1)
        g_miss = hg[:, B][:, None]
        h_miss = hh[:, B][:, None]
        n_miss = hn[:, B][:, None]

        # variant axis: 0 = missing goes left, 1 = missing goes right
        GL = np.stack([cg + g_miss, cg], axis=2)
        HL = np.stack([ch + h_miss, ch], axis=2)
        NL = np.stack([cn + n_miss, cn], axis=2)
        GR = G - GL
        HR = H - HL
        NR = N - NL

        valid = (
            self._valid_pos[:, :, None]
            & (NL >= self.min_samples_leaf)
            & (NR >= self.min_samples_leaf)
        )
        with np.errstate(divide="ignore", invalid="ignore"):
            vl = np.clip(-GL / (HL + lam), node.lower, node.upper)
            vr = np.clip(-GR / (HR + lam), node.lower, node.upper)
            gain = 0.5 * (
                GL * GL / (HL + lam) + GR * GR / (HR + lam) - G * G / (H + lam)
            )
        mono = self.monotone[:, None, None]
        mono_ok = np.where(
            mono == 0, True, np.where(mono > 0, vl <= vr, vl >= vr)
        )
        gain = np.where(valid & mono_ok & (gain > 0.0) & np.isfinite(gain), gain, -np.inf)

        flat_idx = int(np.argmax(gain))
        best = gain.ravel()[flat_idx]
        if not np.isfinite(best):
            node.best_gain = -np.inf
            return
        f, b, variant = np.unravel_index(flat_idx, gain.shape)
        node.best_gain = float(best)
        node.best_feature = int(f)
        node.best_bin = int(b)
        node.best_miss_left = variant == 0
        node.child_value_left = float(vl[f, b, variant])
        node.child_value_right = float(vr[f, b, variant])

    def grow(
        self, codes: np.ndarray, g: np.ndarray, h: np.ndarray
    ) -> tuple[Tree, np.ndarray]:
        """Grow one tree; returns (tree, per-row unscaled leaf outputs)."""
        n = len(g)
        mcode = self.binner.missing_code

        feature: list[int] = []
        threshold: list[float] = []
        missing_left: list[bool] = []
        left: list[int] = []
        right: list[int] = []
        value: list[float] = []
        n_samples: list[int] = []
        gains: list[float] = []

        def new_node() -> int:
            feature.append(-1)
            threshold.append(0.0)
            missing_left.append(True)
            left.append(-1)
            right.append(-1)
            value.append(0.0)
            n_samples.append(0)
            gains.append(0.0)
            return len(feature) - 1

        def make_candidate(node_id, rows, hg, hh, hn, lower, upper) -> _Node:
            node = _Node(
                node_id=node_id,
                rows=rows,
                hist_g=hg,
                hist_h=hh,
                hist_n=hn,
                lower=lower,
                upper=upper,
            )
            # Every row appears once in each feature's histogram, so feature
            # 0's bin sums already total the node.
            node._totals = (float(hg[0].sum()), float(hh[0].sum()), int(rows.size))
            n_samples[node_id] = int(rows.size)
            self._find_best_split(node)
            return node

        rows_all = np.arange(n, dtype=np.int64)
        root_id = new_node()
        hg, hh, hn = self._histograms(codes, rows_all, g, h)
        frontier = [make_candidate(root_id, rows_all, hg, hh, hn, -np.inf, np.inf)]
        n_leaves = 1

        while n_leaves < self.max_leaves:
            best: _Node | None = None
            for cand in frontier:
                if cand.best_gain > -np.inf and (
                    best is None or cand.best_gain > best.best_gain
                ):
                    best = cand
            if best is None:
                break
            frontier.remove(best)

            f, b = best.best_feature, best.best_bin
            col = codes[best.rows, f]
            go_left = np.where(col == mcode, best.best_miss_left, col <= b)
            rows_l = best.rows[go_left]
            rows_r = best.rows[~go_left]

            nid = best.node_id
            feature[nid] = f
            threshold[nid] = float(self.binner.thresholds_[f][b])
            missing_left[nid] = best.best_miss_left
            gains[nid] = best.best_gain

            if self.monotone[f] != 0:
                mid = (best.child_value_left + best.child_value_right) / 2.0
                if self.monotone[f] > 0:
                    bounds_l = (best.lower, mid)
                    bounds_r = (mid, best.upper)
                else:
                    bounds_l = (mid, best.upper)
                    bounds_r = (best.lower, mid)
            else:
                bounds_l = (best.lower, best.upper)
                bounds_r = (best.lower, best.upper)

            # Histogram subtraction: build the smaller child directly, derive
            # the larger one from the parent.
            if rows_l.size <= rows_r.size:
                hg_l, hh_l, hn_l = self._histograms(codes, rows_l, g, h)
                hg_r = best.hist_g - hg_l
                hh_r = best.hist_h - hh_l
                hn_r = best.hist_n - hn_l
            else:
                hg_r, hh_r, hn_r = self._histograms(codes, rows_r, g, h)
                hg_l = best.hist_g - hg_r
                hh_l = best.hist_h - hh_r
                hn_l = best.hist_n - hn_r

            lid = new_node()
            rid = new_node()
            left[nid] = lid
            right[nid] = rid
            frontier.append(
                make_candidate(lid, rows_l, hg_l, hh_l, hn_l, *bounds_l)
            )
            frontier.append(
                make_candidate(rid, rows_r, hg_r, hh_r, hn_r, *bounds_r)
            )
            n_leaves += 1

        out = np.zeros(n)
        for cand in frontier:
            v = self._leaf_value(cand.G, cand.H, cand.lower, cand.upper)
            value[cand.node_id] = v
            out[cand.rows] = v

        tree = Tree(
            feature=np.asarray(feature, dtype=np.int32),
            threshold=np.asarray(threshold),
            missing_left=np.asarray(missing_left, dtype=bool),
            left=np.asarray(left, dtype=np.int32),
            right=np.asarray(right, dtype=np.int32),
            value=np.asarray(value),
            n_samples=np.asarray(n_samples, dtype=np.int64),
            gain=np.asarray(gains),
        )
        return tree, out
