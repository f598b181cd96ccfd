"""
Histogram gradient-boosted regression trees with leaf-wise growth.

One independent ensemble per target column. Each tree fits the squared-loss
gradients of the current predictions; split gain and leaf values use the
L2-regularized second-order formulas (hessian = 1 per row).
"""
import heapq
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from predictors.configs import GbdtConfig
from shared.errors import InsufficientData, WidthMismatch
from shared.log import get_logger

logger = get_logger("GBDT")

MIN_GAIN = 1e-12


@dataclass
class FeatureBins:
    """Per-feature ascending split thresholds; x <= edges[f][b] falls in bins 0..b"""

    edges: List[np.ndarray]

    @classmethod
    def fit(cls, x: np.ndarray, max_bins: int) -> "FeatureBins":
        edges = []
        for col in x.T:
            values = np.unique(col)
            if values.size <= max_bins:
                edges.append(values[:-1])
            else:
                quantiles = np.quantile(col, np.linspace(0.0, 1.0, max_bins + 1)[1:-1], method="lower")
                edges.append(np.unique(quantiles))
        return cls(edges)

    @property
    def n_bins(self) -> np.ndarray:
        return np.array([e.size + 1 for e in self.edges], dtype=np.int64)

    def transform(self, x: np.ndarray) -> np.ndarray:
        return np.stack(
            [np.searchsorted(e, x[:, f], side="left") for f, e in enumerate(self.edges)], axis=1
        ).astype(np.int64) if x.shape[1] else np.zeros((x.shape[0], 0), dtype=np.int64)


@dataclass
class Tree:
    feature: np.ndarray     # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray       # unshrunk leaf value

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def predict(self, x: np.ndarray) -> np.ndarray:
        node = np.zeros(x.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.nonzero(active)[0]
            current = node[rows]
            go_left = x[rows, self.feature[current]] <= self.threshold[current]
            node[rows] = np.where(go_left, self.left[current], self.right[current])
            active = self.feature[node] >= 0
        return self.value[node]

    def leaf_index(self, x: np.ndarray) -> np.ndarray:
        node = np.zeros(x.shape[0], dtype=np.int64)
        for _ in range(self.feature.size):
            internal = self.feature[node] >= 0
            if not internal.any():
                break
            rows = np.nonzero(internal)[0]
            current = node[rows]
            go_left = x[rows, self.feature[current]] <= self.threshold[current]
            node[rows] = np.where(go_left, self.left[current], self.right[current])
        return node


@dataclass(order=True)
class _Candidate:
    neg_gain: float
    order: int
    node: int = field(compare=False)
    rows: np.ndarray = field(compare=False)
    depth: int = field(compare=False)
    feature: int = field(compare=False)
    bin: int = field(compare=False)


class _TreeBuilder:
    def __init__(self, binned: np.ndarray, bins: FeatureBins, usable: np.ndarray, config: GbdtConfig):
        self.binned = binned
        self.bins = bins
        self.usable = usable
        self.config = config
        n_bins = bins.n_bins[usable]
        self.width = int(n_bins.max()) if n_bins.size else 1
        self.offsets = np.arange(usable.size, dtype=np.int64) * self.width
        self.binned_usable = binned[:, usable] + self.offsets if usable.size else binned[:, :0]

    def best_split(self, rows: np.ndarray, grad: np.ndarray) -> Tuple[float, int, int]:
        """(gain, feature, bin) of the best valid split, gain -inf when none exists"""
        cfg = self.config
        n = rows.size
        if self.usable.size == 0 or n < 2 * cfg.min_samples_leaf:
            return -np.inf, -1, -1
        flat = self.binned_usable[rows].ravel()
        size = self.usable.size * self.width
        g_hist = np.bincount(flat, weights=np.repeat(grad[rows], self.usable.size), minlength=size)
        n_hist = np.bincount(flat, minlength=size)
        g_left = np.cumsum(g_hist.reshape(self.usable.size, self.width), axis=1)
        n_left = np.cumsum(n_hist.reshape(self.usable.size, self.width), axis=1).astype(np.float64)
        g_total = g_left[:, -1:]
        g_right = g_total - g_left
        n_right = n - n_left
        lam = cfg.l2
        gain = g_left ** 2 / (n_left + lam) + g_right ** 2 / (n_right + lam) - g_total ** 2 / (n + lam)
        valid = (n_left >= cfg.min_samples_leaf) & (n_right >= cfg.min_samples_leaf)
        valid[:, -1] = False
        gain = np.where(valid, gain, -np.inf)
        flat_best = int(np.argmax(gain))  # first maximum in (feature, bin) order
        f, b = divmod(flat_best, self.width)
        return float(gain[f, b]), int(self.usable[f]), int(b)

    def build(self, grad: np.ndarray) -> Tree:
        cfg = self.config
        feature: List[int] = [-1]
        threshold: List[float] = [0.0]
        left: List[int] = [-1]
        right: List[int] = [-1]
        value: List[float] = [0.0]
        lam = cfg.l2

        def leaf_value(rows: np.ndarray) -> float:
            return float(-grad[rows].sum() / (rows.size + lam))

        counter = 0
        heap: List[_Candidate] = []

        def consider(node: int, rows: np.ndarray, depth: int):
            nonlocal counter
            value[node] = leaf_value(rows)
            if depth >= cfg.max_depth:
                return
            gain, f, b = self.best_split(rows, grad)
            if gain > MIN_GAIN:
                heapq.heappush(heap, _Candidate(-gain, counter, node, rows, depth, f, b))
                counter += 1

        consider(0, np.arange(grad.size), 0)
        n_leaves = 1
        while heap and n_leaves < cfg.max_leaf_nodes:
            cand = heapq.heappop(heap)
            goes_left = self.binned[cand.rows, cand.feature] <= cand.bin
            lrows, rrows = cand.rows[goes_left], cand.rows[~goes_left]
            li, ri = len(feature), len(feature) + 1
            for _ in range(2):
                feature.append(-1)
                threshold.append(0.0)
                left.append(-1)
                right.append(-1)
                value.append(0.0)
            feature[cand.node] = cand.feature
            threshold[cand.node] = float(self.bins.edges[cand.feature][cand.bin])
            left[cand.node], right[cand.node] = li, ri
            n_leaves += 1
            consider(li, lrows, cand.depth + 1)
            consider(ri, rrows, cand.depth + 1)

        return Tree(
            np.array(feature, dtype=np.int64), np.array(threshold, dtype=np.float64),
            np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
            np.array(value, dtype=np.float64),
        )


@dataclass
class GbdtModel:
    """Boosted ensembles, one per target column"""

    config: GbdtConfig
    n_features: int
    base_score: np.ndarray
    trees: List[List[Tree]]

    @property
    def n_targets(self) -> int:
        return len(self.trees)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return gbdt_predict(self, x)

    def to_arrays(self) -> Dict[str, np.ndarray]:
        """Flatten every tree into concatenated node arrays with per-tree offsets"""
        arrays: Dict[str, np.ndarray] = {"base_score": self.base_score}
        for t, ensemble in enumerate(self.trees):
            sizes = [tree.feature.size for tree in ensemble]
            arrays[f"t{t}.offsets"] = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
            for attr in ("feature", "threshold", "left", "right", "value"):
                parts = [getattr(tree, attr) for tree in ensemble]
                dtype = np.int64 if attr in ("feature", "left", "right") else np.float64
                arrays[f"t{t}.{attr}"] = np.concatenate(parts).astype(dtype) if parts else np.zeros(0, dtype)
        return arrays

    @classmethod
    def from_arrays(cls, arrays: Dict[str, np.ndarray], config: GbdtConfig, n_features: int) -> "GbdtModel":
        base = np.asarray(arrays["base_score"], dtype=np.float64)
        trees = []
        for t in range(base.size):
            offsets = arrays[f"t{t}.offsets"]
            ensemble = []
            for i in range(offsets.size - 1):
                lo, hi = offsets[i], offsets[i + 1]
                ensemble.append(Tree(*(np.asarray(arrays[f"t{t}.{a}"][lo:hi])
                                       for a in ("feature", "threshold", "left", "right", "value"))))
            trees.append(ensemble)
        return cls(config, n_features, base, trees)


def gbdt_fit(x: np.ndarray, y: np.ndarray, config: Optional[GbdtConfig] = None,
             progress=None) -> GbdtModel:
    """
    Fit one boosted ensemble per column of ``y``.

    Rows whose target is NaN are left out of that column's ensemble.
    Raises InsufficientData with fewer than 2 * min_samples_leaf rows.
    """
    config = config or GbdtConfig()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    required = 2 * config.min_samples_leaf
    if x.shape[0] < required:
        raise InsufficientData(x.shape[0], required)
    if y.shape[0] != x.shape[0]:
        raise WidthMismatch(x.shape[0], y.shape[0], "target rows")

    bins = FeatureBins.fit(x, config.max_bins)
    binned = bins.transform(x)
    usable = np.nonzero(bins.n_bins > 1)[0]
    logger.debug(f"{usable.size}/{x.shape[1]} features have more than one bin")

    base_scores = []
    ensembles: List[List[Tree]] = []
    for t in range(y.shape[1]):
        finite = np.isfinite(y[:, t])
        if not finite.any():
            base_scores.append(0.0)
            ensembles.append([])
            continue
        rows = np.nonzero(finite)[0]
        target = y[rows, t]
        builder = _TreeBuilder(binned[rows], bins, usable, config)
        base = float(target.mean())
        pred = np.full(rows.size, base)
        trees = []
        for _ in range(config.iterations):
            tree = builder.build(pred - target)
            pred = pred + config.learning_rate * tree.predict(x[rows])
            trees.append(tree)
            if progress is not None:
                progress.update(1)
        base_scores.append(base)
        ensembles.append(trees)

    return GbdtModel(config, x.shape[1], np.array(base_scores), ensembles)


def gbdt_predict(model: GbdtModel, x: np.ndarray) -> np.ndarray:
    """base_score + learning_rate * sum of tree outputs, per target"""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise WidthMismatch(model.n_features, x.shape[-1] if x.ndim else 0, "GBDT input")
    out = np.tile(model.base_score, (x.shape[0], 1))
    for t, ensemble in enumerate(model.trees):
        for tree in ensemble:
            out[:, t] += model.config.learning_rate * tree.predict(x)
    return out
