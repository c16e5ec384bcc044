"""Random forest classifier on typed tabular data.

Trees split on `x_j < t` (continuous, midpoint thresholds) or `x_j == level`
(categorical, one literal per observed level), chosen by Gini decrease with
ties broken toward the lowest feature index then the lowest value. Growth
stops at purity, min_node_size, an optional depth cap, or when no split has
strictly positive decrease.

Determinism: each tree's resampling and feature subsampling derive from
SeedSequence((config.seed, tree_index)), so results are independent of the
number of worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._kernels import best_split_scan, bounds_kernel, grow_tree_kernel, route_kernel
from .tabular import Dataset, Schema

BOOTSTRAP = "bootstrap"
SUBSAMPLE = "subsample"


class InternalError(RuntimeError):
    """A structural invariant that should hold by construction was violated."""


@dataclass(frozen=True)
class ForestConfig:
    num_trees: int = 100
    mtry: int | None = None  # None: floor(sqrt(n_features)), at least 1
    min_node_size: int = 2
    resample: str = BOOTSTRAP
    subsample_fraction: float = 0.632
    max_depth: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.num_trees < 1:
            raise ValueError("num_trees must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be >= 1")
        if self.min_node_size < 1:
            raise ValueError("min_node_size must be >= 1")
        if self.resample not in (BOOTSTRAP, SUBSAMPLE):
            raise ValueError(f"unknown resample scheme {self.resample!r}")
        if not 0.0 < self.subsample_fraction <= 1.0:
            raise ValueError("subsample_fraction must be in (0, 1]")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1 or None")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    def resolve_mtry(self, n_features: int) -> int:
        if self.mtry is not None:
            return min(self.mtry, n_features)
        return max(1, int(math.isqrt(n_features)))


@dataclass(frozen=True)
class SplitLiteral:
    feature: int
    kind: str  # "less" or "equal"
    value: float  # threshold, or the level code for "equal"

    def holds(self, row) -> bool:
        if self.kind == "equal":
            return float(row[self.feature]) == self.value
        return float(row[self.feature]) < self.value


@dataclass(frozen=True)
class LeafNode:
    leaf: int


@dataclass(frozen=True)
class SplitNode:
    split: SplitLiteral
    left: "SplitNode | LeafNode"
    right: "SplitNode | LeafNode"


@dataclass
class Tree:
    # flat node arrays; node 0 is the root, children have larger ids
    feature: np.ndarray
    value: np.ndarray
    cat_split: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_id: np.ndarray
    # in-bag row ids partitioned into contiguous leaf segments
    inbag_rows: np.ndarray
    leaf_slice: np.ndarray  # (n_leaves, 2) start/end into inbag_rows
    leaf_counts: np.ndarray  # (n_leaves, n_classes) in-bag class counts

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return len(self.leaf_slice)

    @property
    def n_b(self) -> int:
        return len(self.inbag_rows)

    @property
    def inbag(self) -> np.ndarray:
        return self.inbag_rows

    @property
    def root(self) -> SplitNode | LeafNode:
        # children have larger ids than parents, so one reverse pass suffices
        nodes: list = [None] * self.n_nodes
        for nid in range(self.n_nodes - 1, -1, -1):
            if self.leaf_id[nid] >= 0:
                nodes[nid] = LeafNode(int(self.leaf_id[nid]))
            else:
                kind = "equal" if self.cat_split[nid] else "less"
                lit = SplitLiteral(int(self.feature[nid]), kind, float(self.value[nid]))
                nodes[nid] = SplitNode(lit, nodes[self.left[nid]], nodes[self.right[nid]])
        return nodes[0]

    def leaf_members(self, leaf: int) -> np.ndarray:
        s, e = self.leaf_slice[leaf]
        return self.inbag_rows[s:e]

    def soft_labels(self) -> np.ndarray:
        """Per-leaf fraction of in-bag rows with class 1 (binary forests)."""
        totals = self.leaf_counts.sum(axis=1)
        return self.leaf_counts[:, 1] / totals

    def route(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
        return route_kernel(X, self.feature, self.value, self.cat_split,
                            self.left, self.right, self.leaf_id)


@dataclass
class Forest:
    config: ForestConfig
    schema: Schema
    trees: list[Tree]
    n_classes: int
    n_train: int
    _oob_masks: list[np.ndarray] | None = field(default=None, repr=False, compare=False)

    @property
    def num_trees(self) -> int:
        return len(self.trees)

    def oob_masks(self) -> list[np.ndarray]:
        """Per tree: boolean mask of training rows the tree never saw."""
        if self._oob_masks is None:
            masks = []
            for t in self.trees:
                m = np.ones(self.n_train, dtype=bool)
                m[t.inbag_rows] = False
                masks.append(m)
            self._oob_masks = masks
        return self._oob_masks


def _as_matrix(data) -> np.ndarray:
    if isinstance(data, Dataset):
        return data.matrix()
    return np.ascontiguousarray(np.atleast_2d(data), dtype=np.float64)


def _check_labels(labels, n: int) -> tuple[np.ndarray, int]:
    y = np.asarray(labels, dtype=np.int64)
    if y.shape != (n,):
        raise ValueError(f"labels must have shape ({n},)")
    if len(y) == 0 or y.min() < 0:
        raise ValueError("labels must be non-negative class codes")
    n_classes = int(y.max()) + 1
    if n_classes < 2:
        raise ValueError("need at least two classes")
    return y, n_classes


def best_split(ds: Dataset, rows, labels, features=None, min_node_size: int = 1):
    """Exhaustive best split for one node; None when no valid split exists.

    Returns (SplitLiteral, decrease). Candidate thresholds are midpoints of
    consecutive distinct values among the node's rows; candidate equality
    literals are the levels observed in the node. Valid means both children
    have at least min_node_size rows and the Gini decrease is > 0.
    """
    X = ds.matrix()
    y, n_classes = _check_labels(labels, ds.n_rows)
    idx = np.asarray(rows, dtype=np.int64)
    if features is None:
        features = range(ds.n_cols)
    feats = np.array(sorted(set(int(f) for f in features)), dtype=np.int64)
    is_cat = ds.schema.categorical_mask().astype(np.uint8)
    n_levels = ds.schema.level_counts()
    f, val, dec, _ = best_split_scan(X, y, n_classes, idx, feats, is_cat,
                                     n_levels, min_node_size)
    if f < 0:
        return None
    kind = "equal" if is_cat[f] else "less"
    return SplitLiteral(int(f), kind, float(val)), float(dec)


def _draw_inbag(rng: np.random.Generator, y: np.ndarray, n: int,
                config: ForestConfig, stratify: bool) -> np.ndarray:
    if config.resample == BOOTSTRAP:
        if not stratify:
            return rng.integers(0, n, size=n)
        parts = []
        for c in np.unique(y):
            idx = np.flatnonzero(y == c)
            parts.append(idx[rng.integers(0, len(idx), size=len(idx))])
        return np.concatenate(parts)
    frac = config.subsample_fraction
    if not stratify:
        k = max(1, int(round(frac * n)))
        return rng.permutation(n)[:k]
    parts = []
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        k = max(1, int(round(frac * len(idx))))
        parts.append(rng.permutation(idx)[:k])
    return np.concatenate(parts)


def grow_tree(ds: Dataset, labels, config: ForestConfig,
              rng: np.random.Generator, stratify: bool = False) -> Tree:
    """Grow a single tree; resampling and feature draws come from rng."""
    X = ds.matrix()
    y, n_classes = _check_labels(labels, ds.n_rows)
    kernel_seed = np.uint64(rng.integers(0, 2**63))
    inbag = np.ascontiguousarray(_draw_inbag(rng, y, ds.n_rows, config, stratify),
                                 dtype=np.int64)
    return _grow_on(X, y, n_classes, inbag, ds.schema, config, kernel_seed)


def _grow_on(X, y, n_classes, inbag, schema: Schema, config: ForestConfig,
             kernel_seed: np.uint64) -> Tree:
    is_cat = schema.categorical_mask().astype(np.uint8)
    n_levels = schema.level_counts()
    max_depth = -1 if config.max_depth is None else config.max_depth
    out = grow_tree_kernel(X, y, n_classes, inbag, is_cat, n_levels,
                           config.resolve_mtry(X.shape[1]),
                           config.min_node_size, max_depth, kernel_seed)
    feature, value, cat_split, left, right, leaf_id, pos, leaf_slice = out
    lengths = leaf_slice[:, 1] - leaf_slice[:, 0]
    leaf_for_pos = np.repeat(np.arange(len(leaf_slice)), lengths)
    counts = np.bincount(leaf_for_pos * n_classes + y[pos],
                         minlength=len(leaf_slice) * n_classes)
    return Tree(feature.copy(), value.copy(), cat_split.copy(), left.copy(),
                right.copy(), leaf_id.copy(), pos, leaf_slice,
                counts.reshape(len(leaf_slice), n_classes))


def fit_forest(ds: Dataset, labels, config: ForestConfig,
               stratify: bool = False, threads: int = 1) -> Forest:
    """Fit config.num_trees trees. `stratify` draws each tree's resample
    per class (class proportions are then exact in every in-bag multiset)."""
    X = ds.matrix()
    y, n_classes = _check_labels(labels, ds.n_rows)

    def build(t: int) -> Tree:
        ss = np.random.SeedSequence((config.seed, t))
        rng = np.random.default_rng(ss)
        kernel_seed = np.uint64(rng.integers(0, 2**63))
        inbag = np.ascontiguousarray(
            _draw_inbag(rng, y, ds.n_rows, config, stratify), dtype=np.int64)
        return _grow_on(X, y, n_classes, inbag, ds.schema, config, kernel_seed)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trees = list(pool.map(build, range(config.num_trees)))
    else:
        trees = [build(t) for t in range(config.num_trees)]
    return Forest(config, ds.schema, trees, n_classes, ds.n_rows)


def predict_prob(forest: Forest, data) -> np.ndarray:
    """Mean over trees of the leaf's class-1 fraction (binary forests)."""
    if forest.n_classes != 2:
        raise ValueError("predict_prob is defined for binary forests")
    X = _as_matrix(data)
    acc = np.zeros(len(X))
    for t in forest.trees:
        acc += t.soft_labels()[t.route(X)]
    return acc / forest.num_trees


def oob_accuracy(forest: Forest, ds, labels) -> float:
    """Accuracy of out-of-bag predictions at threshold 0.5 (ties go to 1).

    Each row is predicted by averaging leaf soft labels over the trees that
    did not train on it; rows in every tree's in-bag multiset are skipped.
    """
    X = _as_matrix(ds)
    if len(X) != forest.n_train:
        raise ValueError("data does not match the training set size")
    y, _ = _check_labels(labels, len(X))
    sums = np.zeros(len(X))
    hits = np.zeros(len(X), dtype=np.int64)
    for t, oob in zip(forest.trees, forest.oob_masks()):
        leaves = t.route(X[oob])
        sums[oob] += t.soft_labels()[leaves]
        hits[oob] += 1
    seen = hits > 0
    if not seen.any():
        raise InternalError("no row is out-of-bag in any tree")
    pred = (sums[seen] / hits[seen]) >= 0.5
    return float(np.mean(pred == (y[seen] == 1)))


def leaf_of(tree: Tree, row) -> int:
    return int(tree.route(np.asarray(row, dtype=np.float64)[None, :])[0])


@dataclass
class TreeBounds:
    """Split-path bounds for every leaf of one tree.

    lo/hi: (n_leaves, n_cont) half-open [lo, hi) intervals over the tree's
    continuous features (listed in cont_features, ascending). allowed maps a
    categorical feature index to a (n_leaves, n_levels) bool mask.
    """
    cont_features: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    allowed: dict[int, np.ndarray]


def tree_bounds(tree: Tree, schema: Schema, global_ranges=None) -> TreeBounds:
    d = len(schema)
    is_cat = schema.categorical_mask()
    cont_features = np.flatnonzero(~is_cat)
    cont_index = np.full(d, -1, dtype=np.int64)
    cont_index[cont_features] = np.arange(len(cont_features))
    n_levels = schema.level_counts()
    lev_offset = np.full(d, -1, dtype=np.int64)
    off = 0
    for j in np.flatnonzero(is_cat):
        lev_offset[j] = off
        off += n_levels[j]
    lo, hi, al = bounds_kernel(tree.feature, tree.value, tree.cat_split,
                               tree.left, tree.right, tree.leaf_id,
                               cont_index, len(cont_features), lev_offset,
                               n_levels, off, tree.n_leaves)
    allowed = {}
    for j in np.flatnonzero(is_cat):
        mask = al[:, lev_offset[j]:lev_offset[j] + n_levels[j]].astype(bool)
        if not mask.any(axis=1).all():
            raise InternalError(f"leaf with empty level set on feature {j}")
        allowed[int(j)] = mask
    if global_ranges is not None:
        for ci, j in enumerate(cont_features):
            g_lo, g_hi = global_ranges[j]
            np.maximum(lo[:, ci], g_lo, out=lo[:, ci])
            np.minimum(hi[:, ci], g_hi, out=hi[:, ci])
    if (lo >= hi).any():
        raise InternalError("leaf with empty interval")
    return TreeBounds(cont_features, lo, hi, allowed)


def leaf_bounds(tree: Tree, leaf: int, schema: Schema, global_ranges=None) -> list:
    """Per-feature bounds of one leaf: (lo, hi) tuples for continuous
    features, frozensets of allowed level codes for categorical ones."""
    tb = tree_bounds(tree, schema, global_ranges)
    out: list = []
    for j, col in enumerate(schema):
        if col.is_categorical:
            out.append(frozenset(np.flatnonzero(tb.allowed[j][leaf]).tolist()))
        else:
            ci = int(np.flatnonzero(tb.cont_features == j)[0])
            out.append((float(tb.lo[leaf, ci]), float(tb.hi[leaf, ci])))
    return out
