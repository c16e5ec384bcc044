"""Density estimation on a converged adversarial forest.

Every (tree, leaf) pair becomes a mixture component: weight = the leaf's
coverage (share of real in-bag rows, renormalized per tree), density = a
product of per-feature univariate distributions fitted to the leaf's real
in-bag values - truncated normals for continuous features (truncation at
the leaf's split-path bounds clipped to the training data's bounding box),
Dirichlet-smoothed categoricals over the leaf's allowed levels otherwise.
The model density at x averages, over trees, coverage times product of
per-feature densities at the leaf containing x.

Stored bounds are evaluated as closed intervals [lo, hi] so the observed
extrema themselves stay in-support; routing remains half-open.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, ndtr

from .arf import ArfModel, leaf_coverage
from .forest import InternalError, Tree, tree_bounds
from .tabular import Dataset, Schema

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class FordeFitConfig:
    alpha: float = 1.0  # Dirichlet prior count per allowed level
    sigma_floor_rel: float = 1e-6  # times the global per-feature sd
    sigma_floor_abs: float = 1e-6  # fallback when that sd is zero

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.sigma_floor_rel <= 0 or self.sigma_floor_abs <= 0:
            raise ValueError("sigma floors must be positive")


@dataclass(frozen=True)
class TruncNormalParams:
    mu: float
    sigma: float
    lo: float  # may be -inf
    hi: float  # may be +inf

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.lo < self.hi:
            raise ValueError("need lo < hi")


@dataclass(frozen=True)
class CategoricalParams:
    levels: np.ndarray  # allowed level codes, ascending
    probs: np.ndarray  # same length, sums to 1

    def __post_init__(self):
        if len(self.levels) == 0:
            raise ValueError("empty level set")
        if len(self.levels) != len(self.probs):
            raise ValueError("levels/probs length mismatch")
        if (self.probs < 0).any() or abs(self.probs.sum() - 1.0) > 1e-9:
            raise ValueError("probs must be a distribution")


@dataclass(frozen=True)
class LeafProfile:
    tree: int
    leaf: int
    coverage: float
    original_count: int
    bounds: list  # per feature: (lo, hi) or frozenset of level codes
    dist: list  # per feature: TruncNormalParams or CategoricalParams
    empty: bool


def estimate_continuous(values, lo: float, hi: float,
                        sigma_floor: float) -> TruncNormalParams:
    """Truncated-normal parameters: sample mean, sample sd (n-1 denominator)
    floored at sigma_floor, truncation at (lo, hi)."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("no values to estimate from")
    if (v < lo).any() or (v > hi).any():
        raise ValueError("values outside the stated bounds")
    mu = float(v.mean())
    sigma = float(v.std(ddof=1)) if v.size > 1 else 0.0
    if not sigma > sigma_floor:
        sigma = sigma_floor
    return TruncNormalParams(mu, sigma, float(lo), float(hi))


def estimate_categorical(values, allowed, prior_alpha: float) -> CategoricalParams:
    """Add-alpha level probabilities over `allowed` only:
    (count_k + alpha) / (N + alpha * |allowed|)."""
    levels = np.array(sorted(int(a) for a in set(allowed)), dtype=np.int64)
    if len(levels) == 0:
        raise ValueError("empty allowed set")
    v = np.asarray(values, dtype=np.int64)
    if len(v) and not np.isin(v, levels).all():
        raise ValueError("observed level outside the allowed set")
    counts = np.array([(v == k).sum() for k in levels], dtype=np.float64)
    probs = (counts + prior_alpha) / (len(v) + prior_alpha * len(levels))
    return CategoricalParams(levels, probs)


@dataclass
class TreeParams:
    """Columnar per-leaf parameters of one tree (leaf id is the row index).

    Continuous features are the columns of mu/sigma/lo/hi in cont_features
    order; cat_probs maps a categorical feature index to an (n_leaves,
    n_levels) matrix with zeros outside the leaf's allowed set. Leaves with
    no original in-bag rows are flagged in `empty`: coverage 0, placeholder
    parameters, never sampled.
    """
    coverage: np.ndarray
    original_count: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    cat_probs: dict[int, np.ndarray]
    empty: np.ndarray


@dataclass
class FordeModel:
    schema: Schema
    trees: list[Tree]
    params: list[TreeParams]
    cont_features: np.ndarray
    fit_config: FordeFitConfig
    n_train: int
    meta: dict = field(default_factory=dict)

    @property
    def num_trees(self) -> int:
        return len(self.trees)

    def profile(self, tree: int, leaf: int) -> LeafProfile:
        tp = self.params[tree]
        cont_of = {int(j): ci for ci, j in enumerate(self.cont_features)}
        bounds: list = []
        dist: list = []
        for j, col in enumerate(self.schema):
            if col.is_categorical:
                probs = tp.cat_probs[j][leaf]
                lv = np.flatnonzero(probs > 0)
                bounds.append(frozenset(lv.tolist()))
                dist.append(CategoricalParams(lv, probs[lv] / probs[lv].sum()))
            else:
                ci = cont_of[j]
                bounds.append((float(tp.lo[leaf, ci]), float(tp.hi[leaf, ci])))
                dist.append(TruncNormalParams(float(tp.mu[leaf, ci]),
                                              float(tp.sigma[leaf, ci]),
                                              float(tp.lo[leaf, ci]),
                                              float(tp.hi[leaf, ci])))
        return LeafProfile(tree, leaf, float(tp.coverage[leaf]),
                           int(tp.original_count[leaf]), bounds, dist,
                           bool(tp.empty[leaf]))

    def leaf_profiles(self):
        for b, tp in enumerate(self.params):
            for leaf in range(len(tp.coverage)):
                yield self.profile(b, leaf)


def _position_leaves(tree: Tree) -> np.ndarray:
    lengths = tree.leaf_slice[:, 1] - tree.leaf_slice[:, 0]
    return np.repeat(np.arange(tree.n_leaves), lengths)


def forde_fit(arf: ArfModel, ds: Dataset, cfg: FordeFitConfig = FordeFitConfig()) -> FordeModel:
    """Extract coverage, bounds and per-feature leaf parameters from a
    fitted adversarial forest. `ds` must be the original training data."""
    if arf.forest.schema != ds.schema:
        raise ValueError("dataset schema does not match the forest's")
    if arf.n_original != ds.n_rows:
        raise ValueError("dataset size does not match the forest's training data")
    X = ds.matrix()
    n = ds.n_rows
    schema = ds.schema
    is_cat = schema.categorical_mask()
    cont_features = np.flatnonzero(~is_cat)
    global_ranges = [None] * len(schema)
    floors = {}
    for j in cont_features:
        col = X[:, j]
        global_ranges[j] = (float(col.min()), float(col.max()))
        sd = float(col.std())
        floors[j] = cfg.sigma_floor_rel * sd if sd > 0 else cfg.sigma_floor_abs

    labels = np.concatenate([np.ones(n, np.int64),
                             np.zeros(arf.forest.n_train - n, np.int64)])
    coverage = leaf_coverage(arf.forest, labels)

    params = []
    for b, tree in enumerate(arf.forest.trees):
        L = tree.n_leaves
        pos_leaf = _position_leaves(tree)
        orig = tree.inbag_rows < n
        rows = tree.inbag_rows[orig]
        leaves = pos_leaf[orig]
        counts = np.bincount(leaves, minlength=L)
        q = coverage[b]
        total = q.sum()
        if total <= 0:
            raise InternalError("tree carries no coverage")
        q = q / total
        empty = counts == 0
        tb = tree_bounds(tree, schema, global_ranges)
        nc = len(cont_features)
        mu = np.zeros((L, nc))
        sigma = np.ones((L, nc))
        lo = tb.lo.copy()
        hi = tb.hi.copy()
        safe = np.maximum(counts, 1).astype(np.float64)
        for ci, j in enumerate(cont_features):
            vals = X[rows, j]
            means = np.bincount(leaves, weights=vals, minlength=L) / safe
            dev = vals - means[leaves]
            ss = np.bincount(leaves, weights=dev * dev, minlength=L)
            with np.errstate(invalid="ignore", divide="ignore"):
                sd = np.sqrt(ss / np.maximum(counts - 1, 1))
            sd[counts < 2] = 0.0
            mu[:, ci] = means
            sigma[:, ci] = np.maximum(sd, floors[j])
            # placeholders for empty leaves: standard normal over the line
            mu[empty, ci] = 0.0
            sigma[empty, ci] = 1.0
            lo[empty, ci] = -np.inf
            hi[empty, ci] = np.inf
        cat_probs = {}
        for j in np.flatnonzero(is_cat):
            K = schema[j].n_levels
            codes = X[rows, j].astype(np.int64)
            cnt = np.bincount(leaves * K + codes, minlength=L * K).reshape(L, K)
            allowed = tb.allowed[int(j)]
            if cnt[~allowed].sum() != 0:
                raise InternalError("observed level outside split-path bounds")
            n_allowed = allowed.sum(axis=1, keepdims=True)
            denom = counts[:, None] + cfg.alpha * n_allowed
            cat_probs[int(j)] = (cnt + cfg.alpha * allowed) / denom
        params.append(TreeParams(q, counts, mu, sigma, lo, hi, cat_probs, empty))
    return FordeModel(schema, arf.forest.trees, params, cont_features, cfg, n)


def _check_schema(model: FordeModel, ds: Dataset) -> None:
    if ds.schema != model.schema:
        raise ValueError("dataset schema does not match the model's")


def log_density(model: FordeModel, data, chunk: int = 65536) -> np.ndarray:
    """Log of the mixture density for each row; -inf where every containing
    leaf contributes zero (zero coverage, or the row is out of support)."""
    if isinstance(data, Dataset):
        _check_schema(model, data)
        X = data.matrix()
    else:
        X = np.ascontiguousarray(np.atleast_2d(data), dtype=np.float64)
    n = len(X)
    B = model.num_trees
    out = np.empty(n, dtype=np.float64)
    cat_features = [int(j) for j in np.flatnonzero(model.schema.categorical_mask())]
    for start in range(0, n, chunk):
        Xc = X[start:start + chunk]
        nc = len(Xc)
        terms = np.empty((B, nc))
        for b, (tree, tp) in enumerate(zip(model.trees, model.params)):
            leaves = tree.route(Xc)
            with np.errstate(divide="ignore"):
                lt = np.log(tp.coverage[leaves])
            for ci, j in enumerate(model.cont_features):
                x = Xc[:, j]
                mu = tp.mu[leaves, ci]
                sg = tp.sigma[leaves, ci]
                lo = tp.lo[leaves, ci]
                hi = tp.hi[leaves, ci]
                z = (x - mu) / sg
                norm = ndtr((hi - mu) / sg) - ndtr((lo - mu) / sg)
                with np.errstate(divide="ignore", invalid="ignore"):
                    logpdf = -0.5 * z * z - np.log(sg) - LOG_SQRT_2PI - np.log(norm)
                logpdf[(x < lo) | (x > hi) | (norm <= 0)] = -np.inf
                lt = lt + logpdf
            for j in cat_features:
                codes = np.rint(Xc[:, j]).astype(np.int64)
                with np.errstate(divide="ignore"):
                    lt = lt + np.log(tp.cat_probs[j][leaves, codes])
            terms[b] = lt
        out[start:start + chunk] = logsumexp(terms, axis=0) - math.log(B)
    return out


@dataclass
class NllResult:
    mean: float
    se: float
    n_rows: int
    n_zero: int
    zero_rows: np.ndarray

    def __str__(self):
        return (f"nll {self.mean:.4f} se {self.se:.4f} over {self.n_rows} rows"
                f" ({self.n_zero} zero-density)")


def nll_from_log_density(ld: np.ndarray, zero_floor: bool = False,
                         eps_floor: float = 1e-300) -> NllResult:
    """Fold per-row log-densities into a mean-NLL report (nats). Zero-density
    rows are excluded from the mean and reported; with zero_floor=True they
    instead enter as -log(eps_floor)."""
    if len(ld) == 0:
        raise ValueError("empty evaluation data")
    zero = ~np.isfinite(ld)
    zero_rows = np.flatnonzero(zero)
    vals = -ld
    if zero_floor:
        vals[zero] = -math.log(eps_floor)
    else:
        vals = vals[~zero]
    if len(vals) == 0:
        return NllResult(math.inf, math.nan, len(ld), int(zero.sum()), zero_rows)
    se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else math.nan
    return NllResult(float(vals.mean()), se, len(ld), int(zero.sum()), zero_rows)


def nll(model: FordeModel, ds, zero_floor: bool = False,
        eps_floor: float = 1e-300) -> NllResult:
    return nll_from_log_density(log_density(model, ds), zero_floor, eps_floor)
