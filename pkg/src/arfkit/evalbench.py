"""Baselines and benchmark harnesses.

Piecewise-constant (PWC) forest density estimators — uniform within each
leaf, so density = coverage / leaf volume with volumes clipped to the
training bounding box — plus a Monte-Carlo integrated-squared-error
estimator, a two-sample discriminator score, and a synthetic-data efficacy
pipeline with two built-in learners (logistic regression by full-batch
gradient descent, and a single depth-capped decision tree).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import expit, logsumexp

from .arf import ArfConfig, ArfModel, arf_fit, leaf_coverage
from .forde import NllResult, forde_fit, nll_from_log_density
from .forest import (ForestConfig, Tree, _grow_on, fit_forest, oob_accuracy,
                     tree_bounds)
from .forge import forge_sample, preset_forest_config
from .tabular import Column, Dataset, Schema, drop_column, stack_rows

UNSUPERVISED = "unsupervised"
SUPERVISED = "supervised"


def _split_target(ds: Dataset, target: str) -> tuple[Dataset, np.ndarray, Column]:
    j = ds.schema.index_of(target)
    col = ds.schema[j]
    if not col.is_categorical:
        raise ValueError(f"target {target!r} must be categorical")
    return drop_column(ds, target), ds.columns[j].astype(np.int64), col


# ---------------------------------------------------------------------------
# piecewise-constant density baseline


@dataclass
class PwcModel:
    """Per (tree, leaf): a constant density coverage/volume inside the leaf's
    box (clipped to the training bounding box), zero outside. log_leaf holds
    that constant in log space; rows outside the bounding box have density
    zero under every tree."""
    schema: Schema
    trees: list[Tree]
    coverage: list[np.ndarray]
    log_leaf: list[np.ndarray]
    box_lo: np.ndarray  # per column; -inf on categorical columns
    box_hi: np.ndarray
    mode: str

    @property
    def num_trees(self) -> int:
        return len(self.trees)


def _pwc_tables(trees, coverages, schema: Schema, X: np.ndarray):
    is_cat = schema.categorical_mask()
    d = len(schema)
    box_lo = np.full(d, -np.inf)
    box_hi = np.full(d, np.inf)
    global_ranges = [None] * d
    for j in np.flatnonzero(~is_cat):
        lo, hi = float(X[:, j].min()), float(X[:, j].max())
        box_lo[j], box_hi[j] = lo, hi
        global_ranges[j] = (lo, hi)
    log_leaf = []
    for tree, q in zip(trees, coverages):
        tb = tree_bounds(tree, schema, global_ranges)
        log_vol = np.log(tb.hi - tb.lo).sum(axis=1)
        for j in np.flatnonzero(is_cat):
            log_vol = log_vol + np.log(tb.allowed[int(j)].sum(axis=1))
        with np.errstate(divide="ignore"):
            log_leaf.append(np.log(q) - log_vol)
    return box_lo, box_hi, log_leaf


def fit_pwc(ds: Dataset, mode, cfg: ForestConfig | None = None) -> PwcModel:
    """mode is either a fitted ArfModel (reuse its trees and coverage — the
    leaf partition is shared with the density forest) or the name of a
    categorical target column (grow a fresh forest on that target, then
    measure coverage label-free; the density is over the remaining columns).
    cfg configures the supervised forest and is ignored otherwise."""
    if isinstance(mode, ArfModel):
        if ds.schema != mode.forest.schema:
            raise ValueError("dataset schema does not match the forest's")
        if ds.n_rows != mode.n_original:
            raise ValueError("dataset size does not match the forest's training data")
        labels = np.concatenate([
            np.ones(ds.n_rows, np.int64),
            np.zeros(mode.forest.n_train - ds.n_rows, np.int64)])
        coverage = [q / q.sum() for q in leaf_coverage(mode.forest, labels)]
        trees = mode.forest.trees
        schema, X = ds.schema, ds.matrix()
        kind = UNSUPERVISED
    else:
        feat_ds, y, _ = _split_target(ds, mode)
        forest = fit_forest(feat_ds, y, cfg if cfg is not None else ForestConfig())
        trees = forest.trees
        coverage = []
        for t in trees:
            lengths = (t.leaf_slice[:, 1] - t.leaf_slice[:, 0]).astype(np.float64)
            coverage.append(lengths / t.n_b)
        schema, X = feat_ds.schema, feat_ds.matrix()
        kind = SUPERVISED
    box_lo, box_hi, log_leaf = _pwc_tables(trees, coverage, schema, X)
    return PwcModel(schema, list(trees), coverage, log_leaf, box_lo, box_hi, kind)


def pwc_log_density(model: PwcModel, data) -> np.ndarray:
    """Log mixture density per row; a single row returns a float. Bounding
    boxes are closed intervals, as for the smooth estimator."""
    single = False
    if isinstance(data, Dataset):
        if data.schema != model.schema:
            raise ValueError("dataset schema does not match the model's")
        X = data.matrix()
    else:
        X = np.asarray(data, dtype=np.float64)
        single = X.ndim == 1
        X = np.ascontiguousarray(np.atleast_2d(X))
    inside = np.ones(len(X), dtype=bool)
    for j in np.flatnonzero(np.isfinite(model.box_lo)):
        inside &= (X[:, j] >= model.box_lo[j]) & (X[:, j] <= model.box_hi[j])
    terms = np.empty((model.num_trees, len(X)))
    for b, tree in enumerate(model.trees):
        terms[b] = model.log_leaf[b][tree.route(X)]
    out = logsumexp(terms, axis=0) - math.log(model.num_trees)
    out[~inside] = -np.inf
    return float(out[0]) if single else out


def pwc_nll(model: PwcModel, ds, zero_floor: bool = False) -> NllResult:
    return nll_from_log_density(pwc_log_density(model, ds), zero_floor)


# ---------------------------------------------------------------------------
# Monte-Carlo integrated squared error


@dataclass(frozen=True)
class IseResult:
    estimate: float
    se: float
    n_mc: int


class GaussianProposal:
    """Multivariate normal proposal with .sample and .log_density, the
    protocol ise_monte_carlo expects."""

    def __init__(self, mean, cov):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
        cov = np.asarray(cov, dtype=np.float64)
        if cov.ndim == 0:
            cov = float(cov) * np.eye(len(self.mean))
        elif cov.ndim == 1:
            cov = np.diag(cov)
        self.cov = cov
        self._chol = np.linalg.cholesky(cov)
        self._logdet = 2.0 * np.log(np.diag(self._chol)).sum()

    @property
    def dim(self) -> int:
        return len(self.mean)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.mean + rng.standard_normal((n, self.dim)) @ self._chol.T

    def log_density(self, X) -> np.ndarray:
        dev = np.atleast_2d(np.asarray(X, dtype=np.float64)) - self.mean
        z = solve_triangular(self._chol, dev.T, lower=True)
        return (-0.5 * (z * z).sum(axis=0) - 0.5 * self._logdet
                - 0.5 * self.dim * math.log(2.0 * math.pi))


def ise_monte_carlo(model_logdensity, true_logdensity, proposal,
                    n_mc: int, seed: int) -> IseResult:
    """Importance-sampled estimate of integral (p - q)^2 with draws from the
    proposal; both densities enter as callables matrix -> log densities. The
    proposal must cover both supports (any non-finite weight is an error)."""
    rng = np.random.default_rng(seed)
    X = proposal.sample(n_mc, rng)
    p = np.exp(np.asarray(model_logdensity(X), dtype=np.float64))
    q = np.exp(np.asarray(true_logdensity(X), dtype=np.float64))
    s = np.exp(np.asarray(proposal.log_density(X), dtype=np.float64))
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        w = (p - q) ** 2 / s
    if not np.isfinite(w).all():
        raise ValueError("non-finite importance weight; proposal does not "
                         "cover the support")
    se = float(w.std(ddof=1) / math.sqrt(n_mc)) if n_mc > 1 else math.nan
    return IseResult(float(w.mean()), se, n_mc)


# ---------------------------------------------------------------------------
# two-sample discriminator


def discriminator_score(real_ds: Dataset, synth_ds: Dataset,
                        forest_cfg: ForestConfig = ForestConfig(),
                        seed: int = 0) -> float:
    """OOB accuracy of a forest trained to tell the two samples apart
    (1 = real). 0.5 means indistinguishable. Unequal sizes are balanced by
    subsampling the larger side without replacement."""
    if real_ds.schema != synth_ds.schema:
        raise ValueError("schema mismatch between the two samples")
    rng = np.random.default_rng(seed)
    n = min(real_ds.n_rows, synth_ds.n_rows)

    def cut(ds: Dataset) -> Dataset:
        if ds.n_rows == n:
            return ds
        return ds.take(np.sort(rng.permutation(ds.n_rows)[:n]))

    stack = stack_rows(cut(real_ds), cut(synth_ds))
    labels = np.concatenate([np.ones(n, np.int64), np.zeros(n, np.int64)])
    forest = fit_forest(stack, labels, replace(forest_cfg, seed=seed),
                        stratify=True)
    return oob_accuracy(forest, stack, labels)


# ---------------------------------------------------------------------------
# built-in learners


def _one_hot_width(schema: Schema) -> int:
    w = 0
    for col in schema:
        w += col.n_levels if col.is_categorical else 1
    return w


@dataclass
class LogregModel:
    feature_schema: Schema
    target: str
    target_levels: tuple
    mean: np.ndarray  # per continuous feature column, design order
    scale: np.ndarray
    weights: np.ndarray  # (n_out, p); n_out = 1 for binary targets
    n_iter: int
    grad_norm: float

    def design(self, ds: Dataset) -> np.ndarray:
        if ds.schema == self.feature_schema:
            feat = ds
        else:
            feat, _, _ = _split_target(ds, self.target)
            if feat.schema != self.feature_schema:
                raise ValueError("feature schema does not match the model's")
        n = feat.n_rows
        Z = np.empty((n, _one_hot_width(self.feature_schema) + 1))
        k = ci = 0
        for j, col in enumerate(self.feature_schema):
            x = feat.columns[j]
            if col.is_categorical:
                codes = x.astype(np.int64)
                block = np.zeros((n, col.n_levels))
                block[np.arange(n), codes] = 1.0
                Z[:, k:k + col.n_levels] = block
                k += col.n_levels
            else:
                Z[:, k] = (x - self.mean[ci]) / self.scale[ci]
                k += 1
                ci += 1
        Z[:, -1] = 1.0
        return Z

    def predict(self, ds: Dataset) -> np.ndarray:
        """Predicted target level codes (class 1 on ties in the binary case,
        lowest code on ties otherwise)."""
        scores = self.design(ds) @ self.weights.T
        if len(self.weights) == 1:
            return (scores[:, 0] >= 0.0).astype(np.int64)
        return np.argmax(scores, axis=1).astype(np.int64)


def logreg_loss(w, Z, y01, l2: float = 0.0) -> float:
    """Mean cross-entropy of a linear logit; the last design column is the
    (unpenalized) intercept."""
    z = Z @ w
    loss = float(np.mean(np.logaddexp(0.0, z) - y01 * z))
    if l2:
        loss += 0.5 * l2 * float(np.dot(w[:-1], w[:-1]))
    return loss


def logreg_grad(w, Z, y01, l2: float = 0.0) -> np.ndarray:
    g = Z.T @ (expit(Z @ w) - y01) / len(y01)
    if l2:
        g[:-1] += l2 * w[:-1]
    return g


@dataclass(frozen=True)
class LogregConfig:
    lr: float | None = None  # None: 1 / Lipschitz bound of the gradient
    l2: float = 0.0
    tol: float = 1e-6  # on the euclidean gradient norm
    max_iters: int = 10_000


def train_logreg(ds: Dataset, target: str,
                 hyper: LogregConfig = LogregConfig()) -> LogregModel:
    """Full-batch gradient descent on mean cross-entropy, one-vs-rest for
    more than two target levels. Deterministic (zero init, fixed step)."""
    feat_ds, y, tcol = _split_target(ds, target)
    is_cat = feat_ds.schema.categorical_mask()
    cont = np.flatnonzero(~is_cat)
    mean = np.array([feat_ds.columns[j].mean() for j in cont])
    sd = np.array([feat_ds.columns[j].std() for j in cont])
    scale = np.where(sd > 0, sd, 1.0)
    model = LogregModel(feat_ds.schema, target, tcol.levels, mean, scale,
                        np.empty(0), 0, math.nan)
    Z = model.design(feat_ds)
    if not np.isfinite(Z).all():
        raise ValueError("non-finite feature values")
    K = tcol.n_levels
    # descent step from the gradient's Lipschitz bound ||Z||_F^2 / (4n) + l2
    lr = hyper.lr
    if lr is None:
        lr = 1.0 / ((Z * Z).sum() / (4.0 * len(Z)) + hyper.l2)
    outs = range(1) if K == 2 else range(K)
    W = np.zeros((len(outs), Z.shape[1]))
    worst_iter, worst_norm = 0, 0.0
    for o in outs:
        y01 = (y == (1 if K == 2 else o)).astype(np.float64)
        w = np.zeros(Z.shape[1])
        for it in range(1, hyper.max_iters + 1):
            g = logreg_grad(w, Z, y01, hyper.l2)
            norm = float(np.linalg.norm(g))
            if norm <= hyper.tol:
                break
            w -= lr * g
        W[o] = w
        worst_iter = max(worst_iter, it)
        worst_norm = max(worst_norm, norm)
    model.weights = W
    model.n_iter = worst_iter
    model.grad_norm = worst_norm
    return model


@dataclass(frozen=True)
class DtreeConfig:
    max_depth: int | None = None  # None: 15 for binary targets, 30 otherwise
    min_node_size: int = 1
    seed: int = 0


@dataclass
class DtreeModel:
    feature_schema: Schema
    target: str
    tree: Tree
    n_classes: int

    def predict(self, ds: Dataset) -> np.ndarray:
        if ds.schema == self.feature_schema:
            feat = ds
        else:
            feat, _, _ = _split_target(ds, self.target)
            if feat.schema != self.feature_schema:
                raise ValueError("feature schema does not match the model's")
        leaves = self.tree.route(feat.matrix())
        return np.argmax(self.tree.leaf_counts, axis=1)[leaves]


def train_dtree(ds: Dataset, target: str,
                hyper: DtreeConfig = DtreeConfig()) -> DtreeModel:
    """One greedy tree on the full data (no resampling, all features
    candidate at every node), majority label per leaf."""
    feat_ds, y, tcol = _split_target(ds, target)
    X = feat_ds.matrix()
    if not np.isfinite(X).all():
        raise ValueError("non-finite feature values")
    depth = hyper.max_depth
    if depth is None:
        depth = 15 if tcol.n_levels == 2 else 30
    cfg = ForestConfig(num_trees=1, mtry=feat_ds.n_cols,
                       min_node_size=hyper.min_node_size, max_depth=depth,
                       seed=hyper.seed)
    ss = np.random.SeedSequence((hyper.seed, 0))
    kernel_seed = np.uint64(np.random.default_rng(ss).integers(0, 2**63))
    tree = _grow_on(X, y, int(y.max()) + 1, np.arange(feat_ds.n_rows),
                    feat_ds.schema, cfg, kernel_seed)
    return DtreeModel(feat_ds.schema, target, tree, int(y.max()) + 1)


def accuracy(pred, truth) -> float:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    return float(np.mean(pred == truth))


def f1_score(pred, truth, n_classes: int) -> float:
    """Binary: F1 of class 1. Otherwise: macro average over all classes
    (empty classes contribute 0)."""
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)

    def one(c: int) -> float:
        tp = np.sum((pred == c) & (truth == c))
        denom = 2 * tp + np.sum((pred == c) & (truth != c)) \
            + np.sum((pred != c) & (truth == c))
        return 2.0 * tp / denom if denom > 0 else 0.0

    if n_classes == 2:
        return one(1)
    return float(np.mean([one(c) for c in range(n_classes)]))


# ---------------------------------------------------------------------------
# efficacy pipeline


class IdentityGenerator:
    """Hands the training data straight back; the oracle baseline."""

    name = "identity"

    def __init__(self):
        self._ds = None

    def fit(self, ds: Dataset, seed: int) -> None:
        self._ds = ds

    def sample(self, m: int, seed: int) -> Dataset:
        if self._ds is None:
            raise RuntimeError("fit before sampling")
        if m > self._ds.n_rows:
            raise ValueError("cannot return more rows than were fitted")
        return self._ds.take(np.arange(m))


class ForgeGenerator:
    """Adversarial fit + density estimation + leaf sampling behind the
    generator protocol (fit(ds, seed), sample(m, seed))."""

    def __init__(self, preset: str = "default", delta: float = 0.0,
                 max_iters: int = 10, threads: int = 1):
        self.forest_config = preset_forest_config(preset)
        self.name = f"forge-{preset}"
        self.delta = delta
        self.max_iters = max_iters
        self.threads = threads
        self.model = None
        self.arf = None

    def fit(self, ds: Dataset, seed: int) -> None:
        cfg = ArfConfig(forest=self.forest_config, delta=self.delta,
                        max_iters=self.max_iters, seed=seed)
        self.arf = arf_fit(ds, cfg, threads=self.threads)
        self.model = forde_fit(self.arf, ds)

    def sample(self, m: int, seed: int) -> Dataset:
        if self.model is None:
            raise RuntimeError("fit before sampling")
        return forge_sample(self.model, m, seed)


def _mean_se(v: np.ndarray) -> tuple[float, float]:
    v = np.asarray(v, dtype=np.float64)
    se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else math.nan
    return float(v.mean()), se


@dataclass
class EfficacyReport:
    target: str
    learners: tuple
    seeds: tuple
    oracle_acc: dict  # learner -> per-seed array
    oracle_f1: dict
    synth_acc: dict
    synth_f1: dict
    gen_seconds: np.ndarray  # per seed, generator fit + sample wall time

    def summary(self) -> dict:
        out: dict = {"oracle": {}, "synthetic": {}}
        for name in self.learners:
            out["oracle"][name] = {"accuracy": _mean_se(self.oracle_acc[name]),
                                   "f1": _mean_se(self.oracle_f1[name])}
            out["synthetic"][name] = {"accuracy": _mean_se(self.synth_acc[name]),
                                      "f1": _mean_se(self.synth_f1[name])}
        stack = lambda d: np.mean([d[name] for name in self.learners], axis=0)
        out["oracle"]["all"] = {"accuracy": _mean_se(stack(self.oracle_acc)),
                                "f1": _mean_se(stack(self.oracle_f1))}
        out["synthetic"]["all"] = {"accuracy": _mean_se(stack(self.synth_acc)),
                                   "f1": _mean_se(stack(self.synth_f1))}
        out["gen_seconds"] = _mean_se(self.gen_seconds)
        return out

    def csv_rows(self, dataset: str, generator: str) -> list[tuple]:
        rows = []
        for i, s in enumerate(self.seeds):
            for name in self.learners:
                rows.append((dataset, generator, name, "oracle_accuracy",
                             float(self.oracle_acc[name][i]), s))
                rows.append((dataset, generator, name, "oracle_f1",
                             float(self.oracle_f1[name][i]), s))
                rows.append((dataset, generator, name, "synth_accuracy",
                             float(self.synth_acc[name][i]), s))
                rows.append((dataset, generator, name, "synth_f1",
                             float(self.synth_f1[name][i]), s))
            rows.append((dataset, generator, "all", "gen_seconds",
                         float(self.gen_seconds[i]), s))
        return rows


def _fit_learner(name: str, ds: Dataset, target: str, seed: int):
    if name == "logreg":
        return train_logreg(ds, target)
    if name == "dtree":
        return train_dtree(ds, target, DtreeConfig(seed=seed))
    raise ValueError(f"unknown learner {name!r}")


def run_efficacy(real_trn: Dataset, real_tst: Dataset, target: str,
                 generator, learners=("logreg", "dtree"),
                 seeds=(0, 1, 2, 3, 4)) -> EfficacyReport:
    """For every seed: fit the generator on the real training data, draw a
    synthetic set of the same size, train each learner once on real and once
    on synthetic data, and score both on the real test set."""
    if real_trn.schema != real_tst.schema:
        raise ValueError("train/test schema mismatch")
    t_idx = real_trn.schema.index_of(target)
    if not real_trn.schema[t_idx].is_categorical:
        raise ValueError(f"target {target!r} must be categorical")
    learners = tuple(learners)
    seeds = tuple(int(s) for s in seeds)
    y_true = real_tst.columns[t_idx].astype(np.int64)
    n_classes = real_trn.schema[t_idx].n_levels

    oracle_acc = {name: np.empty(len(seeds)) for name in learners}
    oracle_f1 = {name: np.empty(len(seeds)) for name in learners}
    synth_acc = {name: np.empty(len(seeds)) for name in learners}
    synth_f1 = {name: np.empty(len(seeds)) for name in learners}
    gen_seconds = np.empty(len(seeds))

    for i, s in enumerate(seeds):
        t0 = time.perf_counter()
        generator.fit(real_trn, s)
        synth = generator.sample(real_trn.n_rows, s)
        gen_seconds[i] = time.perf_counter() - t0
        for name in learners:
            for src, acc_d, f1_d in ((real_trn, oracle_acc, oracle_f1),
                                     (synth, synth_acc, synth_f1)):
                model = _fit_learner(name, src, target, s)
                pred = model.predict(real_tst)
                acc_d[name][i] = accuracy(pred, y_true)
                f1_d[name][i] = f1_score(pred, y_true, n_classes)
    return EfficacyReport(target, learners, seeds, oracle_acc, oracle_f1,
                          synth_acc, synth_f1, gen_seconds)


BENCH_COLUMNS = ("dataset", "generator", "learner", "metric", "value", "seed")


def write_bench_csv(path, rows) -> None:
    """rows of (dataset, generator, learner, metric, value, seed)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(BENCH_COLUMNS) + "\n")
        for dataset, generator, learner, metric, value, seed in rows:
            fh.write(f"{dataset},{generator},{learner},{metric},"
                     f"{value!r},{seed}\n")
