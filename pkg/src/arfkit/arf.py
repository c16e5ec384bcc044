"""Adversarial forest training.

Round 0 trains a forest to separate the real rows (label 1) from an equal
number of marginal-bootstrap rows (label 0). If its out-of-bag accuracy is
already at chance (<= 0.5 + delta) the loop stops there. Otherwise each
round draws fresh synthetic rows leaf-wise from the current forest - pick a
tree uniformly, a leaf by coverage, then every feature independently among
the leaf's real in-bag rows - and fits a new discriminator on real vs those.
When a discriminator finally fails to beat chance, the forest that GENERATED
its training synthetics is returned: its leaves are the ones within which
features are (empirically) independent.

All randomness derives from ArfConfig.seed through fixed SeedSequence
streams: (seed, 0) marginal bootstrap, (seed, 1, round) leaf-wise sampling,
(seed, 2, round) the round's forest. ForestConfig.seed is ignored here so a
single integer pins the whole fit.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .forest import Forest, ForestConfig, InternalError, fit_forest, oob_accuracy
from .tabular import Dataset, from_matrix, stack_rows


@dataclass(frozen=True)
class ArfConfig:
    forest: ForestConfig = ForestConfig()
    delta: float = 0.0
    max_iters: int = 10
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.delta < 0.5:
            raise ValueError("delta must be in [0, 0.5)")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass
class ArfModel:
    forest: Forest
    trace: list[float]  # OOB accuracy of every discriminator, round 0 first
    iterations_run: int  # refinement rounds executed (0 = round 0 sufficed)
    converged: bool
    n_original: int  # stack rows < n_original are the real training rows

    def __post_init__(self):
        if self.converged and not self.trace:
            raise ValueError("converged model must carry a trace")


def sample_marginal_bootstrap(ds: Dataset, m: int, rng: np.random.Generator) -> Dataset:
    """m rows with each cell drawn uniformly (with replacement) from its
    column's observed values: the empirical product-of-marginals measure."""
    n = ds.n_rows
    if n < 1:
        raise ValueError("cannot bootstrap an empty dataset")
    cols = [arr[rng.integers(0, n, size=m)] for arr in ds.columns]
    return Dataset(ds.schema, cols)


def _position_leaves(tree) -> np.ndarray:
    lengths = tree.leaf_slice[:, 1] - tree.leaf_slice[:, 0]
    return np.repeat(np.arange(tree.n_leaves), lengths)


def leaf_coverage(forest: Forest, combined_labels) -> list[np.ndarray]:
    """Per tree: 2 * (in-bag label-1 count in leaf) / n_b for every leaf.

    Sums to exactly 1 per tree when the in-bag multiset is half label-1
    (stratified resampling); under plain bootstrap it fluctuates around 1
    and callers renormalize before using it as a distribution.
    """
    y = np.asarray(combined_labels, dtype=np.int64)
    if len(y) != forest.n_train:
        raise ValueError("labels do not match the training stack")
    out = []
    for t in forest.trees:
        ones = (y[t.inbag_rows] == 1).astype(np.float64)
        if ones.sum() == 0:
            raise InternalError("tree has no in-bag original rows")
        counts = np.bincount(_position_leaves(t), weights=ones, minlength=t.n_leaves)
        out.append(2.0 * counts / t.n_b)
    return out


def _leaf_cdf(q: np.ndarray) -> np.ndarray:
    total = q.sum()
    if total <= 0:
        raise InternalError("tree with all-zero coverage")
    cdf = np.cumsum(q / total)
    cdf[-1] = 1.0
    return cdf


def sample_leafwise(forest: Forest, original_ds: Dataset, coverage, m: int,
                    rng: np.random.Generator) -> Dataset:
    """Draw m synthetic rows: tree uniform, leaf ~ coverage (renormalized per
    tree), then each feature independently and uniformly from the ORIGINAL
    in-bag rows of that leaf. Original rows are the stack ids < n."""
    X = original_ds.matrix()
    n = original_ds.n_rows
    n_trees = forest.num_trees
    cdfs = []
    members = []  # per tree: (grouped original row ids, offsets per leaf)
    counts_per = []
    for b, t in enumerate(forest.trees):
        cdfs.append(_leaf_cdf(np.asarray(coverage[b], dtype=np.float64)))
        pos_leaf = _position_leaves(t)
        orig = t.inbag_rows < n
        rows = t.inbag_rows[orig]
        leaves = pos_leaf[orig]
        order = np.argsort(leaves, kind="stable")
        counts = np.bincount(leaves, minlength=t.n_leaves)
        offsets = np.concatenate([[0], np.cumsum(counts)])
        members.append((rows[order], offsets))
        counts_per.append(counts)

    tree_pick = rng.integers(0, n_trees, size=m)
    u_leaf = rng.random(m)
    leaf_pick = np.empty(m, dtype=np.int64)
    for b in range(n_trees):
        sel = tree_pick == b
        if sel.any():
            leaf_pick[sel] = np.searchsorted(cdfs[b], u_leaf[sel], side="right")
    group_len = np.empty(m, dtype=np.int64)
    group_off = np.empty(m, dtype=np.int64)
    for b in range(n_trees):
        sel = tree_pick == b
        if sel.any():
            group_len[sel] = counts_per[b][leaf_pick[sel]]
            group_off[sel] = members[b][1][leaf_pick[sel]]
    if (group_len <= 0).any():
        raise InternalError("sampled a leaf without original in-bag rows")

    out = np.empty((m, original_ds.n_cols), dtype=np.float64)
    for j in range(original_ds.n_cols):
        pick = group_off + (rng.random(m) * group_len).astype(np.int64)
        src = np.empty(m, dtype=np.int64)
        for b in range(n_trees):
            sel = tree_pick == b
            if sel.any():
                src[sel] = members[b][0][pick[sel]]
        out[:, j] = X[src, j]
    return from_matrix(original_ds.schema, out)


def _round_seed(seed: int, round_idx: int) -> int:
    ss = np.random.SeedSequence((seed, 2, round_idx))
    return int(ss.generate_state(1, np.uint64)[0])


def arf_fit(ds: Dataset, config: ArfConfig, threads: int = 1) -> ArfModel:
    """Run the adversarial loop until the discriminator is at chance or the
    round budget runs out (converged=False then; the last forest is kept)."""
    n = ds.n_rows
    if n < 2 * config.forest.min_node_size:
        raise ValueError("too few rows for the configured min_node_size")
    labels = np.concatenate([np.ones(n, np.int64), np.zeros(n, np.int64)])
    threshold = 0.5 + config.delta

    rng0 = np.random.default_rng(np.random.SeedSequence((config.seed, 0)))
    synth = sample_marginal_bootstrap(ds, n, rng0)
    stack = stack_rows(ds, synth)
    cfg0 = replace(config.forest, seed=_round_seed(config.seed, 0))
    current = fit_forest(stack, labels, cfg0, stratify=True, threads=threads)
    acc = oob_accuracy(current, stack, labels)
    trace = [acc]
    if acc <= threshold:
        return ArfModel(current, trace, 0, True, n)

    for it in range(1, config.max_iters + 1):
        coverage = leaf_coverage(current, labels)
        rng_it = np.random.default_rng(np.random.SeedSequence((config.seed, 1, it)))
        synth = sample_leafwise(current, ds, coverage, n, rng_it)
        stack = stack_rows(ds, synth)
        cfg_it = replace(config.forest, seed=_round_seed(config.seed, it))
        challenger = fit_forest(stack, labels, cfg_it, stratify=True, threads=threads)
        acc = oob_accuracy(challenger, stack, labels)
        trace.append(acc)
        if acc <= threshold:
            # the challenger could not tell `current`'s output from the real
            # data, so `current` is the converged generator
            return ArfModel(current, trace, it, True, n)
        current = challenger
    return ArfModel(current, trace, config.max_iters, False, n)
