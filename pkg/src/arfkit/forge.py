"""Synthetic data generation from a fitted density forest.

Each output row: draw a tree uniformly, a leaf within it proportional to
coverage, then every feature independently from the leaf's distribution -
truncated normals by inverse CDF on a uniform mapped into [Phi(alpha),
Phi(beta)], categoricals by their probability vector.

Evidence conditioning filters to leaves whose bounds intersect every
constraint. By default compatible leaves keep weights proportional to
coverage (constraint intervals only re-truncate the sampled feature); with
exact_bayes=True each leaf is additionally weighted by the probability mass
its own density assigns to the evidence, which is the exact Bayes posterior
over mixture components.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .forde import FordeModel
from .forest import ForestConfig, InternalError
from .tabular import Dataset, Schema, from_matrix

# Forest settings for the two published generation regimes: `default` for
# ordinary synthesis, `benchmark` for the efficacy-benchmark variant (fewer,
# coarser trees).
PRESETS = {
    "default": ForestConfig(num_trees=20, min_node_size=2),
    "benchmark": ForestConfig(num_trees=10, min_node_size=5),
}


def preset_forest_config(name: str) -> ForestConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")


class UnsupportedEvidenceError(ValueError):
    """No leaf anywhere in the model is compatible with the evidence."""


@dataclass(frozen=True)
class Evidence:
    cont: dict  # feature index -> (lo, hi) closed interval
    cat: dict  # feature index -> bool mask over levels

    @staticmethod
    def parse(schema: Schema, spec: dict) -> "Evidence":
        """spec maps column names to constraints: (lo, hi) with None for an
        open side on continuous columns, a level string or an iterable of
        level strings on categorical ones."""
        cont: dict = {}
        cat: dict = {}
        for name, constraint in spec.items():
            j = schema.index_of(name)
            col = schema[j]
            if col.is_categorical:
                if isinstance(constraint, str):
                    constraint = [constraint]
                mask = np.zeros(col.n_levels, dtype=bool)
                for s in constraint:
                    if s not in col.levels:
                        raise ValueError(f"unknown level {s!r} for column {name!r}")
                    mask[col.levels.index(s)] = True
                if not mask.any():
                    raise ValueError(f"empty level set for column {name!r}")
                cat[j] = mask
            else:
                lo, hi = constraint
                lo = -np.inf if lo is None else float(lo)
                hi = np.inf if hi is None else float(hi)
                if not lo <= hi:
                    raise ValueError(f"empty interval for column {name!r}")
                cont[j] = (lo, hi)
        return Evidence(cont, cat)


def sample_leaf_index(model: FordeModel, rng: np.random.Generator) -> tuple[int, int]:
    """One (tree, leaf) draw: tree uniform, leaf proportional to coverage."""
    b = int(rng.integers(model.num_trees))
    q = model.params[b].coverage
    total = q.sum()
    if total <= 0:
        raise InternalError("tree with all-zero coverage")
    cdf = np.cumsum(q / total)
    cdf[-1] = 1.0
    return b, int(np.searchsorted(cdf, rng.random(), side="right"))


def conditional_sample(model: FordeModel, evidence, m: int, seed: int,
                       exact_bayes: bool = False) -> Dataset:
    """m rows from the model restricted to the evidence (see module doc).

    Raises UnsupportedEvidenceError when no leaf in any tree is compatible.
    With empty evidence this is exactly forge_sample.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if not isinstance(evidence, Evidence):
        evidence = Evidence.parse(model.schema, dict(evidence or {}))
    cont_of = {int(j): ci for ci, j in enumerate(model.cont_features)}

    cdfs: list = []
    eligible: list[int] = []
    for b, tp in enumerate(model.params):
        w = tp.coverage.copy()
        for j, (a, z) in evidence.cont.items():
            ci = cont_of[j]
            lo, hi = tp.lo[:, ci], tp.hi[:, ci]
            compat = np.maximum(lo, a) <= np.minimum(hi, z)
            if exact_bayes:
                mu, sg = tp.mu[:, ci], tp.sigma[:, ci]
                norm = ndtr((hi - mu) / sg) - ndtr((lo - mu) / sg)
                mass = (ndtr((np.minimum(hi, z) - mu) / sg)
                        - ndtr((np.maximum(lo, a) - mu) / sg))
                with np.errstate(invalid="ignore", divide="ignore"):
                    frac = np.where(norm > 0, mass / norm, 0.0)
                w = w * np.where(compat, frac, 0.0)
            else:
                w = w * compat
        for j, mask in evidence.cat.items():
            ev_mass = tp.cat_probs[j][:, mask].sum(axis=1)
            w = w * (ev_mass if exact_bayes else (ev_mass > 0))
        total = w.sum()
        if total > 0:
            cdf = np.cumsum(w / total)
            cdf[-1] = 1.0
            eligible.append(b)
            cdfs.append(cdf)
        else:
            cdfs.append(None)
    if not eligible:
        raise UnsupportedEvidenceError("evidence unsupported: no compatible leaf")

    rng = np.random.default_rng(seed)
    pick = np.asarray(eligible)[rng.integers(0, len(eligible), size=m)]
    u = rng.random(m)
    leaf = np.empty(m, dtype=np.int64)
    for b in eligible:
        sel = pick == b
        if sel.any():
            leaf[sel] = np.searchsorted(cdfs[b], u[sel], side="right")

    nc = len(model.cont_features)
    mu = np.empty((m, nc))
    sg = np.empty((m, nc))
    lo = np.empty((m, nc))
    hi = np.empty((m, nc))
    for b in eligible:
        sel = pick == b
        if sel.any():
            tp = model.params[b]
            lv = leaf[sel]
            mu[sel] = tp.mu[lv]
            sg[sel] = tp.sigma[lv]
            lo[sel] = tp.lo[lv]
            hi[sel] = tp.hi[lv]

    out = np.empty((m, len(model.schema)))
    for j, col in enumerate(model.schema):  # schema order fixes the stream
        uj = rng.random(m)
        if col.is_categorical:
            p = np.empty((m, col.n_levels))
            for b in eligible:
                sel = pick == b
                if sel.any():
                    p[sel] = model.params[b].cat_probs[j][leaf[sel]]
            if j in evidence.cat:
                p = p * evidence.cat[j]
                p = p / p.sum(axis=1, keepdims=True)
            cdf = np.cumsum(p, axis=1)
            cdf[:, -1] = 1.0
            out[:, j] = (cdf <= uj[:, None]).sum(axis=1)
        else:
            ci = cont_of[j]
            a, z = lo[:, ci], hi[:, ci]
            if j in evidence.cont:
                a = np.maximum(a, evidence.cont[j][0])
                z = np.minimum(z, evidence.cont[j][1])
            pa = ndtr((a - mu[:, ci]) / sg[:, ci])
            pb = ndtr((z - mu[:, ci]) / sg[:, ci])
            with np.errstate(invalid="ignore"):
                x = mu[:, ci] + sg[:, ci] * ndtri(pa + uj * (pb - pa))
            out[:, j] = np.minimum(np.maximum(x, a), z)
    return from_matrix(model.schema, out)


def forge_sample(model: FordeModel, m: int, seed: int) -> Dataset:
    """Unconditional synthesis; identical to conditional_sample with no
    evidence (same seed gives the same rows)."""
    return conditional_sample(model, {}, m, seed)
