"""Simulation data generators. Pure functions of (spec, seed).

Shape datasets are 2-D point clouds plus a categorical class column; their
Gaussian noise is clipped at four standard deviations so the stated bounding
boxes hold exactly, not just with high probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .tabular import (CATEGORICAL, CONTINUOUS, Column, Dataset, Schema,
                      _largest_remainder)

SHAPE_NAMES = ("cassini", "smiley", "twomoons", "shapes")


@dataclass(frozen=True)
class ToeplitzSpec:
    n: int
    d: int
    rho: float
    seed: int

    def __post_init__(self):
        if self.d < 1 or self.n < 1:
            raise ValueError("need n >= 1 and d >= 1")
        if not -1.0 < self.rho < 1.0:
            raise ValueError("rho must be in (-1, 1)")


@dataclass(frozen=True)
class ShapeSpec:
    name: str
    n: int
    seed: int

    def __post_init__(self):
        if self.name not in SHAPE_NAMES:
            raise ValueError(f"unknown shape generator {self.name!r}")
        if self.n < _N_CLASSES[self.name]:
            raise ValueError("n must be at least the number of classes")


def _continuous_schema(d: int) -> Schema:
    return Schema(tuple(Column(f"x{j + 1}", CONTINUOUS) for j in range(d)))


def gen_toeplitz_gaussian(spec: ToeplitzSpec) -> Dataset:
    """N(0, Sigma) with Sigma_ij = rho^|i-j|, built by the AR(1) recursion
    X_1 ~ N(0,1), X_{j+1} = rho X_j + sqrt(1-rho^2) eps_j."""
    rng = np.random.default_rng(spec.seed)
    eps = rng.standard_normal((spec.n, spec.d))
    X = np.empty((spec.n, spec.d))
    X[:, 0] = eps[:, 0]
    scale = math.sqrt(1.0 - spec.rho**2)
    for j in range(1, spec.d):
        X[:, j] = spec.rho * X[:, j - 1] + scale * eps[:, j]
    return Dataset(_continuous_schema(spec.d), [X[:, j].copy() for j in range(spec.d)])


def gen_logistic_target(X, beta, seed: int) -> np.ndarray:
    """Bernoulli labels with P(y=1) = 1 / (1 + exp(-X beta)) per row."""
    X = np.asarray(X, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (X.shape[1],):
        raise ValueError("beta length must match the number of columns")
    p = expit(X @ beta)
    rng = np.random.default_rng(seed)
    return (rng.random(len(X)) < p).astype(np.int64)


def gen_logistic_dataset(n: int, d: int, rho: float, informative_fraction: float,
                         seed: int, target: str = "y") -> Dataset:
    """Toeplitz Gaussian features plus a logistic Bernoulli target column.

    beta has ones in the first ceil(d * informative_fraction) positions and
    zeros elsewhere (non-informative features)."""
    if not 0.0 <= informative_fraction <= 1.0:
        raise ValueError("informative_fraction must be in [0, 1]")
    ds = gen_toeplitz_gaussian(ToeplitzSpec(n, d, rho, seed))
    k = math.ceil(d * informative_fraction)
    beta = np.zeros(d)
    beta[:k] = 1.0
    y = gen_logistic_target(ds.matrix(), beta, seed + 1)
    cols = list(ds.columns) + [y]
    schema = Schema(ds.schema.columns + (Column(target, CATEGORICAL, ("0", "1")),))
    return Dataset(schema, cols)


_N_CLASSES = {"cassini": 3, "smiley": 4, "twomoons": 2, "shapes": 4}

_FRACTIONS = {
    "cassini": {"band_hi": 0.4, "band_lo": 0.4, "core": 0.2},
    "smiley": {"eye_l": 0.18, "eye_r": 0.18, "mouth": 0.5, "nose": 0.14},
    "twomoons": {"lower": 0.5, "upper": 0.5},
    "shapes": {"blob": 0.25, "ring": 0.25, "square": 0.25, "triangle": 0.25},
}


def _class_counts(n: int, fractions: dict) -> dict:
    names = sorted(fractions)
    targets = np.array([fractions[k] * n for k in names])
    counts = _largest_remainder(targets, n)
    # every class must appear at least once (n >= n_classes by precondition)
    while (counts == 0).any():
        counts[np.argmax(counts)] -= 1
        counts[np.flatnonzero(counts == 0)[0]] += 1
    return dict(zip(names, counts))


def _clipped_normal(rng, size, sd):
    return np.clip(rng.standard_normal(size), -4.0, 4.0) * sd


def _gen_cassini(rng, counts):
    pts = {}
    k = counts["band_hi"]
    theta = rng.uniform(math.pi / 6, 5 * math.pi / 6, k)
    r = rng.uniform(1.2, 1.8, k)
    pts["band_hi"] = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    k = counts["band_lo"]
    theta = rng.uniform(math.pi / 6, 5 * math.pi / 6, k)
    r = rng.uniform(1.2, 1.8, k)
    pts["band_lo"] = np.column_stack([r * np.cos(theta), -r * np.sin(theta)])
    k = counts["core"]
    r = 0.35 * np.sqrt(rng.random(k))
    theta = rng.uniform(0.0, 2 * math.pi, k)
    pts["core"] = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    return pts


def _gen_smiley(rng, counts):
    pts = {}
    k = counts["eye_l"]
    pts["eye_l"] = np.column_stack([-0.5 + _clipped_normal(rng, k, 0.08),
                                    0.8 + _clipped_normal(rng, k, 0.08)])
    k = counts["eye_r"]
    pts["eye_r"] = np.column_stack([0.5 + _clipped_normal(rng, k, 0.08),
                                    0.8 + _clipped_normal(rng, k, 0.08)])
    k = counts["nose"]
    pts["nose"] = np.column_stack([_clipped_normal(rng, k, 0.08),
                                   0.15 + _clipped_normal(rng, k, 0.15)])
    k = counts["mouth"]
    theta = rng.uniform(math.pi + 0.45, 2 * math.pi - 0.45, k)
    r = 0.85 + _clipped_normal(rng, k, 0.04)
    pts["mouth"] = np.column_stack([r * np.cos(theta), 0.1 + r * np.sin(theta)])
    return pts


def _gen_twomoons(rng, counts):
    pts = {}
    k = counts["upper"]
    t = rng.random(k) * math.pi
    pts["upper"] = np.column_stack([np.cos(t) + _clipped_normal(rng, k, 0.1),
                                    np.sin(t) + _clipped_normal(rng, k, 0.1)])
    k = counts["lower"]
    t = rng.random(k) * math.pi
    pts["lower"] = np.column_stack([1.0 - np.cos(t) + _clipped_normal(rng, k, 0.1),
                                    0.5 - np.sin(t) + _clipped_normal(rng, k, 0.1)])
    return pts


def _gen_shapes(rng, counts):
    pts = {}
    k = counts["blob"]
    r = 0.6 * np.sqrt(rng.random(k))
    theta = rng.uniform(0.0, 2 * math.pi, k)
    pts["blob"] = np.column_stack([-1.5 + r * np.cos(theta), 1.5 + r * np.sin(theta)])
    k = counts["square"]
    pts["square"] = np.column_stack([rng.uniform(0.9, 2.1, k), rng.uniform(0.9, 2.1, k)])
    k = counts["triangle"]
    a = np.array([-2.1, -0.9])
    b = np.array([-0.9, -0.9])
    c = np.array([-1.5, -2.1])
    su = np.sqrt(rng.random(k))[:, None]
    v = rng.random(k)[:, None]
    pts["triangle"] = (1 - su) * a + su * ((1 - v) * b + v * c)
    k = counts["ring"]
    r = np.sqrt(rng.uniform(0.45**2, 0.75**2, k))
    theta = rng.uniform(0.0, 2 * math.pi, k)
    pts["ring"] = np.column_stack([1.5 + r * np.cos(theta), -1.5 + r * np.sin(theta)])
    return pts


_SHAPE_FNS = {"cassini": _gen_cassini, "smiley": _gen_smiley,
              "twomoons": _gen_twomoons, "shapes": _gen_shapes}


def gen_shape(spec: ShapeSpec) -> Dataset:
    """Two continuous coordinates (x1, x2) plus a class column; the class is
    determined by the generating cluster."""
    rng = np.random.default_rng(spec.seed)
    counts = _class_counts(spec.n, _FRACTIONS[spec.name])
    pts = _SHAPE_FNS[spec.name](rng, counts)
    levels = tuple(sorted(counts))
    xy = np.concatenate([pts[name] for name in levels], axis=0)
    codes = np.repeat(np.arange(len(levels)), [counts[name] for name in levels])
    schema = Schema((Column("x1", CONTINUOUS), Column("x2", CONTINUOUS),
                     Column("class", CATEGORICAL, levels)))
    return Dataset(schema, [xy[:, 0].copy(), xy[:, 1].copy(),
                            codes.astype(np.int64)])
