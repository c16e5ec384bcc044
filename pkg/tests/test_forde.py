import math

import numpy as np
import pytest
from scipy.stats import truncnorm

from arfkit.arf import ArfConfig, arf_fit
from arfkit.forde import (
    CategoricalParams, FordeFitConfig, TruncNormalParams, estimate_categorical,
    estimate_continuous, forde_fit, log_density, nll, nll_from_log_density,
)
from arfkit.forest import ForestConfig
from arfkit.simgen import ToeplitzSpec, gen_toeplitz_gaussian
from arfkit.tabular import CATEGORICAL, CONTINUOUS, Column, Dataset, Schema


def fit_small_model(seed=0, n=300, d=3, alpha=1.0):
    ds = gen_toeplitz_gaussian(ToeplitzSpec(n, d, 0.6, seed))
    arf = arf_fit(ds, ArfConfig(forest=ForestConfig(num_trees=6),
                                max_iters=4, seed=seed))
    return ds, forde_fit(arf, ds, FordeFitConfig(alpha=alpha))


def mixed_ds(n=240, seed=1):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    c = (x + 0.5 * rng.standard_normal(n) > 0).astype(np.int64)
    schema = Schema((Column("x", CONTINUOUS),
                     Column("c", CATEGORICAL, ("no", "yes"))))
    return Dataset(schema, [x, c])


def test_fit_config_validation():
    with pytest.raises(ValueError):
        FordeFitConfig(alpha=0.0)
    with pytest.raises(ValueError):
        FordeFitConfig(alpha=-1.0)
    with pytest.raises(ValueError):
        FordeFitConfig(sigma_floor_rel=0.0)
    with pytest.raises(ValueError):
        FordeFitConfig(sigma_floor_abs=-1e-9)


def test_param_validation():
    with pytest.raises(ValueError):
        TruncNormalParams(0.0, 0.0, -1.0, 1.0)
    with pytest.raises(ValueError):
        TruncNormalParams(0.0, 1.0, 2.0, 1.0)
    with pytest.raises(ValueError):
        CategoricalParams(np.array([0, 1]), np.array([0.6, 0.6]))
    with pytest.raises(ValueError):
        CategoricalParams(np.array([], dtype=np.int64), np.array([]))


def test_estimate_continuous_moments():
    v = np.array([1.0, 2.0, 4.0, 9.0])
    p = estimate_continuous(v, 0.0, 10.0, sigma_floor=1e-6)
    np.testing.assert_allclose(p.mu, v.mean())
    np.testing.assert_allclose(p.sigma, v.std(ddof=1))
    assert (p.lo, p.hi) == (0.0, 10.0)


def test_estimate_continuous_floors_degenerate_sd():
    p = estimate_continuous([3.0], 0.0, 5.0, sigma_floor=1e-4)
    assert p.sigma == 1e-4 and p.mu == 3.0
    p = estimate_continuous([2.0, 2.0, 2.0], 0.0, 5.0, sigma_floor=1e-4)
    assert p.sigma == 1e-4


def test_estimate_continuous_rejects_bad_input():
    with pytest.raises(ValueError):
        estimate_continuous([], 0.0, 1.0, 1e-6)
    with pytest.raises(ValueError):
        estimate_continuous([2.0], 0.0, 1.0, 1e-6)  # outside bounds


def test_estimate_categorical_add_alpha():
    p = estimate_categorical([0, 0], allowed={0, 1}, prior_alpha=1.0)
    np.testing.assert_array_equal(p.levels, [0, 1])
    np.testing.assert_allclose(p.probs, [0.75, 0.25])
    # heavier prior pulls toward uniform over the allowed set
    p = estimate_categorical([0, 0], allowed={0, 1}, prior_alpha=1e6)
    np.testing.assert_allclose(p.probs, [0.5, 0.5], atol=1e-5)


def test_estimate_categorical_rejects_bad_input():
    with pytest.raises(ValueError):
        estimate_categorical([2], allowed={0, 1}, prior_alpha=1.0)
    with pytest.raises(ValueError):
        estimate_categorical([], allowed=set(), prior_alpha=1.0)


def test_forde_fit_structural_invariants():
    ds, model = fit_small_model()
    assert model.num_trees == 6 and model.n_train == ds.n_rows
    for tp in model.params:
        np.testing.assert_allclose(tp.coverage.sum(), 1.0, rtol=1e-12)
        assert (tp.coverage >= 0.0).all()
        assert (tp.coverage[tp.empty] == 0.0).all()
        assert (tp.sigma > 0.0).all()
        live = ~tp.empty
        assert (tp.mu[live] >= tp.lo[live]).all()
        assert (tp.mu[live] <= tp.hi[live]).all()
        assert (tp.original_count[live] > 0).all()


def test_forde_fit_mixed_columns():
    ds = mixed_ds()
    arf = arf_fit(ds, ArfConfig(forest=ForestConfig(num_trees=5),
                                max_iters=3, seed=2))
    model = forde_fit(arf, ds)
    j = ds.schema.index_of("c")
    for tp in model.params:
        probs = tp.cat_probs[j]
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, rtol=1e-12)
        assert (probs >= 0.0).all()
    prof = model.profile(0, 0)
    assert prof.tree == 0 and prof.leaf == 0
    lo, hi = prof.bounds[0]
    assert lo < hi
    assert isinstance(prof.bounds[1], frozenset)
    np.testing.assert_allclose(prof.dist[1].probs.sum(), 1.0)


def test_forde_fit_rejects_mismatched_data():
    ds, model = fit_small_model()
    arf = arf_fit(ds, ArfConfig(forest=ForestConfig(num_trees=2), seed=0))
    with pytest.raises(ValueError):
        forde_fit(arf, ds.take(range(10)))
    other = mixed_ds()
    with pytest.raises(ValueError):
        forde_fit(arf, other)


def slow_log_density(model, X):
    """Per-row mixture density via scipy's truncnorm, averaged over trees."""
    cat = model.schema.categorical_mask()
    out = np.empty(len(X))
    for i, row in enumerate(X):
        acc = []
        for b, (tree, tp) in enumerate(zip(model.trees, model.params)):
            leaf = int(tree.route(row[None, :])[0])
            dens = tp.coverage[leaf]
            for ci, j in enumerate(model.cont_features):
                mu, sg = tp.mu[leaf, ci], tp.sigma[leaf, ci]
                lo, hi = tp.lo[leaf, ci], tp.hi[leaf, ci]
                if not lo <= row[j] <= hi:
                    dens = 0.0
                    break
                dens *= truncnorm.pdf(row[j], (lo - mu) / sg, (hi - mu) / sg,
                                      loc=mu, scale=sg)
            else:
                for j in np.flatnonzero(cat):
                    dens *= tp.cat_probs[int(j)][leaf, int(row[j])]
            acc.append(dens)
        mean = np.mean(acc)
        out[i] = math.log(mean) if mean > 0 else -math.inf
    return out


def test_log_density_matches_reference():
    ds, model = fit_small_model(seed=3)
    X = ds.matrix()[:40]
    got = log_density(model, X)
    want = slow_log_density(model, X)
    np.testing.assert_allclose(got, want, rtol=1e-9)


def test_log_density_mixed_matches_reference():
    ds = mixed_ds(seed=4)
    arf = arf_fit(ds, ArfConfig(forest=ForestConfig(num_trees=4),
                                max_iters=3, seed=4))
    model = forde_fit(arf, ds)
    X = ds.matrix()[:30]
    np.testing.assert_allclose(log_density(model, X),
                               slow_log_density(model, X), rtol=1e-9)


def test_log_density_out_of_support_is_zero():
    ds, model = fit_small_model(seed=5)
    row = ds.matrix()[0].copy()
    row[0] = ds.column("x1").max() + 10.0  # beyond every clipped bound
    assert log_density(model, row[None, :])[0] == -math.inf


def test_log_density_chunking_is_invisible():
    ds, model = fit_small_model(seed=6)
    X = ds.matrix()[:50]
    np.testing.assert_array_equal(log_density(model, X, chunk=7),
                                  log_density(model, X))


def test_log_density_checks_schema():
    ds, model = fit_small_model(seed=7)
    with pytest.raises(ValueError):
        log_density(model, mixed_ds())


def test_categorical_only_density_sums_to_one():
    rng = np.random.default_rng(8)
    n = 400
    a = rng.integers(0, 2, n).astype(np.int64)
    b = ((a + rng.integers(0, 2, n)) % 2).astype(np.int64)
    c = rng.integers(0, 3, n).astype(np.int64)
    schema = Schema((Column("a", CATEGORICAL, ("0", "1")),
                     Column("b", CATEGORICAL, ("0", "1")),
                     Column("c", CATEGORICAL, ("0", "1", "2"))))
    ds = Dataset(schema, [a, b, c])
    arf = arf_fit(ds, ArfConfig(forest=ForestConfig(num_trees=8),
                                max_iters=3, seed=8))
    model = forde_fit(arf, ds)
    grid = np.array([[i, j, k] for i in range(2) for j in range(2)
                     for k in range(3)], dtype=np.float64)
    total = np.exp(log_density(model, grid)).sum()
    np.testing.assert_allclose(total, 1.0, rtol=1e-9)


def test_nll_from_log_density_folding():
    ld = np.log(np.array([0.5, 0.25, 0.125]))
    r = nll_from_log_density(ld)
    vals = -ld
    np.testing.assert_allclose(r.mean, vals.mean())
    np.testing.assert_allclose(r.se, vals.std(ddof=1) / math.sqrt(3))
    assert r.n_rows == 3 and r.n_zero == 0
    assert str(r).startswith("nll ") and "3 rows" in str(r)


def test_nll_zero_density_handling():
    ld = np.array([math.log(0.5), -math.inf])
    r = nll_from_log_density(ld)
    assert r.n_zero == 1 and r.n_rows == 2
    np.testing.assert_array_equal(r.zero_rows, [1])
    np.testing.assert_allclose(r.mean, -math.log(0.5))
    floored = nll_from_log_density(ld, zero_floor=True)
    assert floored.mean > 300  # -log(1e-300) dominates
    all_zero = nll_from_log_density(np.array([-math.inf]))
    assert math.isinf(all_zero.mean)
    with pytest.raises(ValueError):
        nll_from_log_density(np.array([]))


def test_nll_wrapper_matches_log_density():
    ds, model = fit_small_model(seed=9)
    r = nll(model, ds.take(range(25)))
    ld = log_density(model, ds.take(range(25)))
    np.testing.assert_allclose(r.mean, float(np.mean(-ld)))
    assert r.n_rows == 25
