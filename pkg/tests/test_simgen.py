import math

import numpy as np
import pytest

from arfkit.simgen import (
    SHAPE_NAMES, ShapeSpec, ToeplitzSpec, gen_logistic_dataset,
    gen_logistic_target, gen_shape, gen_toeplitz_gaussian,
)
from arfkit.tabular import CATEGORICAL, CONTINUOUS


def test_spec_validation():
    with pytest.raises(ValueError):
        ToeplitzSpec(0, 3, 0.5, 0)
    with pytest.raises(ValueError):
        ToeplitzSpec(10, 0, 0.5, 0)
    with pytest.raises(ValueError):
        ToeplitzSpec(10, 3, 1.0, 0)
    with pytest.raises(ValueError):
        ShapeSpec("spiral", 100, 0)
    with pytest.raises(ValueError):
        ShapeSpec("smiley", 3, 0)  # fewer rows than classes


def test_toeplitz_schema_and_determinism():
    spec = ToeplitzSpec(50, 4, 0.7, 3)
    ds = gen_toeplitz_gaussian(spec)
    assert ds.n_rows == 50
    assert ds.schema.names == ["x1", "x2", "x3", "x4"]
    assert all(c.kind == CONTINUOUS for c in ds.schema)
    again = gen_toeplitz_gaussian(spec)
    np.testing.assert_array_equal(ds.matrix(), again.matrix())
    assert not np.array_equal(
        ds.matrix(), gen_toeplitz_gaussian(ToeplitzSpec(50, 4, 0.7, 4)).matrix())


def test_toeplitz_correlation_structure():
    rho = 0.8
    ds = gen_toeplitz_gaussian(ToeplitzSpec(40000, 5, rho, 0))
    X = ds.matrix()
    np.testing.assert_allclose(X.std(axis=0), 1.0, atol=0.02)
    np.testing.assert_allclose(X.mean(axis=0), 0.0, atol=0.02)
    C = np.corrcoef(X.T)
    for lag in (1, 2, 3):
        got = np.mean([C[j, j + lag] for j in range(5 - lag)])
        np.testing.assert_allclose(got, rho ** lag, atol=0.02)


def test_logistic_target_probabilities():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((5000, 3))
    # an overwhelming coefficient makes the label the sign indicator
    y = gen_logistic_target(X, np.array([1e9, 0.0, 0.0]), seed=1)
    np.testing.assert_array_equal(y, (X[:, 0] > 0).astype(np.int64))
    # a zero coefficient vector makes it a fair coin
    y = gen_logistic_target(X, np.zeros(3), seed=2)
    assert abs(y.mean() - 0.5) < 0.03
    with pytest.raises(ValueError):
        gen_logistic_target(X, np.ones(4), seed=0)


def test_logistic_dataset_layout():
    ds = gen_logistic_dataset(500, 6, 0.5, 0.5, seed=5, target="label")
    assert ds.schema.names == [f"x{j}" for j in range(1, 7)] + ["label"]
    tgt = ds.schema[ds.schema.index_of("label")]
    assert tgt.kind == CATEGORICAL and tgt.levels == ("0", "1")
    # informative_fraction 0.5 of d=6 -> beta = (1,1,1,0,0,0); y leans with x1
    y = ds.column("label")
    assert ds.column("x1")[y == 1].mean() > ds.column("x1")[y == 0].mean()
    # features match the plain Toeplitz draw at the same seed
    base = gen_toeplitz_gaussian(ToeplitzSpec(500, 6, 0.5, 5))
    np.testing.assert_array_equal(ds.column("x3"), base.column("x3"))
    with pytest.raises(ValueError):
        gen_logistic_dataset(100, 4, 0.5, 1.2, seed=0)


def test_shape_class_counts_and_levels():
    ds = gen_shape(ShapeSpec("smiley", 1000, 0))
    cls = ds.schema[2]
    assert cls.levels == ("eye_l", "eye_r", "mouth", "nose")
    counts = np.bincount(ds.column("class"), minlength=4)
    np.testing.assert_array_equal(counts, [180, 180, 500, 140])
    ds = gen_shape(ShapeSpec("twomoons", 999, 1))
    counts = np.bincount(ds.column("class"), minlength=2)
    assert counts.sum() == 999 and abs(counts[0] - counts[1]) <= 1


def test_shape_every_class_present_at_small_n():
    for name in SHAPE_NAMES:
        ds = gen_shape(ShapeSpec(name, 5, 0))
        assert len(np.unique(ds.column("class"))) == ds.schema[2].n_levels


def test_twomoons_geometry():
    ds = gen_shape(ShapeSpec("twomoons", 2000, 3))
    x1, x2 = ds.column("x1"), ds.column("x2")
    cls = ds.column("class")
    lower = cls == 0  # levels sort as ("lower", "upper")
    # each point should sit near its moon's unit arc (noise sd 0.1, clipped)
    t = np.linspace(0.0, math.pi, 400)
    upper_arc = np.column_stack([np.cos(t), np.sin(t)])
    lower_arc = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])

    def dist_to(arc, pts):
        d = np.linalg.norm(pts[:, None, :] - arc[None, :, :], axis=2)
        return d.min(axis=1)

    pts = np.column_stack([x1, x2])
    assert dist_to(lower_arc, pts[lower]).max() < 0.6
    assert dist_to(upper_arc, pts[~lower]).max() < 0.6
    assert dist_to(lower_arc, pts[lower]).mean() < 0.15


def test_shape_determinism_and_ranges():
    for name in SHAPE_NAMES:
        spec = ShapeSpec(name, 300, 7)
        a = gen_shape(spec)
        b = gen_shape(spec)
        np.testing.assert_array_equal(a.matrix(), b.matrix())
        assert np.isfinite(a.matrix()).all()
        assert np.abs(a.matrix()[:, :2]).max() < 4.0
