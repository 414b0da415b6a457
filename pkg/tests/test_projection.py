"""Projection generators, the JL bound, and the triplet representation."""

import numpy as np
import pytest

from spar.errors import ConfigError, DataError
from spar.families import fit_penalized_glm
from spar.projection import (
    ProjectionMatrix,
    RpSpec,
    draw_goal_dims,
    gen_cw,
    gen_gaussian,
    gen_haar,
    gen_haar_select,
    gen_sparse,
    jl_min_dim,
    make_projection,
    project,
    register_rp_plugin,
)


def test_jl_min_dim_frozen_values():
    assert jl_min_dim(100, 0.5, 1.0) == 332
    assert jl_min_dim(50, 0.5, 1.0) == 282
    # ln(e) = 1 makes the bound exactly 6 / (1/12) = 72
    assert jl_min_dim(int(np.ceil(np.e)), 0.5, 1.0) >= 72
    with pytest.raises(ConfigError):
        jl_min_dim(10, 0.0, 1.0)
    with pytest.raises(ConfigError):
        jl_min_dim(10, 1.5, 1.0)


def test_draw_goal_dims_range_and_determinism():
    rng = np.random.default_rng(0)
    dims = draw_goal_dims(500, 3, 9, rng)
    assert dims.min() >= 3 and dims.max() <= 9
    assert set(np.unique(dims)) == set(range(3, 10))
    a = draw_goal_dims(10, 2, 5, np.random.default_rng(4))
    b = draw_goal_dims(10, 2, 5, np.random.default_rng(4))
    assert np.array_equal(a, b)
    with pytest.raises(ConfigError):
        draw_goal_dims(1, 5, 4, rng)
    with pytest.raises(ConfigError):
        draw_goal_dims(1, 0, 4, rng)


def test_gen_gaussian_moments():
    phi = gen_gaussian(200, 300, np.random.default_rng(1))
    vals = phi.to_dense().ravel()
    n = vals.size
    assert abs(vals.mean()) < 3.0 / np.sqrt(n)
    assert abs(vals.var() - 1.0) < 3.0 * np.sqrt(2.0 / n)


def test_gen_sparse_value_law():
    phi = gen_sparse(100, 200, 1.0, np.random.default_rng(2))
    vals = phi.to_dense().ravel()
    assert set(np.unique(vals)) == {-1.0, 1.0}

    psi = 0.5
    phi = gen_sparse(100, 200, psi, np.random.default_rng(3))
    vals = phi.to_dense().ravel()
    scale = 1.0 / np.sqrt(psi)
    assert set(np.unique(vals)) <= {-scale, 0.0, scale}
    frac_nonzero = np.mean(vals != 0.0)
    assert abs(frac_nonzero - psi) < 3.0 * np.sqrt(psi * (1 - psi) / vals.size)
    with pytest.raises(ConfigError):
        gen_sparse(5, 5, 0.0, np.random.default_rng(0))
    with pytest.raises(ConfigError):
        gen_sparse(5, 5, 1.1, np.random.default_rng(0))


def test_gen_cw_structure():
    m, q = 7, 40
    phi = gen_cw(m, q, False, None, np.random.default_rng(4))
    dense = phi.to_dense()
    # exactly one nonzero per column, valued +-1 for the data-agnostic variant
    assert np.all((dense != 0).sum(axis=0) == 1)
    assert set(np.unique(dense[dense != 0])) == {-1.0, 1.0}

    diag = np.arange(1.0, q + 1.0)
    phi = gen_cw(m, q, True, diag, np.random.default_rng(5))
    dense = phi.to_dense()
    assert np.all((dense != 0).sum(axis=0) <= 1)
    assert np.allclose(np.abs(dense).sum(axis=0), np.abs(diag))
    with pytest.raises(ConfigError):
        gen_cw(m, q, True, None, np.random.default_rng(6))


def test_gen_cw_single_row_collapses_to_diag():
    diag = np.array([2.0, -3.0, 0.5])
    phi = gen_cw(1, 3, True, diag, np.random.default_rng(7))
    assert np.allclose(phi.to_dense(), diag.reshape(1, 3))


def test_gen_haar_orthonormal_rows():
    phi = gen_haar(6, 15, np.random.default_rng(8))
    dense = phi.to_dense()
    assert np.max(np.abs(dense @ dense.T - np.eye(6))) < 1e-10
    with pytest.raises(ConfigError):
        gen_haar(16, 15, np.random.default_rng(8))


def test_gen_haar_sign_convention_deterministic():
    a = gen_haar(4, 9, np.random.default_rng(9)).to_dense()
    b = gen_haar(4, 9, np.random.default_rng(9)).to_dense()
    assert np.array_equal(a, b)


def test_haar_select_b2_one_matches_gen_haar():
    rng_data = np.random.default_rng(10)
    x = rng_data.standard_normal((24, 9))
    y = rng_data.standard_normal(24)
    a = gen_haar_select(4, 9, x, y, "gaussian", 1, 0.25, 0.0, np.random.default_rng(77))
    b = gen_haar(4, 9, np.random.default_rng(77))
    assert np.array_equal(a.to_dense(), b.to_dense())


def test_haar_select_picks_holdout_argmin():
    """Replicate candidate draws and the split; expect the same winner."""
    rng_data = np.random.default_rng(11)
    n, q, m, b2, frac = 32, 8, 3, 5, 0.25
    x = rng_data.standard_normal((n, q))
    y = x @ rng_data.standard_normal(q) + 0.2 * rng_data.standard_normal(n)

    chosen = gen_haar_select(m, q, x, y, "gaussian", b2, frac, 0.1, np.random.default_rng(55))

    rng = np.random.default_rng(55)
    candidates = [gen_haar(m, q, rng) for _ in range(b2)]
    n_test = int(round(frac * n))
    test = np.sort(rng.choice(n, size=n_test, replace=False))
    train = np.setdiff1d(np.arange(n), test)
    errs = []
    for cand in candidates:
        fit = fit_penalized_glm(cand.matmul(x[train]), y[train], "gaussian", 0.1)
        mu = fit.gamma0 + cand.matmul(x[test]) @ fit.gamma
        errs.append(float(np.mean((y[test] - mu) ** 2)))
    expect = candidates[int(np.argmin(errs))]
    assert np.array_equal(chosen.to_dense(), expect.to_dense())


def test_haar_select_refuses_tiny_holdout():
    # round(0.25 * 5) = 1 held-out row is below the minimum of 2
    x = np.random.default_rng(12).standard_normal((5, 4))
    with pytest.raises(ConfigError):
        gen_haar_select(2, 4, x, np.zeros(5), "gaussian", 3, 0.25, 0.0, np.random.default_rng(0))


def test_project_matches_dense_product():
    rng = np.random.default_rng(13)
    x = rng.standard_normal((20, 30))
    for phi in (
        gen_cw(6, 30, False, None, np.random.default_rng(14)),
        gen_sparse(6, 30, 0.3, np.random.default_rng(15)),
        gen_gaussian(6, 30, np.random.default_rng(16)),
    ):
        assert np.max(np.abs(project(x, phi) - x @ phi.to_dense().T)) < 1e-12


def test_backmap_matches_dense_transpose():
    rng = np.random.default_rng(17)
    gamma = rng.standard_normal(5)
    phi = gen_cw(5, 12, False, None, np.random.default_rng(18))
    assert np.allclose(phi.backmap(gamma), phi.to_dense().T @ gamma)


def test_with_column_values_shares_structure():
    phi = gen_cw(4, 10, True, np.ones(10), np.random.default_rng(19))
    new = phi.with_column_values(np.arange(10.0))
    assert np.array_equal(new.rows, phi.rows)
    assert np.array_equal(new.cols, phi.cols)
    assert np.allclose(np.abs(new.vals), np.abs(np.arange(10.0)))
    dense = gen_gaussian(3, 5, np.random.default_rng(20))
    with pytest.raises(ConfigError):
        dense.with_column_values(np.ones(5))


def test_triplets_roundtrip():
    phi = gen_cw(5, 11, False, None, np.random.default_rng(21))
    rows, cols, vals = phi.triplets()
    rebuilt = np.zeros((phi.m, phi.q))
    rebuilt[rows, cols] = vals
    assert np.array_equal(rebuilt, phi.to_dense())


def test_rp_spec_validation_and_resolution():
    with pytest.raises(ConfigError):
        RpSpec(kind="fourier").validated()
    with pytest.raises(ConfigError):
        RpSpec(psi=0.0).validated()
    with pytest.raises(ConfigError):
        RpSpec(mslow=10, msup=5).validated()
    spec = RpSpec().resolved(100, 2000)
    assert spec.mslow == int(np.ceil(np.log(2000)))
    assert spec.msup == 50
    # defaulted lower bound collapses to msup when log p exceeds n/2
    tight = RpSpec().resolved(6, 2000)
    assert tight.mslow == tight.msup == 3


def test_make_projection_dispatch():
    rng = np.random.default_rng(22)
    idx = np.arange(7)
    spec = RpSpec(kind="cw", data_driven=True)
    omega = np.arange(20.0)
    phi = make_projection(spec, 3, idx, np.random.default_rng(1), omega=omega)
    assert np.allclose(np.abs(phi.to_dense()).sum(axis=0), omega[idx])
    with pytest.raises(ConfigError):
        make_projection(spec, 3, idx, rng)  # data-driven needs omega


def test_projection_plugin_normalization():
    def dense_plugin(m, index_set, data, controls):
        return np.full((m, len(index_set)), 2.0)

    register_rp_plugin("all_twos", dense_plugin)
    spec = RpSpec(kind="plugin", plugin="all_twos")
    phi = make_projection(spec, 2, np.arange(4), np.random.default_rng(2))
    assert phi.kind == "plugin"
    assert np.all(phi.to_dense() == 2.0)

    spec_bad = RpSpec(kind="plugin", plugin=lambda m, idx, data, controls: np.ones((m + 1, len(idx))))
    with pytest.raises(DataError):
        make_projection(spec_bad, 2, np.arange(4), np.random.default_rng(3))
    with pytest.raises(ConfigError):
        make_projection(RpSpec(kind="plugin", plugin="missing"), 2, np.arange(4), np.random.default_rng(4))
