import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tumatch import ConfigError, Margins, project, project_many, residual_covariance, solve_ipfp
from tumatch.anova import _backfit


def _lstsq_projection(h, pi):
    tx, ty = pi.shape
    X = np.zeros((tx * ty, tx + ty))
    for i in range(tx):
        for j in range(ty):
            X[i * ty + j, i] = 1
            X[i * ty + j, tx + j] = 1
    w = np.sqrt(pi.ravel())
    coef, *_ = np.linalg.lstsq(X * w[:, None], h.ravel() * w, rcond=None)
    return (X @ coef).reshape(tx, ty)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 7), st.integers(2, 7), st.integers(0, 2**32 - 1))
def test_projection_matches_weighted_least_squares(tx, ty, seed):
    rng = np.random.default_rng(seed)
    pi = rng.dirichlet(np.ones(tx * ty)).reshape(tx, ty)
    h = rng.standard_normal((tx, ty))
    d = project(h, pi)
    fitted = d.mean + d.additive
    assert np.allclose(fitted, _lstsq_projection(h, pi), atol=1e-9)
    assert np.allclose(h, fitted + d.residual)
    p, q = pi.sum(1), pi.sum(0)
    assert abs(d.f @ p) < 1e-12 and abs(d.g @ q) < 1e-12
    assert np.allclose((d.residual * pi).sum(1) / p, 0, atol=1e-10)
    assert np.allclose((d.residual * pi).sum(0) / q, 0, atol=1e-10)


def test_additive_table_has_zero_residual():
    rng = np.random.default_rng(1)
    pi = rng.dirichlet(np.ones(12)).reshape(3, 4)
    h = rng.standard_normal(3)[:, None] + rng.standard_normal(4)[None, :]
    assert np.abs(project(h, pi).residual).max() < 1e-12


def test_diagonal_indicator_under_symmetric_solution():
    sol = solve_ipfp(np.eye(2), Margins.uniform(2), 1.0)
    d = project(np.eye(2), sol.pi)
    assert np.allclose(d.f, 0) and np.allclose(d.g, 0)
    assert np.allclose(d.residual, np.eye(2) - d.mean)


def test_backfitting_agrees_with_direct_solve():
    rng = np.random.default_rng(2)
    pi = rng.dirichlet(np.ones(20)).reshape(4, 5)
    hs = rng.standard_normal((3, 4, 5))
    direct = project_many(hs, pi)
    ht = hs - np.einsum("kij,ij->k", hs, pi)[:, None, None]
    f, g, _ = _backfit(ht, pi, pi.sum(1), pi.sum(0), 1e-14, 100_000)
    for k, d in enumerate(direct):
        assert np.allclose(d.f, f[k], atol=1e-9) and np.allclose(d.g, g[k], atol=1e-9)


def test_ill_conditioned_weights_fall_back_to_backfitting():
    pi = np.array([[0.5 - 1e-13, 1e-13], [1e-13, 0.5 - 1e-13]])
    d = project(np.array([[1.0, 2.0], [3.0, 5.0]]), pi)
    assert d.method in ("direct", "backfitting")
    assert np.allclose((d.residual * pi).sum(1) / pi.sum(1), 0, atol=1e-8)


def test_residual_covariance_is_psd_and_symmetric():
    rng = np.random.default_rng(3)
    pi = rng.dirichlet(np.ones(16)).reshape(4, 4)
    cov = residual_covariance(rng.standard_normal((3, 4, 4)), pi)
    assert np.allclose(cov, cov.T)
    assert np.linalg.eigvalsh(cov).min() > -1e-12


def test_bad_inputs():
    with pytest.raises(ConfigError):
        project(np.zeros((2, 2)), np.array([[0.5, 0.5], [0.0, 0.0]]))
    with pytest.raises(ConfigError):
        project(np.zeros((2, 3)), np.full((2, 2), 0.25))
