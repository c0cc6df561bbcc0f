"""Two-way ANOVA under an arbitrary weighting matching.

The best additive projector of ``h`` under ``pi`` is ``f(x) + g(y)`` where
``f, g`` minimize ``E_pi[(h - E_pi h - f(X) - g(Y))**2]`` subject to
``E_p f = E_q g = 0``. The residual has zero conditional means given X and
given Y.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, ConvergenceError

# condition numbers above this trigger the backfitting fallback
_MAX_COND = 1e12


@dataclass(frozen=True)
class AnovaDecomposition:
    mean: float
    f: np.ndarray
    g: np.ndarray
    residual: np.ndarray
    weights: np.ndarray
    converged: bool = True
    iterations: int = 0
    method: str = "direct"

    @property
    def additive(self):
        """The projection ``f(x) + g(y)`` as a table."""
        return self.f[:, None] + self.g[None, :]


def _weights(pi):
    pi = np.asarray(pi, dtype=float)
    if pi.ndim != 2:
        raise ConfigError("weights must be a 2-D matching")
    p, q = pi.sum(axis=1), pi.sum(axis=0)
    if np.any(p <= 0) or np.any(q <= 0):
        raise ConfigError("weighting matching has a zero-mass row or column")
    return pi, p, q


def _conditional_violation(resid, pi, p, q):
    rows = np.abs(np.einsum("...ij,ij->...i", resid, pi) / p).max(initial=0.0)
    cols = np.abs(np.einsum("...ij,ij->...j", resid, pi) / q).max(initial=0.0)
    return max(rows, cols)


def _direct(ht, pi, p, q):
    """Normal equations with the E_p f = 0 constraint bordered on."""
    tx, ty = pi.shape
    n = tx + ty
    m = np.zeros((n + 1, n + 1))
    m[:tx, :tx] = np.diag(p)
    m[:tx, tx:n] = pi
    m[tx:n, :tx] = pi.T
    m[tx:n, tx:n] = np.diag(q)
    m[:tx, n] = p
    m[n, :tx] = p
    if np.linalg.cond(m) > _MAX_COND:
        return None
    rhs = np.zeros((n + 1, ht.shape[0]))
    rhs[:tx] = np.einsum("kij,ij->ik", ht, pi)
    rhs[tx:n] = np.einsum("kij,ij->jk", ht, pi)
    sol = np.linalg.solve(m, rhs)
    return sol[:tx].T, sol[tx:n].T


def _backfit(ht, pi, p, q, tol, max_iter):
    k = ht.shape[0]
    f = np.zeros((k, pi.shape[0]))
    g = np.zeros((k, pi.shape[1]))
    for it in range(1, max_iter + 1):
        f_new = np.einsum("kij,ij->ki", ht - g[:, None, :], pi) / p
        g_new = np.einsum("kij,ij->kj", ht - f_new[:, :, None], pi) / q
        delta = max(np.abs(f_new - f).max(), np.abs(g_new - g).max())
        f, g = f_new, g_new
        if delta <= tol:
            break
    shift = f @ p
    return f - shift[:, None], g + shift[:, None], it


def project_many(hs, pi, tol=1e-12, max_iter=100_000):
    """Decompose a stack of tables ``hs`` of shape ``(K, Tx, Ty)`` at once."""
    pi, p, q = _weights(pi)
    hs = np.asarray(hs, dtype=float)
    if hs.ndim == 2:
        hs = hs[None]
    if hs.shape[1:] != pi.shape:
        raise ConfigError(f"table shape {hs.shape[1:]} does not match weights {pi.shape}")
    means = np.einsum("kij,ij->k", hs, pi)
    ht = hs - means[:, None, None]

    scale = max(1.0, float(np.abs(ht).max(initial=0.0)))
    method, iterations = "direct", 0
    fg = _direct(ht, pi, p, q)
    if fg is not None:
        f, g = fg
        g = g - (g @ q)[:, None]
        resid = ht - f[:, :, None] - g[:, None, :]
        if _conditional_violation(resid, pi, p, q) > 1e-8 * scale:
            fg = None
    if fg is None:
        method = "backfitting"
        f, g, iterations = _backfit(ht, pi, p, q, tol, max_iter)
        resid = ht - f[:, :, None] - g[:, None, :]
    violation = _conditional_violation(resid, pi, p, q)
    if violation > 1e-8 * scale:
        raise ConvergenceError(
            f"ANOVA projection did not converge (conditional-mean violation {violation:.3e})",
            {"violation": violation, "iterations": iterations},
        )
    return [
        AnovaDecomposition(float(means[k]), f[k], g[k], resid[k], pi, True, iterations, method)
        for k in range(hs.shape[0])
    ]


def project(h, pi, tol=1e-12, max_iter=100_000):
    """Two-way ANOVA decomposition of ``h`` with weights ``pi``.

    Parameters
    ----------
    h : array, shape (Tx, Ty)
        Table to decompose.
    pi : array, shape (Tx, Ty)
        Weighting matching; every row and column must carry positive mass.
    tol, max_iter
        Only used by the backfitting fallback.

    Returns
    -------
    AnovaDecomposition
        ``h = mean + f[:, None] + g[None, :] + residual``.
    """
    h = np.asarray(h, dtype=float)
    if h.ndim != 2:
        raise ConfigError("h must be a 2-D table")
    return project_many(h[None], pi, tol, max_iter)[0]


def residual_covariance(tables, pi):
    """``E_pi[eps_k eps_l]`` for the ANOVA residuals of each table in ``tables``.

    Divided by ``sigma**2`` this is the Fisher information of the assorting
    weights.
    """
    decomps = project_many(tables, pi)
    resid = np.stack([d.residual for d in decomps])
    return np.einsum("kij,lij,ij->kl", resid, resid, np.asarray(pi, dtype=float))
