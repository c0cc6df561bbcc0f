"""Identification and inference for the assorting weights and heterogeneity.

Three routes from data to parameters:

* ``nonparametric_surplus``: ``log pi_hat`` with its additive part removed
  estimates the surplus up to scale (sigma = 1).
* ``sp_estimator``: weighted least squares of that surplus on the basis.
* ``mm_estimator``: moment matching, i.e. the maximizer of
  ``lam . C_hat - W(lam, 1)``, rescaled so that ``sigma * I = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .anova import project_many, residual_covariance
from .entropic import solve_ipfp
from .exceptions import ConfigError, IdentificationError
from .geometry import legendre_maximize
from .model import Margins, Theta, build_surplus, zmoi_normalize

ZERO_INFORMATION = 1e-12


def cross_difference(F, x, y, x2, y2):
    """``F(x2, y2) - F(x2, y) - F(x, y2) + F(x, y)``."""
    F = np.asarray(F)
    tx, ty = F.shape
    for i, n in ((x, tx), (x2, tx), (y, ty), (y2, ty)):
        if not 0 <= i < n:
            raise ConfigError(f"index {i} out of range [0, {n})")
    return float(F[x2, y2] - F[x2, y] - F[x, y2] + F[x, y])


def all_cross_differences(F):
    """Array ``D[x, y, x2, y2]`` of every cross-difference of ``F``."""
    F = np.asarray(F, dtype=float)
    return F[None, None, :, :] - F.T[None, :, :, None] - F[:, None, None, :] + F[:, :, None, None]


# ---------------------------------------------------------------------------
# Nonparametric and minimum-distance routes
# ---------------------------------------------------------------------------


def _smoothed(pi_hat, pseudo_count, n):
    pi_hat = np.asarray(pi_hat, dtype=float)
    if pseudo_count is None:
        return pi_hat
    if n is None:
        raise ConfigError("pseudo_count requires the sample size n")
    counts = pi_hat * n + pseudo_count / pi_hat.size
    return counts / counts.sum()


def nonparametric_surplus(pi_hat, margins=None, *, pseudo_count=None, n=None):
    """Surplus estimate at sigma = 1: ``log pi_hat`` with additive parts removed.

    The additive indeterminacy is resolved by the zero-conditional-mean
    convention under ``p x q``. Empty cells make the log undefined; they raise
    unless ``pseudo_count`` (a total of ``pseudo_count`` extra couples spread
    evenly over cells, requiring ``n``) is given, which biases small samples.
    """
    pi = _smoothed(pi_hat, pseudo_count, n)
    if margins is None:
        margins = Margins(pi.sum(axis=1), pi.sum(axis=0))
    margins.require_positive()
    empty = int(np.count_nonzero(pi <= 0))
    if empty:
        raise IdentificationError(f"{empty} empty cell(s) in the observed matching; "
                                  "log-surplus undefined (use a pseudo-count)")
    return zmoi_normalize(np.log(pi), margins)[0]


def sp_estimator(pi_hat, basis, margins=None, *, pseudo_count=None, n=None):
    """Minimum-distance estimate of the weights at sigma = 1.

    Weighted least squares of the nonparametric surplus on the
    additive-free basis tables, with weights ``p_hat x q_hat``.

    Returns
    -------
    lam : array, shape (K,)
    fit_stat : float
        Weighted residual sum of squares; zero when the surplus lies in the
        span of the basis.
    """
    pi = _smoothed(pi_hat, pseudo_count, n)
    if margins is None:
        margins = Margins(pi.sum(axis=1), pi.sum(axis=0))
    phi_hat = nonparametric_surplus(pi, margins)
    design = np.stack([zmoi_normalize(t, margins)[0] for t in basis.tables])
    w = np.sqrt(margins.product).ravel()
    X = (design.reshape(basis.K, -1) * w).T
    y = phi_hat.ravel() * w
    rank = np.linalg.matrix_rank(X, tol=1e-10 * max(1.0, np.abs(X).max()))
    if rank < basis.K:
        raise IdentificationError(f"basis is collinear after removing additive parts (rank {rank} < K = {basis.K})")
    lam, *_ = np.linalg.lstsq(X, y, rcond=None)
    fit = float(np.sum((y - X @ lam) ** 2))
    return lam, fit


# ---------------------------------------------------------------------------
# Score and Fisher information
# ---------------------------------------------------------------------------


def _solve(theta, basis, margins, tol):
    if theta.sigma <= 0:
        raise ConfigError("sigma must be > 0")
    return solve_ipfp(build_surplus(basis, theta.weights), margins, theta.sigma, tol, strict=True)


def score(theta, basis, margins, tol=1e-12):
    """Derivatives of ``log pi`` with respect to each weight, shape ``(K, Tx, Ty)``.

    Each is the ANOVA residual of the basis table under the optimal matching,
    divided by sigma.
    """
    sol = _solve(theta, basis, margins, tol)
    return np.stack([d.residual for d in project_many(basis.tables, sol.pi)]) / theta.sigma


def _fisher_score(pi, basis, sigma):
    return residual_covariance(basis.tables, pi) / sigma**2


def _weighted_cov(tables, pi):
    t = tables.reshape(tables.shape[0], -1)
    w = np.asarray(pi).ravel()
    mean = t @ w
    tc = t - mean[:, None]
    return (tc * w) @ tc.T


def _fisher_cov(pi, basis, sigma):
    decomps = project_many(basis.tables, pi)
    proj = np.stack([d.additive for d in decomps])
    return (_weighted_cov(basis.tables, pi) - _weighted_cov(proj, pi)) / sigma**2


def fisher_information(theta, basis, margins, tol=1e-12, method="score"):
    """Fisher information of the weights at ``theta``.

    ``method="score"`` averages products of score functions; ``"covariance"``
    uses ``(cov(phi) - cov(P phi)) / sigma**2`` with ``P`` the additive
    projector. The two agree up to rounding.
    """
    sol = _solve(theta, basis, margins, tol)
    if method == "score":
        return _fisher_score(sol.pi, basis, theta.sigma)
    if method == "covariance":
        return _fisher_cov(sol.pi, basis, theta.sigma)
    raise ConfigError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# Moment matching
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EstimationResult:
    lambda_hat: np.ndarray
    I_hat: float
    Lambda_hat: np.ndarray
    sigma_hat: float
    fisher: np.ndarray
    avar: np.ndarray
    avar_efficient: np.ndarray
    std_errors: np.ndarray
    std_errors_efficient: np.ndarray
    N: int
    C_hat: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def theta(self):
        return Theta(self.Lambda_hat, self.sigma_hat)


def mm_estimator(C_hat, basis, margins, N, tol=1e-8, max_iter=200):
    """Moment-matching estimator.

    Parameters
    ----------
    C_hat : array, shape (K,)
        Observed covariations.
    basis : BasisSet
    margins : Margins
        Type distributions entering the welfare function, usually the
        empirical ones.
    N : int
        Sample size, used only to scale standard errors.

    Returns
    -------
    EstimationResult
        ``lambda_hat`` solves ``C(lambda_hat, 1) = C_hat``; ``I_hat`` is the
        maximized value. The normalized estimates are ``lambda_hat / I_hat``
        and ``1 / I_hat``. ``avar`` is the sandwich
        ``F^-1 cov(phi) F^-1`` (fluctuation of ``C_hat`` with the margins
        held fixed); ``avar_efficient`` is ``F^-1``, the variance when the
        margins are re-estimated from the same sample.
    """
    res = legendre_maximize(C_hat, basis, margins, tol, max_iter)
    I_hat = res.value
    if I_hat <= ZERO_INFORMATION:
        raise IdentificationError("zero mutual information: sigma unidentified at random matching")
    pi = res.solution.pi
    fisher = _fisher_score(pi, basis, 1.0)
    cov_phi = _weighted_cov(basis.tables, pi)
    try:
        finv = np.linalg.inv(fisher)
    except np.linalg.LinAlgError:
        raise IdentificationError("singular Fisher information: basis is collinear after removing "
                                  "additive parts") from None
    avar = finv @ cov_phi @ finv
    se = np.sqrt(np.diag(avar) / N)
    se_eff = np.sqrt(np.diag(finv) / N)
    diagnostics = {
        "iterations": res.iterations,
        "gradient_norm": res.gradient_norm,
        "marginal_residual": res.solution.marginal_residual,
        "solver_iterations": res.solution.iterations,
    }
    return EstimationResult(res.lam, I_hat, res.lam / I_hat, 1.0 / I_hat, fisher, avar, finv,
                            se, se_eff, int(N), np.asarray(C_hat, dtype=float), diagnostics)
