"""Geometry of feasible covariations.

The covariogram is the polytope of covariation vectors ``C(pi)`` reachable by
couplings of the margins; its support function is the homogeneous welfare
``W0``. With heterogeneity, ``W(lam, 1)`` is smooth and its convex conjugate

    I_r(C) = sup_lam  lam . C - W(lam, 1)

is the smallest mutual information that rationalizes covariations ``C``.
Here ``W(lam, 1)`` is the entropic objective ``max_pi lam . C(pi) - I(pi)``;
the split-dependent entropy constants are left out so that ``I_r(C_inf) = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .anova import residual_covariance
from .entropic import solve_ipfp
from .exceptions import ConfigError, ConvergenceError, IdentificationError
from .homogeneous import solve_lp
from .model import build_surplus, covariations

BOUNDARY_NORM = 1e6


@dataclass(frozen=True)
class CovariogramPoint:
    direction: np.ndarray
    C0: np.ndarray
    W0: float
    pi0: np.ndarray = field(repr=False)
    is_unique_hint: bool = True


@dataclass(frozen=True)
class CovariogramTrace:
    points: tuple
    C_inf: np.ndarray
    names: tuple = ()

    def __len__(self):
        return len(self.points)

    @property
    def directions(self):
        return np.array([pt.direction for pt in self.points])

    @property
    def vertices(self):
        return np.array([pt.C0 for pt in self.points])

    @property
    def support_values(self):
        return np.array([pt.W0 for pt in self.points])


@dataclass(frozen=True)
class SummaryPath:
    weights: np.ndarray
    sigmas: np.ndarray
    C: np.ndarray
    I: np.ndarray
    objective: np.ndarray
    C_inf: np.ndarray


@dataclass(frozen=True)
class LegendreResult:
    value: float
    lam: np.ndarray
    solution: object = field(repr=False)
    iterations: int = 0
    gradient_norm: float = 0.0


def circle_directions(n=360):
    """``n`` evenly spaced unit vectors in the plane."""
    t = 2 * np.pi * np.arange(n) / n
    return np.column_stack([np.cos(t), np.sin(t)])


def product_covariations(basis, margins):
    """Covariations ``C_inf`` of random matching ``p x q``."""
    return covariations(margins.product, basis)


def trace_covariogram(basis, margins, directions=None):
    """Support points of the covariogram along each direction.

    For each ``lam`` in ``directions`` the homogeneous problem with surplus
    ``sum_k lam_k phi_k`` is solved and its covariations recorded. For K = 2
    the default is 360 directions around the circle.
    """
    if directions is None:
        if basis.K != 2:
            raise ConfigError("directions are required unless K = 2")
        directions = circle_directions()
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    if directions.shape[1] != basis.K or directions.shape[0] == 0:
        raise ConfigError(f"directions must have shape (n, {basis.K})")
    points = []
    for lam in directions:
        sol = solve_lp(build_surplus(basis, lam), margins)
        points.append(CovariogramPoint(lam.copy(), covariations(sol.pi0, basis), sol.W0, sol.pi0,
                                       sol.is_unique_hint))
    return CovariogramTrace(tuple(points), product_covariations(basis, margins), basis.names)


def summary_path(basis, margins, weights, sigmas, tol=1e-10, max_iter=1_000_000):
    """Covariations and mutual information of the optimal matching along a
    sigma grid, for fixed assorting weights."""
    sigmas = np.asarray(sigmas, dtype=float)
    if sigmas.ndim != 1 or sigmas.size == 0 or np.any(sigmas <= 0):
        raise ConfigError("sigma grid must be a nonempty vector of positive values")
    d = np.diff(sigmas)
    if not (np.all(d > 0) or np.all(d < 0)):
        raise ConfigError("sigma grid must be strictly sorted")
    phi = build_surplus(basis, weights)
    Cs, Is, objs = [], [], []
    init = None
    for s in sigmas:
        sol = solve_ipfp(phi, margins, s, tol, max_iter, init=init, strict=True)
        init = (sol.u, sol.v + sol.c)
        Cs.append(covariations(sol.pi, basis))
        Is.append(sol.mutual_information)
        objs.append(sol.objective)
    return SummaryPath(np.asarray(weights, dtype=float), sigmas, np.array(Cs), np.array(Is),
                       np.array(objs), product_covariations(basis, margins))


def strict_feasibility_margin(C, basis, margins):
    """Largest ``t`` such that some coupling with covariations ``C`` has every
    cell >= t. Returns ``-inf`` when no coupling reproduces ``C``.

    ``C`` lies in the relative interior of the covariogram iff this is > 0.
    """
    C = np.asarray(C, dtype=float)
    tx, ty = margins.shape
    n = tx * ty
    a = np.zeros((tx + ty + basis.K, n + 1))
    for i in range(tx):
        a[i, i * ty:(i + 1) * ty] = 1.0
    for j in range(ty):
        a[tx + j, j:n:ty] = 1.0
    a[tx + ty:, :n] = basis.tables.reshape(basis.K, n)
    b = np.concatenate([margins.p, margins.q, C])
    # pi_ij - t >= 0
    a_ub = np.hstack([-np.eye(n), np.ones((n, 1))])
    cost = np.zeros(n + 1)
    cost[-1] = -1.0
    res = linprog(cost, A_ub=a_ub, b_ub=np.zeros(n), A_eq=a[1:], b_eq=b[1:],
                  bounds=[(0, None)] * n + [(None, 1.0)], method="highs")
    if res.status != 0:
        return -np.inf
    return float(-res.fun)


def legendre_maximize(C, basis, margins, tol=1e-8, max_iter=200, *, lam0=None, solver_tol=1e-12,
                      check_feasible=True):
    """Maximize ``lam . C - W(lam, 1)`` by damped Newton.

    The gradient is ``C - C(lam, 1)`` and the Hessian is minus the Fisher
    information at ``(lam, 1)``; both come from one entropic solve. Stops when
    the sup-norm of the gradient is <= ``tol``.

    Raises
    ------
    IdentificationError
        ``C`` is not in the relative interior of the covariogram.
    ConvergenceError
        ``max_iter`` Newton steps without reaching ``tol``.
    """
    C = np.asarray(C, dtype=float).ravel()
    if C.size != basis.K:
        raise ConfigError(f"expected {basis.K} covariations, got {C.size}")
    margins.require_positive()
    if check_feasible and strict_feasibility_margin(C, basis, margins) <= 1e-10:
        raise IdentificationError("covariation not strictly feasible: C is outside or on the boundary "
                                  "of the covariogram")

    lam = np.zeros(basis.K) if lam0 is None else np.array(lam0, dtype=float)
    warm = None

    def evaluate(lam, warm):
        sol = solve_ipfp(build_surplus(basis, lam), margins, 1.0, solver_tol, init=warm,
                         anneal=True, strict=True)
        return sol, float(lam @ C - sol.objective), C - covariations(sol.pi, basis)

    sol, val, grad = evaluate(lam, warm)
    for it in range(max_iter + 1):
        gnorm = float(np.abs(grad).max())
        if gnorm <= tol:
            return LegendreResult(val, lam, sol, it, gnorm)
        if it == max_iter:
            break
        hess = residual_covariance(basis.tables, sol.pi)
        step = np.linalg.lstsq(hess, grad, rcond=1e-12)[0]
        slope = float(grad @ step)
        if not slope > 0:
            step, slope = grad, float(grad @ grad)
        warm = (sol.u, sol.v + sol.c)
        t = 1.0
        while True:
            cand = lam + t * step
            if np.linalg.norm(cand) > BOUNDARY_NORM:
                raise IdentificationError("covariation not strictly feasible: weights diverge "
                                          f"(|lam| = {np.linalg.norm(cand):.3g})")
            csol, cval, cgrad = evaluate(cand, warm)
            # near the optimum value changes drown in rounding; a shrinking gradient also counts
            if cval >= val + 1e-4 * t * slope or np.abs(cgrad).max() < 0.5 * gnorm or t < 1e-10:
                break
            t *= 0.5
        if cval < val - 1e-12 * max(1.0, abs(val)) and not np.abs(cgrad).max() < gnorm:
            break
        lam, sol, val, grad = cand, csol, cval, cgrad
    gnorm = float(np.abs(grad).max())
    raise ConvergenceError(f"Legendre maximization stalled with gradient norm {gnorm:.3e}",
                           {"iterations": it, "gradient_norm": gnorm, "lam": lam.tolist()})


def implicit_mutual_information(C, basis, margins, tol=1e-8):
    """Rationalizing mutual information of covariations ``C`` and its maximizer.

    Returns ``(I_r, lam)``; ``lam`` is also the gradient of ``I_r`` at ``C``.
    """
    res = legendre_maximize(C, basis, margins, tol)
    return res.value, res.lam


def random_matchings(margins, n, rng, spread=1.0):
    """``n`` random interior couplings: random positive tables scaled to the margins."""
    out = []
    for _ in range(n):
        logt = spread * rng.standard_normal(margins.shape)
        out.append(solve_ipfp(logt, margins, 1.0, 1e-12, strict=True).pi)
    return out
