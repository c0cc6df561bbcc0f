"""Entropy-regularized optimal matching.

For surplus ``phi`` and total heterogeneity ``sigma > 0`` the optimal matching
is the unique maximizer of ``sum(pi * phi) - sigma * I(pi)`` over couplings
with margins ``(p, q)``. It has the form

    pi(x, y) = p(x) q(y) exp((phi(x, y) - u(x) - v(y) - c) / sigma)

with ``E_p u = E_q v = 0``. The potentials are found by iterative proportional
fitting (Sinkhorn / RAS), run on ``(u, v)`` in the log domain. When the
scaling is slow (small sigma, degenerate surplus) Newton steps on the convex
dual take over.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, ConvergenceError
from .model import Margins, entropy, marginal_residual, mutual_information

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100_000
# IPFP sweeps between Newton attempts when the scaling stalls
NEWTON_AFTER = 2_000


@dataclass(frozen=True)
class EntropicSolution:
    pi: np.ndarray
    u: np.ndarray
    v: np.ndarray
    c: float
    sigma: float
    iterations: int
    marginal_residual: float
    objective: float
    converged: bool
    phi: np.ndarray = field(repr=False)
    margins: Margins = field(repr=False)

    @property
    def mutual_information(self):
        return float((np.sum(self.pi * self.phi) - self.objective) / self.sigma)

    @property
    def log_ratio(self):
        """``log(pi / (p q))``, exact even where ``pi`` underflows."""
        return (self.phi - self.u[:, None] - self.v[None, :] - self.c) / self.sigma


def _lse(a, axis):
    m = a.max(axis=axis, keepdims=True)
    out = np.log(np.exp(a - m).sum(axis=axis, keepdims=True)) + m
    return out.squeeze(axis)


def _check_inputs(phi, margins, sigma):
    phi = np.asarray(phi, dtype=float)
    if phi.shape != margins.shape:
        raise ConfigError(f"surplus shape {phi.shape} does not match margins {margins.shape}")
    if not np.all(np.isfinite(phi)):
        raise ConfigError("surplus has non-finite entries")
    if not sigma > 0:
        raise ConfigError("sigma must be > 0; use homogeneous.solve_lp for sigma = 0")
    margins.require_positive()
    return phi


def _finish(phi, margins, sigma, u, v, iterations, tol, strict):
    p, q = margins.p, margins.q
    # u carries c until here; shift so both potentials have zero mean
    c = float(p @ u + q @ v)
    u = u - p @ u
    v = v - q @ v
    log_ratio = (phi - u[:, None] - v[None, :] - c) / sigma
    pi = np.outer(p, q) * np.exp(log_ratio)
    resid = marginal_residual(pi, margins)
    mi = float(np.sum(pi * log_ratio))
    objective = float(np.sum(pi * phi) - sigma * mi)
    converged = resid <= tol
    sol = EntropicSolution(pi, u, v, c, sigma, iterations, resid, objective, converged, phi, margins)
    if not converged:
        msg = f"IPFP stopped after {iterations} iterations with marginal residual {resid:.3e} > tol {tol:.1e}"
        if strict:
            raise ConvergenceError(msg, {"iterations": iterations, "marginal_residual": resid})
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
    return sol


def _ipfp_log(phi, margins, sigma, tol, max_iter, u, v):
    logp, logq = np.log(margins.p), np.log(margins.q)
    base = phi / sigma + logp[:, None] + logq[None, :]
    it = 0
    while it < max_iter:
        lp = base - (u[:, None] + v[None, :]) / sigma
        col = _lse(lp, axis=0)
        # rows are exact after the previous u step, so columns measure convergence
        if it > 0 and np.abs(np.exp(col) - margins.q).max() <= tol:
            break
        it += 1
        v = v + sigma * (col - logq)
        lp = base - (u[:, None] + v[None, :]) / sigma
        u = u + sigma * (_lse(lp, axis=1) - logp)
    return u, v, it


def _newton(phi, margins, sigma, tol, u, v, max_steps=50):
    """Damped Newton on the dual ``p.u + q.v + sigma * sum(exp(log pi))``.

    Returns ``(u, v, converged)``. The last potential of ``v`` is held fixed
    to remove the constant shift along which the dual is flat.
    """
    p, q = margins.p, margins.q
    tx = p.size
    base = phi / sigma + np.log(p)[:, None] + np.log(q)[None, :]

    def grad(u, v):
        pi = np.exp(base - (u[:, None] + v[None, :]) / sigma)
        return pi, np.concatenate([p - pi.sum(1), q - pi.sum(0)])

    pi, g = grad(u, v)
    for _ in range(max_steps):
        if np.abs(g).max() <= tol:
            return u, v, True
        hess = np.block([[np.diag(pi.sum(1)), pi], [pi.T, np.diag(pi.sum(0))]]) / sigma
        try:
            d = -np.linalg.solve(hess[:-1, :-1], g[:-1])
        except np.linalg.LinAlgError:
            return u, v, False
        d = np.append(d, 0.0)
        t, gnorm = 1.0, g @ g
        while t >= 1e-4:
            un, vn = u + t * d[:tx], v + t * d[tx:]
            pin, gn = grad(un, vn)
            if np.all(np.isfinite(gn)) and gn @ gn < gnorm:
                break
            t *= 0.5
        else:
            return u, v, False
        u, v, pi, g = un, vn, pin, gn
    return u, v, bool(np.abs(g).max() <= tol)


def _solve_log(phi, margins, sigma, tol, max_iter, u, v):
    done = 0
    while True:
        budget = min(NEWTON_AFTER, max_iter - done)
        u, v, it = _ipfp_log(phi, margins, sigma, tol, budget, u, v)
        done += it
        if it < budget or done >= max_iter:
            return u, v, done
        u, v, ok = _newton(phi, margins, sigma, tol, u, v)
        if ok:
            return u, v, done


def _ipfp_kernel(phi, margins, sigma, tol, max_iter, u, v):
    """The multiplicative form: b = q / (K' a), a = p / (K b)."""
    p, q = margins.p, margins.q
    kern = np.outer(p, q) * np.exp(phi / sigma)
    a = np.exp(-u / sigma)
    b = np.exp(-v / sigma)
    it = 0
    while it < max_iter:
        colsum = b * (kern.T @ a)
        if it > 0 and np.abs(colsum - q).max() <= tol:
            break
        it += 1
        b = q / (kern.T @ a)
        a = p / (kern @ b)
    if not (np.all(np.isfinite(a)) and np.all(a > 0) and np.all(np.isfinite(b)) and np.all(b > 0)):
        raise ConvergenceError("kernel IPFP under/overflowed; use the log-domain method", {"iterations": it})
    return -sigma * np.log(a), -sigma * np.log(b), it


def solve_ipfp(phi, margins, sigma, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, *,
               init=None, method="log", anneal=False, strict=False):
    """Solve the entropic matching problem by iterative proportional fitting.

    Parameters
    ----------
    phi : array, shape (Tx, Ty)
        Joint surplus.
    margins : Margins
        Strictly positive type distributions.
    sigma : float
        Total heterogeneity, > 0.
    tol : float
        Stop when the sup-norm of both marginal violations is <= tol.
    max_iter : int
        Iteration cap. On overflow the solution is returned with
        ``converged=False`` and a warning, or a :class:`ConvergenceError` is
        raised when ``strict``.
    init : (u, v), optional
        Warm start for the potentials.
    method : {"log", "kernel"}
        ``"log"`` iterates on the potentials with log-sum-exp; ``"kernel"`` is
        the plain multiplicative scaling, usable at moderate sigma.
    anneal : bool
        Solve along a decreasing sigma sequence, reusing potentials, when sigma
        is small relative to the surplus range.

    Returns
    -------
    EntropicSolution
    """
    phi = _check_inputs(phi, margins, sigma)
    tx, ty = phi.shape
    if init is None:
        u, v = np.zeros(tx), np.zeros(ty)
    else:
        u, v = (np.array(a, dtype=float) for a in init)

    spread = float(phi.max() - phi.min())
    total_iter = 0
    if sigma < 0.01 * spread:
        if anneal:
            s = spread
            while s > sigma * 2:
                u, v, it = _solve_log(phi, margins, s, max(tol, 1e-6), max_iter, u, v)
                total_iter += it
                s /= 2
        else:
            warnings.warn(
                f"sigma={sigma:g} is small relative to the surplus range {spread:g}; "
                "convergence may be slow (consider anneal=True)",
                RuntimeWarning, stacklevel=2,
            )

    if method == "log":
        u, v, it = _solve_log(phi, margins, sigma, tol, max_iter, u, v)
    elif method == "kernel":
        u, v, it = _ipfp_kernel(phi, margins, sigma, tol, max_iter, u, v)
    else:
        raise ConfigError(f"unknown IPFP method {method!r}")
    return _finish(phi, margins, sigma, u, v, total_iter + it, tol, strict)


def _check_split(sigma, split):
    if split is None:
        return sigma / 2, sigma / 2
    s1, s2 = (float(s) for s in split)
    if s1 < 0 or s2 < 0 or not np.isclose(s1 + s2, sigma, rtol=1e-12, atol=0):
        raise ConfigError(f"split {split} does not sum to sigma={sigma}")
    return s1, s2


def welfare(sol, split=None):
    """Social welfare ``objective + s1 S(Q) + s2 S(P)``.

    ``split = (s1, s2)`` is the men/women part of sigma, default even.
    """
    s1, s2 = _check_split(sol.sigma, split)
    return sol.objective + s1 * entropy(sol.margins.q) + s2 * entropy(sol.margins.p)


def welfare_at(pi, phi, margins, sigma, split=None):
    """Dual-side welfare evaluated at an arbitrary feasible matching ``pi``."""
    s1, s2 = _check_split(sigma, split)
    pi = np.asarray(pi, dtype=float)
    return float(np.sum(pi * phi) - sigma * mutual_information(pi, margins)
                 + s1 * entropy(margins.q) + s2 * entropy(margins.p))


def potentials_to_UV(sol, split=None):
    """Mean utilities ``U`` (men) and ``V`` (women) of each match type.

    ``U`` satisfies the logit identity ``pi(x, y) = p(x) softmax_y(U(x, .) / s1)``,
    ``V`` the mirrored one, and ``U + V = phi``. The per-type constants are
    chosen so that ``U`` and ``V`` split ``c`` in proportion ``s1 : s2``.
    """
    s1, s2 = _check_split(sol.sigma, split)
    if s1 <= 0 or s2 <= 0:
        raise ConfigError("both parts of the split must be positive")
    p, q = sol.margins.p, sol.margins.q
    lr = sol.log_ratio
    cu = sol.c * s1 / sol.sigma
    cv = sol.c * s2 / sol.sigma
    # sigma_1 log(pi/p) = s1 (lr + log q); plus the row constant u - s2 log p + cu
    U = s1 * (lr + np.log(q)[None, :]) + (sol.u - s2 * np.log(p) + cu)[:, None]
    V = s2 * (lr + np.log(p)[:, None]) + (sol.v - s1 * np.log(q) + cv)[None, :]
    return U, V


def primal_value(U, V, margins, split):
    """Log-sum-exp welfare bound evaluated at utilities ``(U, V)``.

    Its infimum over ``U + V >= phi`` is the social welfare.
    """
    s1, s2 = (float(s) for s in split)
    if s1 <= 0 or s2 <= 0:
        raise ConfigError("both parts of the split must be positive")
    return float(s1 * margins.p @ _lse(np.asarray(U) / s1, axis=1)
                 + s2 * margins.q @ _lse(np.asarray(V) / s2, axis=0))
