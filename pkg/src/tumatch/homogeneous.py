"""The sigma = 0 limit: the optimal transportation linear program.

Solved with the HiGHS dual simplex in :func:`scipy.optimize.linprog`, which
returns a basic (vertex) solution together with the dual prices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .exceptions import ConfigError, ConvergenceError
from .model import Margins, entropy

_SUPPORT_TOL = 1e-12
_REDUCED_COST_TOL = 1e-9


@dataclass(frozen=True)
class HomogeneousSolution:
    pi0: np.ndarray
    u0: np.ndarray
    v0: np.ndarray
    W0: float
    is_unique_hint: bool


def _constraints(tx, ty):
    rows = np.zeros((tx + ty, tx * ty))
    for i in range(tx):
        rows[i, i * ty:(i + 1) * ty] = 1.0
    for j in range(ty):
        rows[tx + j, j::ty] = 1.0
    return rows


def solve_lp(phi, margins):
    """Maximize ``sum(pi * phi)`` over couplings of ``margins``.

    Returns the optimal vertex ``pi0`` with dual prices ``(u0, v0)``,
    normalized by ``E_p u0 = 0``, satisfying ``u0 + v0 >= phi`` everywhere and
    with equality on the support of ``pi0``. ``is_unique_hint`` is False when
    a cell outside the support has zero reduced cost, i.e. the optimum may be
    a face rather than a vertex.
    """
    phi = np.asarray(phi, dtype=float)
    margins.require_positive()
    if phi.shape != margins.shape:
        raise ConfigError(f"surplus shape {phi.shape} does not match margins {margins.shape}")
    if not np.all(np.isfinite(phi)):
        raise ConfigError("surplus has non-finite entries")
    tx, ty = phi.shape
    a_eq = _constraints(tx, ty)
    b_eq = np.concatenate([margins.p, margins.q])
    # one marginal constraint is redundant; drop it so the duals are unique up to the shift we fix below
    res = linprog(-phi.ravel(), A_eq=a_eq[:-1], b_eq=b_eq[:-1], bounds=(0, None), method="highs-ds")
    if res.status != 0:
        raise ConvergenceError(f"transportation LP failed: {res.message}", {"status": res.status})
    pi0 = np.clip(res.x.reshape(tx, ty), 0.0, None)
    duals = -np.concatenate([res.eqlin.marginals, [0.0]])
    u0, v0 = duals[:tx], duals[tx:]
    shift = margins.p @ u0
    u0, v0 = u0 - shift, v0 + shift
    W0 = float(np.sum(pi0 * phi))
    reduced = u0[:, None] + v0[None, :] - phi
    tight = np.abs(reduced) <= _REDUCED_COST_TOL
    candidates = tight & (pi0 <= _SUPPORT_TOL)
    unique = True
    if np.any(candidates):
        # the optimal face is the set of couplings supported on tight cells;
        # pi0 is its only point iff no face point can put mass on a tight zero cell
        bounds = [(0, None) if t else (0, 0) for t in tight.ravel()]
        alt = linprog(-candidates.ravel().astype(float), A_eq=a_eq[:-1], b_eq=b_eq[:-1],
                      bounds=bounds, method="highs-ds")
        unique = alt.status == 0 and -alt.fun <= 1e-9
    return HomogeneousSolution(pi0, u0, v0, W0, bool(unique))


def anneal_check(phi, margins, sigmas, tol=1e-10, max_iter=1_000_000):
    """Entropic objective along a decreasing sigma grid, against the LP value.

    Returns a list of ``(sigma, objective, gap)`` with ``gap = W0 - objective``.
    The gap is nonnegative, shrinks as sigma decreases, and is bounded by
    ``sigma * (S(P) + S(Q))``.
    """
    from .entropic import solve_ipfp

    sigmas = [float(s) for s in sigmas]
    if any(s <= 0 for s in sigmas) or any(b >= a for a, b in zip(sigmas, sigmas[1:])):
        raise ConfigError("sigma grid must be positive and strictly decreasing")
    W0 = solve_lp(phi, margins).W0
    rows = []
    init = None
    for s in sigmas:
        sol = solve_ipfp(phi, margins, s, tol, max_iter, init=init, strict=True)
        init = (sol.u, sol.v + sol.c)
        rows.append((s, sol.objective, W0 - sol.objective))
    return rows


def entropy_bound(margins):
    return entropy(margins.p) + entropy(margins.q)
