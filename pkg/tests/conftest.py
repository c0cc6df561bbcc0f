import numpy as np
import pytest

from tumatch import BasisSet, Margins, TypeSpace, build_surplus, solve_ipfp

ER_P = np.array([0.25, 0.2, 0.1, 0.15, 0.15, 0.15])
ER_Q = np.array([0.2, 0.2, 0.15, 0.1, 0.15, 0.2])
ER_WEIGHTS = np.array([1.0, 0.8, 0.5])
ER_DIMS = {"educ": ["D", "G"], "income": ["1", "2", "3"]}

CRITERIA = {}


def record(number, ok, detail=""):
    """Store the outcome of an acceptance criterion for the terminal summary."""
    prev = CRITERIA.get(number)
    ok = bool(ok) and (prev is None or prev[0])
    CRITERIA[number] = (ok, detail if not ok or prev is None else prev[1])


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def er_space():
    return TypeSpace.from_dimensions(ER_DIMS)


def er_basis(space=None):
    space = space or er_space()
    return BasisSet.stack([
        BasisSet.diagonal_indicator(space, "educ", "G"),
        BasisSet.diagonal_indicator(space, "income", "1"),
        BasisSet.diagonal_indicator(space, "income", "3"),
    ])


def random_margins(rng, tx, ty):
    return Margins(rng.dirichlet(np.full(tx, 2.0)), rng.dirichlet(np.full(ty, 2.0)))


def battery(n=50, seed=12345, max_size=10):
    """Random (phi, margins, sigma) instances cycling sigma over {0.2, 1, 5}."""
    rng = np.random.default_rng(seed)
    sigmas = (0.2, 1.0, 5.0)
    out = []
    for k in range(n):
        tx, ty = rng.integers(2, max_size + 1, size=2)
        out.append((rng.standard_normal((tx, ty)), random_margins(rng, tx, ty), sigmas[k % 3]))
    return out


@pytest.fixture(scope="session")
def er():
    space = er_space()
    basis = er_basis(space)
    margins = Margins(ER_P, ER_Q)
    sol = solve_ipfp(build_surplus(basis, ER_WEIGHTS), margins, 1.0, 1e-13, strict=True)
    return {"space": space, "basis": basis, "margins": margins, "weights": ER_WEIGHTS, "pi": sol.pi}
