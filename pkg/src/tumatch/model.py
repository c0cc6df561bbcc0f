"""Core domain objects: type spaces, margins, basis functions, matchings and
their summaries, plus the entropy / information measures used everywhere else.

All probability objects are dense float64 arrays. Men index rows, women index
columns.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exceptions import ConfigError

MARGIN_TOL = 1e-12
MATCHING_TOL = 1e-9


def _as_prob(v, name):
    v = np.array(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ConfigError(f"{name} must be a nonempty vector")
    if not np.all(np.isfinite(v)):
        raise ConfigError(f"{name} has non-finite entries")
    if np.any(v < 0):
        raise ConfigError(f"{name} has negative entries")
    if abs(v.sum() - 1.0) > MARGIN_TOL * max(1, v.size):
        raise ConfigError(f"{name} sums to {v.sum()!r}, not 1")
    return v


# ---------------------------------------------------------------------------
# Type spaces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TypeSpace:
    """Ordered categorical types for both sides of the market.

    When ``men_dims`` / ``women_dims`` are given, each label is the tuple of
    levels, enumerated in row-major (``itertools.product``) order over the
    dimensions.
    """

    men_labels: tuple
    women_labels: tuple
    men_dims: Optional[tuple] = None
    women_dims: Optional[tuple] = None

    def __post_init__(self):
        for side, labels in (("men", self.men_labels), ("women", self.women_labels)):
            if len(labels) < 1:
                raise ConfigError(f"{side} type space is empty")
            if len(set(labels)) != len(labels):
                raise ConfigError(f"{side} labels are not unique")
        for labels, dims in ((self.men_labels, self.men_dims), (self.women_labels, self.women_dims)):
            if dims is not None:
                size = int(np.prod([len(levels) for _, levels in dims]))
                if size != len(labels):
                    raise ConfigError("label count does not match the product of dimension sizes")

    @classmethod
    def from_labels(cls, men, women=None):
        women = men if women is None else women
        return cls(tuple(men), tuple(women))

    @classmethod
    def from_dimensions(cls, men, women=None):
        """Build a factor type space from ``{dim_name: [levels, ...]}`` mappings.

        ``women`` defaults to the same dimensions as ``men``.
        """
        women = men if women is None else women
        men_dims = tuple((str(k), tuple(str(l) for l in v)) for k, v in men.items())
        women_dims = tuple((str(k), tuple(str(l) for l in v)) for k, v in women.items())
        men_labels = tuple(itertools.product(*[lv for _, lv in men_dims]))
        women_labels = tuple(itertools.product(*[lv for _, lv in women_dims]))
        return cls(men_labels, women_labels, men_dims, women_dims)

    @property
    def shape(self):
        return len(self.men_labels), len(self.women_labels)

    def dims(self, side):
        dims = self.men_dims if side == "x" else self.women_dims
        if dims is None:
            raise ConfigError("type space has no factor structure")
        return dims

    def index(self, side, label):
        labels = self.men_labels if side == "x" else self.women_labels
        try:
            return labels.index(label)
        except ValueError:
            raise ConfigError(f"unknown {'man' if side == 'x' else 'woman'} type {label!r}") from None

    def level_column(self, side, dim):
        """Per-type level of dimension ``dim`` as an array of strings."""
        dims = self.dims(side)
        names = [d for d, _ in dims]
        if dim not in names:
            raise ConfigError(f"unknown dimension {dim!r}; declared: {names}")
        pos = names.index(dim)
        labels = self.men_labels if side == "x" else self.women_labels
        return np.array([lab[pos] for lab in labels], dtype=object)


# ---------------------------------------------------------------------------
# Margins
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Margins:
    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", _as_prob(self.p, "p"))
        object.__setattr__(self, "q", _as_prob(self.q, "q"))
        self.p.setflags(write=False)
        self.q.setflags(write=False)

    @classmethod
    def uniform(cls, n_men, n_women=None):
        n_women = n_men if n_women is None else n_women
        return cls(np.full(n_men, 1.0 / n_men), np.full(n_women, 1.0 / n_women))

    @property
    def shape(self):
        return self.p.size, self.q.size

    @property
    def product(self):
        return np.outer(self.p, self.q)

    def require_positive(self):
        if np.any(self.p <= 0) or np.any(self.q <= 0):
            raise ConfigError("margins must be strictly positive; use compact() to drop zero-mass types")
        return self


def compact(margins, *tables):
    """Drop zero-mass types.

    Returns the strictly positive margins, the kept row and column indices and
    each table in ``tables`` restricted to them. Tables may be 2-D ``(Tx, Ty)``
    or stacked ``(K, Tx, Ty)``.
    """
    keep_x = np.flatnonzero(margins.p > 0)
    keep_y = np.flatnonzero(margins.q > 0)
    p = margins.p[keep_x] / margins.p[keep_x].sum()
    q = margins.q[keep_y] / margins.q[keep_y].sum()
    out = [np.asarray(t)[..., keep_x, :][..., keep_y] for t in tables]
    return (Margins(p, q), keep_x, keep_y, *out)


# ---------------------------------------------------------------------------
# Basis functions and surplus
# ---------------------------------------------------------------------------


def _level_values(levels):
    """Numeric codes for a dimension: the levels themselves when they all
    parse as numbers, otherwise their position in the declared order."""
    try:
        return np.array([float(l) for l in levels])
    except ValueError:
        return np.arange(len(levels), dtype=float)


@dataclass(frozen=True)
class BasisSet:
    """K basis assorting functions stored as a ``(K, Tx, Ty)`` array."""

    tables: np.ndarray
    names: tuple
    kinds: tuple = field(default=())

    def __post_init__(self):
        t = np.array(self.tables, dtype=float)
        if t.ndim == 2:
            t = t[None]
        if t.ndim != 3 or t.shape[0] < 1:
            raise ConfigError("basis tables must have shape (K, Tx, Ty) with K >= 1")
        if not np.all(np.isfinite(t)):
            raise ConfigError("basis tables have non-finite entries")
        if len(self.names) != t.shape[0]:
            raise ConfigError("one name per basis table required")
        kinds = tuple(self.kinds) or (("dense",),) * t.shape[0]
        if len(kinds) != t.shape[0]:
            raise ConfigError("one kind per basis table required")
        t.setflags(write=False)
        object.__setattr__(self, "tables", t)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "kinds", kinds)

    def __len__(self):
        return self.tables.shape[0]

    @property
    def K(self):
        return self.tables.shape[0]

    @property
    def shape(self):
        return self.tables.shape[1:]

    def __add__(self, other):
        if self.shape != other.shape:
            raise ConfigError("cannot combine bases of different shapes")
        return BasisSet(np.concatenate([self.tables, other.tables]),
                        self.names + other.names, self.kinds + other.kinds)

    # constructors -------------------------------------------------------

    @classmethod
    def dense(cls, table, name="phi"):
        return cls(np.asarray(table, dtype=float)[None], (name,), (("dense",),))

    @classmethod
    def indicator_interaction(cls, i, j, shape, name=None):
        t = np.zeros(shape)
        t[i, j] = 1.0
        return cls(t[None], (name or f"cell_{i}_{j}",), (("indicator_interaction", i, j),))

    @classmethod
    def npoi(cls, shape):
        """One indicator per cell: the fully nonparametric specification."""
        tx, ty = shape
        tables = np.eye(tx * ty).reshape(tx * ty, tx, ty)
        names = tuple(f"cell_{i}_{j}" for i in range(tx) for j in range(ty))
        kinds = tuple(("indicator_interaction", i, j) for i in range(tx) for j in range(ty))
        return cls(tables, names, kinds)

    @classmethod
    def diagonal_indicator(cls, space, dim, level, name=None):
        """1 when both partners have ``level`` on dimension ``dim``.

        ``level=None`` gives the pooled indicator that the partners share the
        same level, whatever it is.
        """
        lx = space.level_column("x", dim)
        ly = space.level_column("y", dim)
        if level is None:
            t = (lx[:, None] == ly[None, :]).astype(float)
        else:
            level = str(level)
            levels = dict(space.dims("x"))[dim]
            if level not in levels:
                raise ConfigError(f"unknown level {level!r} for dimension {dim!r}")
            t = ((lx == level)[:, None] & (ly == level)[None, :]).astype(float)
        default = f"{dim}_match" if level is None else f"{dim}_{level}_{level}"
        return cls(t[None], (name or default,), (("diagonal_indicator", dim, level),))

    @classmethod
    def coordinate_product(cls, space, dim_x, dim_y=None, name=None):
        """Product of the numeric codes of ``dim_x`` (man) and ``dim_y`` (woman)."""
        dim_y = dim_x if dim_y is None else dim_y
        vx = _level_values(dict(space.dims("x"))[dim_x]) if dim_x in dict(space.dims("x")) else None
        vy = _level_values(dict(space.dims("y"))[dim_y]) if dim_y in dict(space.dims("y")) else None
        if vx is None or vy is None:
            raise ConfigError(f"unknown dimension in coordinate_product({dim_x!r}, {dim_y!r})")
        lx = space.level_column("x", dim_x)
        ly = space.level_column("y", dim_y)
        levels_x = list(dict(space.dims("x"))[dim_x])
        levels_y = list(dict(space.dims("y"))[dim_y])
        ax = np.array([vx[levels_x.index(l)] for l in lx])
        ay = np.array([vy[levels_y.index(l)] for l in ly])
        return cls(np.outer(ax, ay)[None], (name or f"{dim_x}_x_{dim_y}",),
                   (("coordinate_product", dim_x, dim_y),))

    @classmethod
    def stack(cls, bases):
        out = bases[0]
        for b in bases[1:]:
            out = out + b
        return out


def build_surplus(basis, weights):
    """Surplus table ``sum_k weights[k] * basis.tables[k]``."""
    weights = np.asarray(weights, dtype=float).ravel()
    if weights.size != basis.K:
        raise ConfigError(f"expected {basis.K} weights, got {weights.size}")
    return np.tensordot(weights, basis.tables, axes=1)


@dataclass(frozen=True)
class Theta:
    """Model parameters: assorting weights and total heterogeneity ``sigma``.

    ``split`` is the (men, women) decomposition of sigma; it only matters for
    welfare levels, never for the optimal matching.
    """

    weights: np.ndarray
    sigma: float
    split: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float).ravel())
        if not self.sigma >= 0:
            raise ConfigError("sigma must be >= 0")
        if self.split is None:
            object.__setattr__(self, "split", (self.sigma / 2, self.sigma / 2))
        s1, s2 = self.split
        if s1 < 0 or s2 < 0 or s1 + s2 != self.sigma:
            raise ConfigError("split must be two nonnegative numbers summing exactly to sigma")


# ---------------------------------------------------------------------------
# Matchings and summaries
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Matching:
    """A joint distribution over (man type, woman type)."""

    pi: np.ndarray

    def __post_init__(self):
        pi = np.array(self.pi, dtype=float)
        if pi.ndim != 2:
            raise ConfigError("a matching is a 2-D table")
        if not np.all(np.isfinite(pi)) or np.any(pi < 0):
            raise ConfigError("matching entries must be finite and nonnegative")
        if abs(pi.sum() - 1.0) > MATCHING_TOL:
            raise ConfigError(f"matching sums to {pi.sum()!r}")
        pi.setflags(write=False)
        object.__setattr__(self, "pi", pi)

    def __array__(self, dtype=None, copy=None):
        return self.pi if dtype is None else self.pi.astype(dtype)

    @property
    def margins(self):
        return Margins(self.pi.sum(axis=1), self.pi.sum(axis=0))

    def check_margins(self, margins, tol=MATCHING_TOL):
        return marginal_residual(self.pi, margins) <= tol


def marginal_residual(pi, margins):
    """Sup-norm violation of both marginal constraints."""
    pi = np.asarray(pi)
    return max(np.abs(pi.sum(axis=1) - margins.p).max(), np.abs(pi.sum(axis=0) - margins.q).max())


@dataclass(frozen=True)
class Summary:
    C: np.ndarray
    I: float


def entropy(m):
    """Shannon entropy in nats, with 0 log 0 = 0."""
    m = np.asarray(m, dtype=float)
    if np.any(m < 0):
        raise ConfigError("entropy of a vector with negative entries")
    nz = m[m > 0]
    return float(-np.sum(nz * np.log(nz)))


def mutual_information(pi, margins=None):
    """Kullback-Leibler divergence of ``pi`` from the product of ``margins``.

    ``margins`` defaults to the margins of ``pi`` itself.
    """
    pi = np.asarray(pi, dtype=float)
    if margins is None:
        p, q = pi.sum(axis=1), pi.sum(axis=0)
    else:
        p, q = margins.p, margins.q
    ref = np.outer(p, q)
    mask = pi > 0
    if np.any(ref[mask] <= 0):
        raise ConfigError("matching puts mass on a cell with zero product mass")
    return float(np.sum(pi[mask] * (np.log(pi[mask]) - np.log(ref[mask]))))


def covariations(pi, basis):
    """Expectation of each basis function under ``pi``."""
    pi = np.asarray(pi, dtype=float)
    tables = basis.tables if isinstance(basis, BasisSet) else np.asarray(basis, dtype=float)
    if tables.ndim == 2:
        tables = tables[None]
    if tables.shape[1:] != pi.shape:
        raise ConfigError(f"basis shape {tables.shape[1:]} does not match matching shape {pi.shape}")
    return np.tensordot(tables, pi, axes=([1, 2], [0, 1]))


def summarize(pi, basis, margins=None):
    return Summary(covariations(pi, basis), mutual_information(pi, margins))


def zmoi_normalize(phi, margins):
    """Remove the additive part of a surplus table under product weights.

    Returns ``(phi_bar, f, g, c)`` with ``phi = phi_bar + f[:, None] + g[None, :] + c``,
    ``E_p f = E_q g = 0`` and ``phi_bar`` having zero conditional means in each
    argument under ``p x q``.
    """
    margins.require_positive()
    phi = np.asarray(phi, dtype=float)
    if phi.shape != margins.shape:
        raise ConfigError("surplus and margins disagree on shape")
    row = phi @ margins.q
    col = margins.p @ phi
    c = float(margins.p @ row)
    f = row - c
    g = col - c
    phi_bar = phi - f[:, None] - g[None, :] - c
    return phi_bar, f, g, c


# ---------------------------------------------------------------------------
# Samples
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoupleSample:
    """N matched couples stored as parallel index arrays."""

    x: np.ndarray
    y: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.int64).ravel()
        y = np.asarray(self.y, dtype=np.int64).ravel()
        if x.shape != y.shape:
            raise ConfigError("x and y index arrays differ in length")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return self.x.size


def sample_couples(pi, n, seed):
    """Draw ``n`` i.i.d. couples from ``pi`` with a seeded generator."""
    pi = np.asarray(pi, dtype=float)
    if n < 1:
        raise ConfigError("sample size must be >= 1")
    rng = np.random.default_rng(seed)
    flat = pi.ravel() / pi.sum()
    cells = rng.choice(flat.size, size=n, p=flat)
    x, y = np.divmod(cells, pi.shape[1])
    return CoupleSample(x, y, seed)


def empirical_matching(sample, shape, basis=None):
    """Cell frequencies of a couple sample.

    ``shape`` is a :class:`TypeSpace` or a ``(Tx, Ty)`` tuple. Returns the
    empirical matching, its margins and, when ``basis`` is given, its summary.
    Margins may contain zeros if some type never appears.
    """
    if len(sample) == 0:
        raise ConfigError("empty sample")
    tx, ty = shape.shape if isinstance(shape, TypeSpace) else shape
    if sample.x.min() < 0 or sample.x.max() >= tx or sample.y.min() < 0 or sample.y.max() >= ty:
        raise ConfigError("sample index out of range for the type space")
    counts = np.bincount(sample.x * ty + sample.y, minlength=tx * ty).reshape(tx, ty)
    pi = counts / len(sample)
    m = Matching(pi)
    margins = Margins(pi.sum(axis=1), pi.sum(axis=0))
    summary = summarize(pi, basis, margins) if basis is not None else None
    return m, margins, summary

