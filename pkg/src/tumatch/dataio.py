"""Run configuration, couples-file ingestion and deterministic output writers.

Config documents are JSON with the sections ``types``, ``basis``, ``solver``,
``estimator``, ``simulation``, ``geometry`` and ``io``::

    {
      "schema_version": 1,
      "types": {"men": {"educ": ["D", "G"], "income": ["1", "2", "3"]},
                "women": null,
                "p": [...], "q": [...]},
      "basis": [{"kind": "diagonal_indicator", "dim": "educ", "level": "G", "weight": 1.0},
                {"kind": "coordinate_product", "dim_x": "income", "dim_y": "income"},
                {"kind": "indicator_interaction", "i": 0, "j": 1},
                {"kind": "dense", "table": [[...]]},
                {"kind": "npoi"}],
      "solver": {"sigma": 1.0, "tol": 1e-10, "max_iter": 100000, "split": [0.5, 0.5]},
      "estimator": {"method": "mm", "pseudo_count": null},
      "simulation": {"n": 100000, "seed": 1},
      "geometry": {"directions": 360, "sigmas": [0.1, 1.0, 10.0]},
      "io": {"couples": "couples.csv", "margins_x": null, "margins_y": null,
             "output": null, "format": "json"}
    }

Couples files are comma-delimited with a header ``x.<dim>,...,y.<dim>,...``
and one couple per row. Margin files have the header ``type,probability``;
multi-dimensional type labels join their levels with ``|``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .exceptions import ConfigError
from .model import BasisSet, CoupleSample, Margins, TypeSpace

SCHEMA_VERSION = 1
BASIS_KINDS = ("dense", "indicator_interaction", "diagonal_indicator", "coordinate_product", "npoi")
SECTIONS = ("schema_version", "types", "basis", "solver", "estimator", "simulation", "geometry", "io")
LABEL_SEP = "|"


@dataclass(frozen=True)
class RunConfig:
    space: Optional[TypeSpace] = None
    basis_spec: tuple = ()
    margins: Optional[Margins] = None
    sigma: float = 1.0
    tol: float = 1e-10
    max_iter: int = 100_000
    split: Optional[tuple] = None
    method: str = "mm"
    pseudo_count: Optional[float] = None
    n: int = 100_000
    seed: int = 0
    directions: object = 360
    sigmas: tuple = ()
    couples: Optional[str] = None
    margins_x: Optional[str] = None
    margins_y: Optional[str] = None
    output: Optional[str] = None
    format: str = "json"
    base_dir: Path = field(default_factory=Path.cwd)

    def path(self, p):
        if p is None:
            return None
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def weights(self):
        w = [b.get("weight") for b in self.basis_spec]
        if not w or any(x is None for x in w):
            return None
        return np.array(w, dtype=float)

    def basis(self, space=None):
        space = space or self.space
        if not self.basis_spec:
            return None
        if space is None:
            raise ConfigError("basis declared without a type space")
        return build_basis(self.basis_spec, space)


def _space_from_section(sec):
    if sec is None:
        return None
    men = sec.get("men")
    if men is None:
        raise ConfigError("types.men is required")
    if not isinstance(men, dict) or not all(isinstance(v, list) and v for v in men.values()):
        raise ConfigError("types.men must map dimension names to nonempty level lists")
    women = sec.get("women") or men
    return TypeSpace.from_dimensions(men, women)


def build_basis(spec, space):
    parts = []
    for i, b in enumerate(spec):
        kind = b.get("kind")
        name = b.get("name")
        try:
            if kind == "dense":
                parts.append(BasisSet.dense(np.asarray(b["table"], dtype=float), name or f"dense_{i}"))
            elif kind == "indicator_interaction":
                parts.append(BasisSet.indicator_interaction(int(b["i"]), int(b["j"]), space.shape, name))
            elif kind == "diagonal_indicator":
                parts.append(BasisSet.diagonal_indicator(space, b["dim"], b.get("level"), name))
            elif kind == "coordinate_product":
                parts.append(BasisSet.coordinate_product(space, b["dim_x"], b.get("dim_y"), name))
            elif kind == "npoi":
                parts.append(BasisSet.npoi(space.shape))
            else:
                raise ConfigError(f"unknown basis kind {kind!r}; expected one of {BASIS_KINDS}")
        except KeyError as e:
            raise ConfigError(f"basis entry {i} ({kind}) is missing field {e}") from None
    basis = BasisSet.stack(parts)
    if basis.shape != space.shape:
        raise ConfigError(f"basis shape {basis.shape} does not match the type space {space.shape}")
    return basis


def _resolve_config_path(path):
    if str(path).startswith("builtin:"):
        name = str(path).split(":", 1)[1]
        ref = resources.files("tumatch") / "data" / f"{name}.json"
        if not ref.is_file():
            raise ConfigError(f"no bundled fixture named {name!r}")
        return Path(str(ref))
    return Path(path)


def load_config(path=None, overrides=None):
    """Read a config document and apply flag overrides (non-None values win)."""
    doc = {}
    base = Path.cwd()
    if path is not None:
        p = _resolve_config_path(path)
        try:
            doc = json.loads(p.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {p}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {p} is not valid JSON: {e}") from None
        base = p.parent
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    unknown = set(doc) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    if doc.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {doc.get('schema_version')!r}")

    types = doc.get("types")
    space = _space_from_section(types)
    margins = None
    if types and types.get("p") is not None:
        margins = Margins(types["p"], types.get("q", types["p"]))
    basis_spec = tuple(doc.get("basis") or ())
    for b in basis_spec:
        if b.get("kind") not in BASIS_KINDS:
            raise ConfigError(f"unknown basis kind {b.get('kind')!r}; expected one of {BASIS_KINDS}")
    solver = doc.get("solver") or {}
    est = doc.get("estimator") or {}
    sim = doc.get("simulation") or {}
    geo = doc.get("geometry") or {}
    io = doc.get("io") or {}
    cfg = RunConfig(
        space=space,
        basis_spec=basis_spec,
        margins=margins,
        sigma=float(solver.get("sigma", 1.0)),
        tol=float(solver.get("tol", 1e-10)),
        max_iter=int(solver.get("max_iter", 100_000)),
        split=tuple(solver["split"]) if solver.get("split") is not None else None,
        method=est.get("method", "mm"),
        pseudo_count=est.get("pseudo_count"),
        n=int(sim.get("n", 100_000)),
        seed=int(sim.get("seed", 0)),
        directions=geo.get("directions", 360),
        sigmas=tuple(geo.get("sigmas", ())),
        couples=io.get("couples"),
        margins_x=io.get("margins_x"),
        margins_y=io.get("margins_y"),
        output=io.get("output"),
        format=io.get("format", "json"),
        base_dir=base,
    )
    if space is not None and margins is not None and margins.shape != space.shape:
        raise ConfigError("types.p / types.q lengths do not match the type space")
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    cfg = replace(cfg, **overrides)
    if cfg.method not in ("np", "sp", "mm"):
        raise ConfigError(f"unknown estimator method {cfg.method!r}")
    if cfg.format not in ("json", "csv"):
        raise ConfigError(f"unknown output format {cfg.format!r}")
    if cfg.basis_spec and cfg.space is not None:
        cfg.basis()
    return cfg


# ---------------------------------------------------------------------------
# Couples and margins files
# ---------------------------------------------------------------------------


def _label_str(label):
    return LABEL_SEP.join(label) if isinstance(label, tuple) else str(label)


def ingest_couples(path, space=None):
    """Read a couples file.

    Returns ``(sample, space)``. With a declared ``space`` every value must be
    one of its levels; otherwise levels are inferred from the data in sorted
    order.
    """
    path = Path(path)
    try:
        fh = path.open(newline="")
    except FileNotFoundError:
        raise ConfigError(f"couples file not found: {path}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ConfigError(f"{path}: empty file") from None
        xcols = [h for h in header if h.startswith("x.")]
        ycols = [h for h in header if h.startswith("y.")]
        if not xcols or not ycols:
            raise ConfigError(f"{path}:1: header needs x.<dim> and y.<dim> columns, got {header}")
        xdims = [h[2:] for h in xcols]
        ydims = [h[2:] for h in ycols]
        xi = [header.index(h) for h in xcols]
        yi = [header.index(h) for h in ycols]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ConfigError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            rows.append((lineno, tuple(row[i].strip() for i in xi), tuple(row[i].strip() for i in yi)))
    if not rows:
        raise ConfigError(f"{path}: no couples")

    if space is None:
        men = {d: sorted({r[1][k] for r in rows}) for k, d in enumerate(xdims)}
        women = {d: sorted({r[2][k] for r in rows}) for k, d in enumerate(ydims)}
        space = TypeSpace.from_dimensions(men, women)
    else:
        declared_x = [d for d, _ in space.dims("x")]
        declared_y = [d for d, _ in space.dims("y")]
        if xdims != declared_x or ydims != declared_y:
            raise ConfigError(f"{path}:1: columns {xdims}/{ydims} do not match declared dimensions "
                              f"{declared_x}/{declared_y}")

    xlookup = {lab: i for i, lab in enumerate(space.men_labels)}
    ylookup = {lab: i for i, lab in enumerate(space.women_labels)}
    levels_x = dict(space.dims("x"))
    levels_y = dict(space.dims("y"))
    x = np.empty(len(rows), dtype=np.int64)
    y = np.empty(len(rows), dtype=np.int64)
    for n, (lineno, lx, ly) in enumerate(rows):
        for dims, vals, levels, col in ((xdims, lx, levels_x, "x"), (ydims, ly, levels_y, "y")):
            for d, v in zip(dims, vals):
                if v not in levels[d]:
                    raise ConfigError(f"{path}:{lineno}: undeclared level {v!r} in column {col}.{d}")
        x[n] = xlookup[lx]
        y[n] = ylookup[ly]
    return CoupleSample(x, y), space


def write_couples(sample, space, path):
    xdims = [d for d, _ in space.dims("x")]
    ydims = [d for d, _ in space.dims("y")]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x.{d}" for d in xdims] + [f"y.{d}" for d in ydims])
        for i, j in zip(sample.x, sample.y):
            w.writerow(list(space.men_labels[i]) + list(space.women_labels[j]))


def read_margin_file(path, labels):
    """Read a ``type,probability`` file into a vector ordered like ``labels``."""
    path = Path(path)
    index = {_label_str(l): k for k, l in enumerate(labels)}
    out = np.full(len(labels), np.nan)
    try:
        fh = path.open(newline="")
    except FileNotFoundError:
        raise ConfigError(f"margins file not found: {path}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["type", "probability"]:
            raise ConfigError(f"{path}:1: header must be 'type,probability'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ConfigError(f"{path}:{lineno}: expected 2 fields")
            label = row[0].strip()
            if label not in index:
                raise ConfigError(f"{path}:{lineno}: unknown type {label!r}")
            try:
                out[index[label]] = float(row[1])
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: bad probability {row[1]!r}") from None
    if np.any(np.isnan(out)):
        raise ConfigError(f"{path}: missing types")
    return out


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def fmt_float(x):
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"non-finite value {x!r} in output")
    return format(x, ".17g")


def _dump(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_dump(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(_dump(v, indent, level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _dump(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, np.ndarray):
        return _dump(obj.tolist(), indent, level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(obj)
    return json.dumps(str(obj))


def dumps_json(obj):
    """JSON with every float written to 17 significant digits."""
    return _dump(obj, 2, 0) + "\n"


def flatten(obj, prefix=""):
    """``(path, value)`` pairs for every leaf of a nested payload."""
    if isinstance(obj, dict):
        for k, v in obj.items():
            yield from flatten(v, f"{prefix}/{k}" if prefix else str(k))
    elif isinstance(obj, (list, tuple, np.ndarray)):
        for i, v in enumerate(obj):
            yield from flatten(v, f"{prefix}/{i}")
    else:
        yield prefix, obj


def _csv_cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt_float(v)
    return str(v)


def dumps_csv(payload, table_key=None):
    """CSV rendering.

    With ``table_key`` the list of row records under that key is written as a
    wide table (one row per record, array fields spread over ``name_k``
    columns); otherwise every leaf is written as a ``key,value`` row.
    """
    lines = []
    if table_key is None:
        lines.append("key,value")
        for k, v in flatten(payload):
            lines.append(f"{k},{_csv_cell(v)}")
        return "\n".join(lines) + "\n"
    rows = payload[table_key]
    header, out = None, []
    for rec in rows:
        flat = {}
        for k, v in rec.items():
            if isinstance(v, (list, tuple, np.ndarray)):
                for i, x in enumerate(v):
                    flat[f"{k}_{i}"] = x
            else:
                flat[k] = v
        if header is None:
            header = list(flat)
        out.append(",".join(_csv_cell(flat[h]) for h in header))
    return ",".join(header or []) + "\n" + "\n".join(out) + "\n"
