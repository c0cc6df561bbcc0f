"""Command-line front end.

``tumatch <command> [flags]`` with commands ``solve``, ``simulate``,
``estimate``, ``covariogram``, ``summary-path`` and ``identify``. Results go
to ``--output`` (default stdout). Failures print a JSON error object to
stdout and exit with 2 (config), 3 (non-convergence) or 4 (identification).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dataio import (SCHEMA_VERSION, dumps_csv, dumps_json, ingest_couples, load_config,
                     read_margin_file, write_couples)
from .entropic import potentials_to_UV, solve_ipfp, welfare
from .estimate import mm_estimator, nonparametric_surplus, sp_estimator
from .exceptions import ConfigError, TumatchError
from .geometry import circle_directions, summary_path, trace_covariogram
from .homogeneous import solve_lp
from .model import (Margins, build_surplus, covariations, empirical_matching, mutual_information,
                    sample_couples)


def _labels(labels):
    return ["|".join(l) if isinstance(l, tuple) else str(l) for l in labels]


def _space_and_margins(cfg, need_data=False, use_data=True):
    sample = None
    space = cfg.space
    margins = cfg.margins
    if cfg.couples is not None and use_data:
        sample, space = ingest_couples(cfg.path(cfg.couples), space)
    elif need_data:
        raise ConfigError("this command needs a couples file (--couples or io.couples)")
    if space is None:
        raise ConfigError("no type space: declare types in the config or pass a couples file")
    pi_hat = None
    if sample is not None:
        matching, emp, _ = empirical_matching(sample, space)
        pi_hat = matching.pi
        margins = emp
    if margins is None:
        margins = Margins.uniform(*space.shape)
    if cfg.margins_x is not None or cfg.margins_y is not None:
        p = read_margin_file(cfg.path(cfg.margins_x), space.men_labels) if cfg.margins_x else margins.p
        q = read_margin_file(cfg.path(cfg.margins_y), space.women_labels) if cfg.margins_y else margins.q
        margins = Margins(p, q)
    if margins.shape != space.shape:
        raise ConfigError("margins do not match the type space")
    return space, margins, sample, pi_hat


def _basis(cfg, space, required=True):
    basis = cfg.basis(space)
    if basis is None and required:
        raise ConfigError("no basis declared in the config")
    return basis


def _weights(cfg, basis):
    w = cfg.weights
    if w is None:
        raise ConfigError("every basis entry needs a 'weight' for this command")
    return w


def _header(command, space, basis=None):
    out = {"schema_version": SCHEMA_VERSION, "command": command,
           "men": _labels(space.men_labels), "women": _labels(space.women_labels)}
    if basis is not None:
        out["basis"] = list(basis.names)
    return out


def cmd_solve(cfg):
    space, margins, _, _ = _space_and_margins(cfg)
    basis = _basis(cfg, space)
    phi = build_surplus(basis, _weights(cfg, basis))
    out = _header("solve", space, basis)
    out["sigma"] = cfg.sigma
    if cfg.sigma == 0:
        sol = solve_lp(phi, margins)
        out.update(pi=sol.pi0, u=sol.u0, v=sol.v0, W0=sol.W0, is_unique_hint=sol.is_unique_hint,
                   C=covariations(sol.pi0, basis))
        return out, None
    if cfg.sigma < 0:
        raise ConfigError("sigma must be >= 0")
    sol = solve_ipfp(phi, margins, cfg.sigma, cfg.tol, cfg.max_iter, strict=True)
    split = cfg.split
    U, V = potentials_to_UV(sol, split)
    out.update(pi=sol.pi, u=sol.u, v=sol.v, c=sol.c, U=U, V=V, iterations=sol.iterations,
               marginal_residual=sol.marginal_residual, objective=sol.objective,
               welfare=welfare(sol, split), mutual_information=sol.mutual_information,
               C=covariations(sol.pi, basis))
    return out, None


def cmd_simulate(cfg):
    # io.couples names the file being written, never an input here
    space, margins, _, _ = _space_and_margins(cfg, use_data=False)
    basis = _basis(cfg, space)
    if cfg.sigma <= 0:
        raise ConfigError("simulate needs sigma > 0")
    phi = build_surplus(basis, _weights(cfg, basis))
    sol = solve_ipfp(phi, margins, cfg.sigma, cfg.tol, cfg.max_iter, strict=True)
    sample = sample_couples(sol.pi, cfg.n, cfg.seed)
    _, emp, summ = empirical_matching(sample, space, basis)
    out = _header("simulate", space, basis)
    out.update(seed=cfg.seed, N=len(sample), C_hat=summ.C)
    cols = [f"x.{d}" for d, _ in space.dims("x")] + [f"y.{d}" for d, _ in space.dims("y")]
    out["couples"] = {"columns": cols,
                      "rows": [list(space.men_labels[i]) + list(space.women_labels[j])
                               for i, j in zip(sample.x, sample.y)]}
    return out, ("couples", sample, space)


def cmd_estimate(cfg):
    space, margins, sample, pi_hat = _space_and_margins(cfg, need_data=True)
    basis = _basis(cfg, space, required=cfg.method != "np")
    out = _header("estimate", space, basis)
    out.update(method=cfg.method, N=len(sample))
    pc = cfg.pseudo_count
    if cfg.method == "np":
        out["phi_hat"] = nonparametric_surplus(pi_hat, margins, pseudo_count=pc, n=len(sample))
    elif cfg.method == "sp":
        lam, fit = sp_estimator(pi_hat, basis, margins, pseudo_count=pc, n=len(sample))
        out.update(lambda_hat=lam, fit_stat=fit)
    else:
        C_hat = covariations(pi_hat, basis)
        res = mm_estimator(C_hat, basis, margins, len(sample), tol=min(cfg.tol, 1e-8))
        out.update(C_hat=res.C_hat, lambda_hat=res.lambda_hat, I_hat=res.I_hat,
                   Lambda_hat=res.Lambda_hat, sigma_hat=res.sigma_hat, std_errors=res.std_errors,
                   std_errors_efficient=res.std_errors_efficient, avar=res.avar,
                   avar_efficient=res.avar_efficient, fisher=res.fisher,
                   iterations=res.diagnostics["iterations"],
                   gradient_norm=res.diagnostics["gradient_norm"])
    return out, None


def cmd_covariogram(cfg):
    space, margins, _, _ = _space_and_margins(cfg)
    basis = _basis(cfg, space)
    d = cfg.directions
    if isinstance(d, int):
        if basis.K != 2:
            raise ConfigError("an integer direction count needs K = 2; list directions in geometry.directions")
        if d < 3:
            raise ConfigError("need at least 3 directions")
        d = circle_directions(d)
    trace = trace_covariogram(basis, margins, d)
    out = _header("covariogram", space, basis)
    out["C_inf"] = trace.C_inf
    out["points"] = [{"direction": pt.direction, "C0": pt.C0, "W0": pt.W0, "unique": pt.is_unique_hint}
                     for pt in trace.points]
    return out, "points"


def cmd_summary_path(cfg):
    space, margins, _, _ = _space_and_margins(cfg)
    basis = _basis(cfg, space)
    sigmas = cfg.sigmas or tuple(np.geomspace(0.1, 10.0, 21))
    path = summary_path(basis, margins, _weights(cfg, basis), sigmas, cfg.tol, cfg.max_iter)
    out = _header("summary-path", space, basis)
    out["weights"] = path.weights
    out["C_inf"] = path.C_inf
    out["path"] = [{"sigma": s, "C": c, "I": i, "objective": o}
                   for s, c, i, o in zip(path.sigmas, path.C, path.I, path.objective)]
    return out, "path"


def cmd_identify(cfg):
    space, margins, sample, pi_hat = _space_and_margins(cfg, need_data=True)
    basis = _basis(cfg, space, required=False)
    out = _header("identify", space, basis)
    n = len(sample)
    phi_hat = nonparametric_surplus(pi_hat, margins, pseudo_count=cfg.pseudo_count, n=n)
    out.update(N=n, phi_hat=phi_hat, mutual_information=mutual_information(pi_hat, margins))
    if basis is not None:
        lam, fit = sp_estimator(pi_hat, basis, margins, pseudo_count=cfg.pseudo_count, n=n)
        out.update(lambda_sp=lam, fit_stat=fit)
    return out, None


COMMANDS = {
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "covariogram": cmd_covariogram,
    "summary-path": cmd_summary_path,
    "identify": cmd_identify,
}


def _float_list(s):
    try:
        return tuple(float(x) for x in s.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}") from None


def build_parser():
    parser = argparse.ArgumentParser(prog="tumatch", description="Matching models with logit heterogeneity.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file, or builtin:<fixture>")
        p.add_argument("--sigma", type=float)
        p.add_argument("--tol", type=float)
        p.add_argument("--max-iter", type=int, dest="max_iter")
        p.add_argument("--seed", type=int)
        p.add_argument("--n", type=int)
        p.add_argument("--method", choices=("np", "sp", "mm"))
        p.add_argument("--format", choices=("json", "csv"))
        p.add_argument("--output")
        p.add_argument("--pseudo-count", type=float, dest="pseudo_count")
        p.add_argument("--couples", help="couples file (overrides io.couples)")
        p.add_argument("--margins-x", dest="margins_x")
        p.add_argument("--margins-y", dest="margins_y")
        p.add_argument("--directions", type=int, help="number of circle directions (K = 2)")
        p.add_argument("--sigmas", type=_float_list, help="comma-separated sigma grid")
    return parser


def _error_doc(exc):
    doc = {"schema_version": SCHEMA_VERSION,
           "error": {"code": exc.code, "exit_code": exc.exit_code, "message": str(exc)}}
    diag = getattr(exc, "diagnostics", None)
    if diag:
        doc["error"]["diagnostics"] = {k: v for k, v in diag.items()
                                       if isinstance(v, (int, float, str, list))}
    return doc


def _emit(text, output):
    if output is None:
        sys.stdout.write(text)
    else:
        Path(output).write_text(text)


def run(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    for key in ("couples", "margins_x", "margins_y", "output"):
        if overrides.get(key) is not None:
            overrides[key] = str(Path(overrides[key]).resolve())
    try:
        cfg = load_config(args.config, overrides)
        payload, extra = COMMANDS[args.command](cfg)
        output = str(cfg.path(cfg.output)) if cfg.output else None
        if cfg.format == "json":
            text = dumps_json(payload)
        elif isinstance(extra, tuple):
            _, sample, space = extra
            if output is None:
                raise ConfigError("simulate --format csv needs --output for the couples file")
            write_couples(sample, space, output)
            text = None
        else:
            text = dumps_csv(payload, extra)
        if text is not None:
            _emit(text, output)
        if isinstance(extra, tuple) and output is not None and cfg.format == "csv":
            summary = {k: payload[k] for k in ("schema_version", "command", "seed", "N", "C_hat")}
            sys.stdout.write(dumps_json(summary))
    except TumatchError as exc:
        sys.stdout.write(dumps_json(_error_doc(exc)))
        return exc.exit_code
    return 0


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
