"""Command-line entry point: ``heatcoeff <subcommand> ...``.

Every output file starts with provenance (version, subcommand, arguments)
as ``#`` comment lines for CSV or a ``provenance`` object for JSON.  Exit
codes: 0 success, 1 numerical failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .coefficient import CoefficientError, CoefficientM, DomainError, PiecewisePolynomial
from .heat_forward import ConfigurationError, HeatConfig, extract_flux, load_source, solve_heat
from .inverse import ModelSpec, ParameterBoundError, reconstruct
from .property_c import PreconditionError, orthogonality_trace, tail_decay_experiment
from .sl_solver import IterationError, SolverConfig, solve_volterra
from .spectral_reduction import (SpectralData, TailError, data_from_time_domain, parse_kgrid,
                                 read_csv_columns, spectral_data)

NUMERICAL_ERRORS = (CoefficientError, DomainError, ConfigurationError, TailError, IterationError,
                    ParameterBoundError, PreconditionError, np.linalg.LinAlgError, FloatingPointError)


class UsageError(Exception):
    pass


def _provenance(args) -> list[str]:
    opts = {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}
    return [f"heatcoeff {__version__}", f"command: {args.command}", "args: " + json.dumps(opts, sort_keys=True)]


def _write_csv(path, header, columns: dict) -> None:
    names = list(columns)
    rows = zip(*(np.asarray(columns[n], dtype=float) for n in names))
    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])


def _existing(path: str) -> str:
    if not Path(path).is_file():
        raise UsageError(f"file not found: {path}")
    return path


def _load_coeff(path: str) -> CoefficientM:
    return CoefficientM.load(_existing(path))


def _kgrid(spec: str) -> np.ndarray:
    try:
        return parse_kgrid(spec)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _source(spec: str):
    if not spec.startswith("builtin:"):
        _existing(spec)
    try:
        return load_source(spec)
    except (KeyError, ValueError) as exc:
        raise UsageError(f"bad source {spec!r}: {exc}") from None


# -- subcommands -------------------------------------------------------------

def cmd_forward(args) -> int:
    a = _load_coeff(args.coeff)
    src = _source(args.source)
    field = solve_heat(a, src, args.tsim, HeatConfig(nx=args.nx, dt=args.dt))
    flux = extract_flux(field)
    F = np.array([src(t) for t in field.t])
    _write_csv(args.out, _provenance(args), {"t": field.t, "F": F, "G": flux.G})
    if args.field_out:
        X, T = np.meshgrid(field.x, field.t)
        _write_csv(args.field_out, _provenance(args), {"x": X.ravel(), "t": T.ravel(), "U": field.U.ravel()})
    return 0


def cmd_reduce(args) -> int:
    cols = read_csv_columns(_existing(args.fg))
    missing = {"t", "F", "G"} - set(cols)
    if missing:
        raise UsageError(f"{args.fg} lacks columns {sorted(missing)}")
    data = data_from_time_domain(cols["t"], cols["F"], cols["G"], _kgrid(args.kgrid), args.tail_rtol)
    data.write_csv(args.out, _provenance(args))
    return 0


def cmd_spectral_forward(args) -> int:
    a = _load_coeff(args.coeff)
    data = spectral_data(a, _source(args.source), _kgrid(args.kgrid), SolverConfig(n=args.n))
    data.write_csv(args.out, _provenance(args))
    return 0


def cmd_solve_sl(args) -> int:
    q = _load_coeff(args.coeff)
    sols = [solve_volterra(q, k, SolverConfig(n=args.n)) for k in _kgrid(args.k)]
    log_form = any(s.log_form for s in sols)
    cols = {
        "k": np.concatenate([np.full(s.grid.size, s.k) for s in sols]),
        "x": np.concatenate([s.grid for s in sols]),
        "u": np.concatenate([s.u for s in sols]),
        "du": np.concatenate([s.du for s in sols]),
    }
    if log_form:
        cols["log_u"] = np.concatenate([s.log_u for s in sols])
        cols["log_du"] = np.concatenate([s.log_du for s in sols])
    with np.errstate(over="ignore"):
        _write_csv(args.out, _provenance(args), cols)
    return 0


def cmd_property_c(args) -> int:
    doc = json.loads(Path(_existing(args.h)).read_text())
    h = PiecewisePolynomial(doc["breakpoints"], doc["pieces"])
    q1, q2 = _load_coeff(args.q1), _load_coeff(args.q2)
    ks = _kgrid(args.kgrid)
    cfg = SolverConfig(n=args.n)
    trace = orthogonality_trace(h, q1, q2, ks, cfg)
    try:
        bound = tail_decay_experiment(h, q1, q2, ks, cfg=cfg).B
    except PreconditionError:
        bound = np.full(ks.size, math.nan)
    with np.errstate(over="ignore"):
        _write_csv(args.out, _provenance(args),
                   {"k": ks, "I": trace.I, "I_normalized": trace.normalized, "bound_B": bound})
    return 0


def cmd_reconstruct(args) -> int:
    data = SpectralData.read_csv(_existing(args.data))
    doc = json.loads(Path(_existing(args.model)).read_text())
    if args.init:
        init = json.loads(Path(_existing(args.init)).read_text())
        if "values" in init:
            doc["init_values"] = init["values"]
        if "breakpoints" in init:
            doc["breakpoints"] = init["breakpoints"]
    try:
        spec = ModelSpec.from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"bad model spec: {exc}") from None
    res = reconstruct(data, spec, SolverConfig(n=args.n), max_iter=args.max_iter)
    out = res.to_dict()
    out["provenance"] = _provenance(args)
    Path(args.out).write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    print(f"misfit {res.misfit:.3e}  iterations {res.iterations}  converged {res.converged} ({res.reason})")
    return 0 if res.converged else 1


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    return run_selftest(seed=args.seed)


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="heatcoeff", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"heatcoeff {__version__}")
    p.add_argument("--seed", type=int, default=0, help="seed for randomised runs (default 0)")
    sub = p.add_subparsers(dest="command", required=True, metavar="subcommand")

    f = sub.add_parser("forward", help="simulate the heat problem, write t,F,G")
    f.add_argument("--coeff", required=True, help="conductivity a(x), JSON")
    f.add_argument("--source", default="builtin:sine", help="builtin:name[:T] or JSON file")
    f.add_argument("--tsim", type=float, default=None, help="final time (default: decay-based)")
    f.add_argument("--nx", type=int, default=400)
    f.add_argument("--dt", type=float, default=1e-3)
    f.add_argument("--field-out", default=None, help="optional long-format x,t,U dump")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_forward)

    r = sub.add_parser("reduce", help="Laplace-transform t,F,G samples to k,g,k2f")
    r.add_argument("--fg", required=True, help="CSV with columns t,F,G")
    r.add_argument("--kgrid", default="geom:0.5:5:12", help="geom:lo:hi:n, lin:lo:hi:n or a,b,c")
    r.add_argument("--tail-rtol", type=float, default=1e-6)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_reduce)

    s = sub.add_parser("spectral-forward", help="k,g,k2f from the Laplace-domain problem")
    s.add_argument("--coeff", required=True, help="conductivity a(x), JSON")
    s.add_argument("--source", default="builtin:sine")
    s.add_argument("--kgrid", default="geom:0.5:20:40")
    s.add_argument("--n", type=int, default=None, help="cells per unit length (default: adaptive)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_spectral_forward)

    v = sub.add_parser("solve-sl", help="solve -u'' + k^2 q u = 0, u(0)=1, u'(0)=0")
    v.add_argument("--coeff", required=True, help="q(x), JSON")
    v.add_argument("--k", required=True, help="k values: a,b,c or geom:/lin: range")
    v.add_argument("--n", type=int, default=None)
    v.add_argument("--out", required=True)
    v.set_defaults(func=cmd_solve_sl)

    c = sub.add_parser("property-c", help="orthogonality functional and decay bound")
    c.add_argument("--h", required=True, help="test function h, JSON (breakpoints, pieces)")
    c.add_argument("--q1", required=True)
    c.add_argument("--q2", required=True)
    c.add_argument("--kgrid", default="geom:2:40:15")
    c.add_argument("--n", type=int, default=None)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_property_c)

    i = sub.add_parser("reconstruct", help="fit q to k,g,k2f data")
    i.add_argument("--data", required=True, help="CSV with columns k,g,k2f")
    i.add_argument("--model", required=True, help="model spec JSON")
    i.add_argument("--init", default=None, help="JSON with 'values' and optional 'breakpoints'")
    i.add_argument("--max-iter", type=int, default=200)
    i.add_argument("--n", type=int, default=None)
    i.add_argument("--out", required=True)
    i.set_defaults(func=cmd_reconstruct)

    t = sub.add_parser("selftest", help="closed-form invariant suite")
    t.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    t.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    t0 = time.perf_counter()
    try:
        code = args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"heatcoeff {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except NUMERICAL_ERRORS as exc:
        print(f"heatcoeff {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(f"{args.command} finished in {time.perf_counter() - t0:.2f} s", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
