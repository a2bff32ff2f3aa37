"""Closed-form invariant suite behind ``heatcoeff selftest``.

Each check is small (well under a second) and compares a numerical path
against a formula that shares no code with it.
"""

from __future__ import annotations

import math
import time

import numpy as np

from . import oracles
from .coefficient import CoefficientM, PiecewisePolynomial
from .heat_forward import HeatConfig, sine_source, solve_heat
from .property_c import orthogonality_functional, tail_decay_experiment
from .sl_solver import check_pointwise_properties, solve_volterra
from .spectral_reduction import laplace


def _cosh():
    err = 0.0
    for c in (0.25, 1.0, 4.0):
        for k in (0.5, 1.0, 2.0, 8.0):
            sol = solve_volterra(CoefficientM.constant(c), k)
            exact = np.log(np.cosh(k * math.sqrt(c) * sol.grid))
            err = max(err, float(np.max(np.abs(np.expm1(sol.log_u - exact)))))
    return err, 1e-6


def _transfer(rng):
    err = 0.0
    for _ in range(5):
        m = int(rng.integers(1, 5))
        bp = np.concatenate(([0.0], np.sort(rng.uniform(0.05, 0.95, m - 1)), [1.0]))
        vals = rng.uniform(0.25, 4.0, m)
        k = float(rng.uniform(0.5, 10.0))
        sol = solve_volterra(CoefficientM.piecewise_constant(bp, vals), k)
        u, du = oracles.transfer_matrix(bp, vals, k)
        err = max(err, abs(math.expm1(sol.log_u[-1] - math.log(u))), abs(math.expm1(sol.log_du[-1] - math.log(du))))
    return err, 1e-6


def _pointwise(rng):
    worst = 0.0
    for _ in range(5):
        q = CoefficientM.piecewise_constant([0.0, 0.5, 1.0], rng.uniform(0.25, 4.0, 2))
        rep = check_pointwise_properties(solve_volterra(q, float(rng.uniform(0.5, 10.0))))
        worst = max(worst, -min(rep.min_u_minus_1, rep.min_du, rep.min_second_difference, 0.0))
    return worst, 1e-8


def _heat():
    field = solve_heat(CoefficientM.constant(1.0), sine_source(1.0), 1.5, HeatConfig(nx=100, dt=4e-3))
    keep = slice(None, None, 10)
    ref = oracles.heat_series(field.x, field.t[keep])
    return float(np.max(np.abs(field.U[keep] - ref))), 1e-4


def _laplace():
    t = np.linspace(0.0, 1.0, 4001)
    f = np.sin(np.pi * t)
    err = 0.0
    for lam in (0.25, 4.0, 100.0):
        exact = oracles.sine_laplace(lam)
        err = max(err, abs(laplace(t, f, lam).value - exact) / exact)
        err = max(err, abs(sine_source(1.0).laplace(lam) - exact) / exact)
    return err, 1e-6


def _cosh_square():
    one = CoefficientM.constant(1.0)
    h = PiecewisePolynomial([0.0, 1.0], [[1.0]])
    err = 0.0
    for k in (0.5, 2.0, 8.0):
        v = orthogonality_functional(h, one, one, k)
        err = max(err, abs(math.expm1(v.log_abs - math.log(oracles.cosh_square_integral(k)))))
    return err, 1e-6


def _decay():
    one = CoefficientM.constant(1.0)
    h = PiecewisePolynomial([0.0, 0.5, 1.0], [[-1.0], [1.0]])
    ks = np.array([2.0, 5.0, 10.0])
    rep = tail_decay_experiment(h, one, one, ks)
    lc = lambda x: np.logaddexp(x, -x) - math.log(2.0)  # log cosh
    pred = math.log(0.5) + 2 * lc(ks * rep.z) - 2 * lc(ks * rep.y)
    return float(np.max(np.abs(np.log(rep.B) / pred - 1.0))), 1e-6


def run_selftest(seed: int = 0, out=print) -> int:
    """Run every check, print a table and return 0 when all pass."""
    rng = np.random.default_rng(seed)
    checks = [
        ("spectral solve vs cosh", _cosh),
        ("spectral solve vs transfer matrix", lambda: _transfer(rng)),
        ("u >= 1, u' >= 0, convexity", lambda: _pointwise(rng)),
        ("heat solver vs eigenfunction series", _heat),
        ("Laplace quadrature vs closed form", _laplace),
        ("orthogonality functional vs cosh^2", _cosh_square),
        ("decay bound vs cosh ratio", _decay),
    ]
    failures = 0
    out(f"{'check':40s} {'error':>10s} {'tol':>8s} {'time':>7s}  result")
    for name, fn in checks:
        t0 = time.perf_counter()
        err, tol = fn()
        ok = err <= tol
        failures += not ok
        out(f"{name:40s} {err:10.2e} {tol:8.0e} {time.perf_counter() - t0:6.2f}s  {'PASS' if ok else 'FAIL'}")
    out(f"{len(checks) - failures}/{len(checks)} checks passed")
    return 0 if failures == 0 else 1
