"""Laplace-domain data {g(k^2), k^2 f(k^2)} and the two ways of computing them.

Time-domain path: Laplace-transform sampled F(t), G(t) from the heat solver.
Spectral path: with q = 1/a and u = a v', the transformed problem becomes
-u'' + k^2 q u = 0, u'(0) = 0, and since u' = k^2 v, v(0) = 0,

    g(k^2) = a(1) v'(1) = k^2 f(k^2) * u(1) / u'(1)

for the normalised solution u(0) = 1.  The two paths share no
discretisation, which makes their agreement a meaningful check.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .coefficient import CoefficientM
from .heat_forward import BoundarySource, HeatConfig, extract_flux, solve_heat
from .parallel import pmap
from .sl_solver import SolverConfig, solve_volterra

GAUSS_LAMBDA = 10.0  # above this the trapezoid weight error dominates


class TailError(RuntimeError):
    """The sampled signal has not decayed enough for a truncated Laplace integral."""


@dataclass
class LaplaceResult:
    value: float
    error: float
    tail: float
    tail_dominated: bool = False


def _trapezoid(t, h, lam):
    y = h * np.exp(-lam * t)
    return float(np.sum(0.5 * np.diff(t) * (y[1:] + y[:-1])))


def _segments(t, h):
    """Split samples at repeated times (jump representation) into runs."""
    cut = np.nonzero(np.diff(t) <= 0)[0] + 1
    return [(ts, hs) for ts, hs in zip(np.split(t, cut), np.split(h, cut)) if ts.size >= 2]


def _gauss_product(t, h, lam, kind="spline", order=8):
    """int I[h] e^{-lam t} dt over the sample intervals, I the interpolant.

    Gauss-Legendre on every sample interval, subdivided so that each
    panel spans at most lam * dt = 2; exact for the exponential up to
    rounding and free of the trapezoid's O((lam dt)^2) weight error.
    """
    xg, wg = np.polynomial.legendre.leggauss(order)
    total = 0.0
    for ts, hs in _segments(t, h):
        interp = CubicSpline(ts, hs) if (kind == "spline" and ts.size >= 4) else (lambda z, ts=ts, hs=hs: np.interp(z, ts, hs))
        m = max(1, math.ceil(lam * float(np.max(np.diff(ts))) / 2.0))
        sub = (np.arange(m + 1) / m)[None, :]
        edges = ts[:-1, None] + np.diff(ts)[:, None] * sub  # (intervals, m + 1)
        lo, width = edges[:, :-1].ravel(), np.diff(edges, axis=1).ravel()
        keep = lam * lo < 745.0  # later panels underflow
        lo, width = lo[keep], width[keep]
        nodes = lo[:, None] + 0.5 * width[:, None] * (1.0 + xg[None, :])
        total += float(np.sum(0.5 * width[:, None] * wg[None, :] * interp(nodes) * np.exp(-lam * nodes)))
    return total


def laplace(t, h, lam: float, tail_rtol: float = 1e-6) -> LaplaceResult:
    """Truncated Laplace integral int_0^{t_end} h(t) e^{-lam t} dt of samples.

    Parameters
    ----------
    t, h : array_like
        Sample times (nondecreasing; a repeated time encodes a jump) and values.
    lam : float
        Transform variable, lam > 0.
    tail_rtol : float
        A tail bound above ``tail_rtol * |value|`` flags the result.

    Returns
    -------
    LaplaceResult
        ``error`` is the quadrature estimate plus the tail bound
        max|h near t_end| * e^{-lam t_end} / lam.
    """
    if not lam > 0:
        raise ValueError("lam must be positive")
    t = np.asarray(t, dtype=float)
    h = np.asarray(h, dtype=float)
    if t.shape != h.shape or t.size < 3:
        raise ValueError("need matching sample arrays with at least 3 points")
    if not np.any(h):
        return LaplaceResult(0.0, 0.0, 0.0)
    if lam <= GAUSS_LAMBDA:
        value = _trapezoid(t, h, lam)
        idx = np.unique(np.r_[np.arange(0, t.size, 2), t.size - 1])
        coarse = _trapezoid(t[idx], h[idx], lam)
        quad_err = abs(value - coarse)
    else:
        value = _gauss_product(t, h, lam, "spline")
        quad_err = abs(value - _gauss_product(t, h, lam, "linear"))
    end = t[-1]
    window = t >= end - 0.05 * (end - t[0])
    tail = float(np.max(np.abs(h[window]))) * math.exp(-lam * end) / lam
    flagged = tail > tail_rtol * abs(value)
    return LaplaceResult(value, quad_err + tail, tail, flagged)


@dataclass
class SpectralData:
    """Inverse-problem data on a k grid: g(k^2) and k^2 f(k^2)."""

    k: np.ndarray
    g: np.ndarray
    lf: np.ndarray
    g_err: np.ndarray | None = None
    lf_err: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.k = np.asarray(self.k, dtype=float)
        self.g = np.asarray(self.g, dtype=float)
        self.lf = np.asarray(self.lf, dtype=float)
        if not (self.k.shape == self.g.shape == self.lf.shape):
            raise ValueError("k, g and lf must have the same length")
        if np.any(self.k <= 0) or np.any(np.diff(self.k) <= 0):
            raise ValueError("k grid must be positive and strictly increasing")

    @property
    def log_g(self) -> np.ndarray:
        return np.log(self.g)

    @property
    def log_lf(self) -> np.ndarray:
        return np.log(self.lf)

    def is_positive(self) -> bool:
        return bool(np.all(self.g > 0) and np.all(self.lf > 0))

    def write_csv(self, path, header_lines=()) -> None:
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "g", "k2f"])
            for row in zip(self.k, self.g, self.lf):
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def read_csv(cls, path) -> "SpectralData":
        cols = read_csv_columns(path)
        return cls(k=cols["k"], g=cols["g"], lf=cols["k2f"])


def read_csv_columns(path) -> dict:
    """Columns of a CSV file with '#' comment lines, as float arrays."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#")) if r]
    names = [n.strip() for n in rows[0]]
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(names))
    return {n: data[:, i] for i, n in enumerate(names)}


def parse_kgrid(spec: str) -> np.ndarray:
    """``geom:lo:hi:n``, ``lin:lo:hi:n`` or comma separated values."""
    spec = str(spec).strip()
    if spec.startswith(("geom:", "lin:")):
        kind, lo, hi, n = spec.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
        grid = np.geomspace(lo, hi, n) if kind == "geom" else np.linspace(lo, hi, n)
    else:
        grid = np.array([float(v) for v in spec.split(",") if v.strip()])
    if grid.size == 0 or np.any(grid <= 0):
        raise ValueError(f"k grid must contain positive values: {spec!r}")
    return grid


def default_kgrid() -> np.ndarray:
    return np.geomspace(0.5, 20.0, 40)


def data_from_time_domain(t, F, G, kgrid, tail_rtol: float = 1e-6) -> SpectralData:
    """g(k^2) = L[G](k^2) and k^2 f(k^2) = k^2 L[F](k^2) from samples."""
    kgrid = np.asarray(kgrid, dtype=float)
    g, gerr, lf, lferr = [], [], [], []
    for k in kgrid:
        lam = k * k
        rg = laplace(t, G, lam, tail_rtol)
        rf = laplace(t, F, lam, tail_rtol)
        if rg.tail_dominated or rf.tail_dominated:
            raise TailError(
                f"signal not decayed at t={t[-1]:g} for k={k:g}; extend the simulation time"
            )
        g.append(rg.value)
        gerr.append(rg.error)
        lf.append(lam * rf.value)
        lferr.append(lam * rf.error)
    return SpectralData(kgrid, np.array(g), np.array(lf), np.array(gerr), np.array(lferr))


def time_domain_data(a: CoefficientM, source: BoundarySource, kgrid, heat: HeatConfig | None = None,
                     t_sim: float | None = None, tail_rtol: float = 1e-6) -> SpectralData:
    """Simulate the heat problem and reduce its boundary traces to SpectralData."""
    field = solve_heat(a, source, t_sim, heat)
    G = extract_flux(field).G
    F = np.asarray(source(field.t), dtype=float)
    return data_from_time_domain(field.t, F, G, kgrid, tail_rtol)


def log_boundary_ratio(q: CoefficientM, k: float, cfg: SolverConfig | None = None) -> float:
    """log(u(1) / u'(1)) for the normalised solution; finite for any k."""
    sol = solve_volterra(q, k, cfg)
    return float(sol.log_u[-1] - sol.log_du[-1])


def invert_coefficient_map(a: CoefficientM, tol: float = 1e-10) -> CoefficientM:
    """q = 1/a, bounds [1/c1, 1/c0]; see :meth:`CoefficientM.reciprocal`."""
    return a.reciprocal(tol=tol)


@dataclass
class SpectralForward:
    k: float
    g: float
    lf: float
    grid: np.ndarray | None = None
    v: np.ndarray | None = None


def spectral_forward(a: CoefficientM, source: BoundarySource, k: float,
                     cfg: SolverConfig | None = None, q: CoefficientM | None = None,
                     profile: bool = False) -> SpectralForward:
    """(g(k^2), k^2 f(k^2)) from the Laplace-domain boundary value problem.

    ``q`` may be passed to reuse a precomputed reciprocal of ``a``.  With
    ``profile`` the transformed temperature v(x) = c int_0^x q u is also
    returned (v(0) = 0 and v(1) = f by construction).
    """
    if not k > 0:
        raise ValueError("k must be positive")
    q = q if q is not None else invert_coefficient_map(a)
    lam = k * k
    f = source.laplace(lam)
    sol = solve_volterra(q, k, cfg)
    g = lam * f * math.exp(sol.log_u[-1] - sol.log_du[-1])
    out = SpectralForward(k=float(k), g=float(g), lf=float(lam * f))
    if profile:
        # int_0^x q u = u'(x) / k^2, and c = f / int_0^1 q u
        out.grid = sol.grid
        with np.errstate(divide="ignore"):
            out.v = f * np.exp(sol.log_du - sol.log_du[-1])
    return out


def spectral_data(a: CoefficientM, source: BoundarySource, kgrid, cfg: SolverConfig | None = None) -> SpectralData:
    """spectral_forward over a k grid."""
    q = invert_coefficient_map(a)
    rows = pmap(lambda k: spectral_forward(a, source, k, cfg, q=q), np.asarray(kgrid, dtype=float))
    return SpectralData(np.array([r.k for r in rows]), np.array([r.g for r in rows]),
                        np.array([r.lf for r in rows]))
