"""Forward heat problem U_t = (a(x) U_x)_x with discontinuous conductivity.

    U(x, 0) = 0,  U(0, t) = 0,  U(1, t) = F(t),   G(t) = a(1) U_x(1, t)

Cell-centred finite volumes with cell faces on every breakpoint of a:
the flux through a face is single valued, so continuity of a U_x across
a discontinuity holds by construction.  Face transmissibilities combine
the two half cells in series (harmonic average).  Time stepping is the
implicit trapezoid rule on a time grid graded into every kink of F,
with backward-Euler start-up steps right after each kink.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numba
import numpy as np
from scipy import integrate

from .coefficient import CoefficientM


class ConfigurationError(ValueError):
    """Bad discretisation settings; the message suggests usable step sizes."""


@dataclass
class BoundarySource:
    """Boundary temperature F(t) >= 0, vanishing for t > T.

    ``func`` must accept arrays.  ``kinks`` lists times where F or F' is
    discontinuous (t = 0 included); ``laplace_exact`` is an optional closed form of int_0^T F e^{-lam t} dt.
    """

    T: float
    func: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"
    kinks: tuple = (0.0,)
    laplace_exact: Callable[[float], float] | None = None
    samples: tuple | None = None

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("support end T must be positive")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.where((t >= 0) & (t <= self.T), self.func(np.clip(t, 0.0, self.T)), 0.0)
        return out if out.ndim else float(out)

    def laplace(self, lam: float) -> float:
        """f(lam) = int_0^inf F(t) e^{-lam t} dt."""
        if self.laplace_exact is not None:
            return float(self.laplace_exact(lam))
        if self.samples is not None:
            t, f = self.samples
            return float(laplace_piecewise_linear(t, f, lam))
        pts = [p for p in self.kinks if 0 < p < self.T] or None
        val, _ = integrate.quad(
            lambda s: self.func(np.asarray(s)) * math.exp(-lam * s),
            0.0, self.T, points=pts, epsabs=1e-14, epsrel=1e-12, limit=400,
        )
        return float(val)

    def check(self, n: int = 2001) -> None:
        t = np.linspace(0.0, self.T, n)
        vals = self(t)
        if np.any(vals < 0):
            raise ValueError("source must be nonnegative")
        if not np.any(vals > 0):
            raise ValueError("source must not vanish identically")

    def to_dict(self) -> dict:
        if self.samples is not None:
            t, f = self.samples
            return {"type": "samples", "t": list(map(float, t)), "F": list(map(float, f))}
        return {"type": "builtin", "name": self.name, "T": self.T}


def laplace_piecewise_linear(t, f, lam: float) -> float:
    """Exact Laplace integral of the linear interpolant of samples (t, f)."""
    t = np.asarray(t, dtype=float)
    f = np.asarray(f, dtype=float)
    h = np.diff(t)
    e0, e1 = np.exp(-lam * t[:-1]), np.exp(-lam * t[1:])
    slope = np.diff(f) / h
    # int (f0 + s (t - t0)) e^{-lam t} over each segment
    seg = (f[:-1] * e0 - f[1:] * e1) / lam + slope * (e0 - e1) / lam**2
    return float(np.sum(seg))


def sine_source(T: float = 1.0) -> BoundarySource:
    w = math.pi / T
    return BoundarySource(
        T=T,
        func=lambda t: np.sin(w * np.asarray(t)),
        name="sine",
        kinks=(0.0, T),
        laplace_exact=lambda lam: w * (1.0 + math.exp(-lam * T)) / (lam**2 + w**2),
    )


def sine2_source(T: float = 1.0) -> BoundarySource:
    w = 2.0 * math.pi / T
    # sin^2(pi t / T) = (1 - cos(w t)) / 2
    return BoundarySource(
        T=T,
        func=lambda t: np.sin(0.5 * w * np.asarray(t)) ** 2,
        name="sine2",
        kinks=(0.0, T),
        laplace_exact=lambda lam: 0.5 * (1.0 - math.exp(-lam * T)) * (1.0 / lam - lam / (lam**2 + w**2)),
    )


def box_source(T: float = 1.0) -> BoundarySource:
    return BoundarySource(
        T=T,
        func=lambda t: np.ones_like(np.asarray(t, dtype=float)),
        name="box",
        kinks=(0.0, T),
        laplace_exact=lambda lam: (1.0 - math.exp(-lam * T)) / lam,
    )


BUILTIN_SOURCES = {"sine": sine_source, "sine2": sine2_source, "box": box_source}


def sampled_source(t: Sequence[float], f: Sequence[float]) -> BoundarySource:
    t = np.asarray(t, dtype=float)
    f = np.asarray(f, dtype=float)
    nz = np.nonzero(f)[0]
    T = float(t[nz[-1] + 1]) if nz.size and nz[-1] + 1 < t.size else float(t[-1])
    return BoundarySource(
        T=T,
        func=lambda s: np.interp(s, t, f),
        name="samples",
        kinks=(0.0, T),
        samples=(t, f),
    )


def load_source(spec: str) -> BoundarySource:
    """``builtin:sine[:T]`` or a JSON file (builtin or sample document)."""
    if spec.startswith("builtin:"):
        parts = spec.split(":")
        name = parts[1]
        T = float(parts[2]) if len(parts) > 2 else 1.0
        if name not in BUILTIN_SOURCES:
            raise ValueError(f"unknown builtin source {name!r}; choose from {sorted(BUILTIN_SOURCES)}")
        return BUILTIN_SOURCES[name](T)
    doc = json.loads(Path(spec).read_text())
    if doc.get("type", "builtin") == "samples":
        return sampled_source(doc["t"], doc["F"])
    return BUILTIN_SOURCES[doc["name"]](float(doc.get("T", 1.0)))


@dataclass
class HeatConfig:
    """Space resolution (cells per unit length), time step and start-up steps."""

    nx: int = 400
    dt: float = 1e-3
    theta: float = 0.5
    rannacher: int = 2
    grading: int = 12
    tail_tol: float = 1e-12


@dataclass
class HeatField:
    """Samples of U on nodes x = [0, cell centres..., 1] and times t."""

    x: np.ndarray
    t: np.ndarray
    U: np.ndarray
    a: CoefficientM
    faces: np.ndarray
    source: BoundarySource | None = None
    meta: dict = field(default_factory=dict)


@dataclass
class FluxTrace:
    t: np.ndarray
    G: np.ndarray


def time_grid(t_sim: float, dt: float, kinks=(), grading: int = 12, ratio: float | None = None,
              return_zones: bool = False):
    """Time nodes graded geometrically into each kink of F, then uniform.

    After every kink tk the steps start at dt * 2^-grading and grow like
    ratio * (t - tk) until they reach dt; this resolves the sqrt(t - tk)
    layer of the boundary flux.  The rest of each stretch between kinks
    is split into equal steps no longer than dt.  ``ratio`` defaults to
    min(0.2, 100 dt) so the graded zone refines together with dt;
    a mode excited at a kink then decays by about exp(-1/ratio) before
    the growing steps let Crank-Nicolson ring.

    With ``return_zones`` also returns ``{tk: (first_step, end_step)}``,
    the step indices of each graded zone.
    """
    if ratio is None:
        ratio = min(0.2, 100.0 * dt)
    marks = sorted({0.0, *(float(k) for k in kinks if 0.0 < k < t_sim)}) + [float(t_sim)]
    nodes = [np.array([0.0])]
    zones = {}
    count = 0
    for tk, nxt in zip(marks[:-1], marks[1:]):
        pts = []
        s = dt * 2.0 ** -grading
        while ratio * s < dt and tk + s < nxt - dt:
            pts.append(tk + s)
            s *= 1.0 + ratio
        start = pts[-1] if pts else tk
        m = max(1, math.ceil((nxt - start) / dt - 1e-9))
        zones[tk] = (count, count + len(pts))
        count += len(pts) + m
        nodes.append(np.array(pts))
        nodes.append(np.linspace(start, nxt, m + 1)[1:])
    t = np.concatenate(nodes)
    return (t, zones) if return_zones else t


def default_tsim(a: CoefficientM, T: float, tail_tol: float = 1e-12) -> float:
    """T plus the time for the slowest mode (rate >= c0 pi^2) to fall below tail_tol."""
    return T + math.log(1.0 / tail_tol) / (a.c0 * math.pi**2)


def cell_faces(a: CoefficientM, nx: int) -> np.ndarray:
    parts = []
    for lo, hi in a.intervals():
        m = max(2, math.ceil(nx * (hi - lo) - 1e-9))
        parts.append(np.linspace(lo, hi, m + 1)[:-1])
    parts.append(np.array([1.0]))
    return np.concatenate(parts)


def _operator(a: CoefficientM, faces: np.ndarray):
    """Mass diagonal, stiffness tridiagonal (diag, sub, super) and x = 1 coupling.

    Interior faces combine the two half cells in series.  The boundary
    faces use the quadratic one-sided gradient through the wall value and
    the two nearest cell centres, e.g. U_x(1) ~ (8F - 9U_N + U_{N-1}) / 3h.
    """
    h = np.diff(faces)
    xc = 0.5 * (faces[:-1] + faces[1:])
    ac = a.eval(xc)
    half = h / (2.0 * ac)  # resistance of a half cell
    t_int = 1.0 / (half[:-1] + half[1:])
    diag = np.zeros(h.size)
    diag[:-1] += t_int
    diag[1:] += t_int
    sub = -t_int.copy()  # K[i+1, i]
    sup = -t_int.copy()  # K[i, i+1]
    g0 = float(a.eval(0.0)) / (3.0 * h[0])
    g1 = float(a.eval_left(1.0)) / (3.0 * h[-1])
    diag[0] += 9.0 * g0
    sup[0] -= g0
    diag[-1] += 9.0 * g1
    sub[-1] -= g1
    return h, xc, diag, sub, sup, 8.0 * g1


@numba.njit(cache=True)
def _theta_run(mass, diag, sub, sup, t_right, u0, fvals, dt, theta):
    """Advance len(fvals) - 1 theta-steps; returns states after each step."""
    n = mass.size
    nsteps = fvals.size - 1
    out = np.empty((nsteps, n))
    # factor A = M + theta dt K once (Thomas), reuse every step
    lo = theta * dt * sub
    up = theta * dt * sup
    dg = mass + theta * dt * diag
    cp = np.empty(n)
    den = np.empty(n)
    den[0] = dg[0]
    for i in range(1, n):
        cp[i - 1] = up[i - 1] / den[i - 1]
        den[i] = dg[i] - lo[i - 1] * cp[i - 1]
    ex = (1.0 - theta) * dt
    u = u0.copy()
    rhs = np.empty(n)
    for s in range(nsteps):
        for i in range(n):
            r = (mass[i] - ex * diag[i]) * u[i]
            if i > 0:
                r -= ex * sub[i - 1] * u[i - 1]
            if i < n - 1:
                r -= ex * sup[i] * u[i + 1]
            rhs[i] = r
        rhs[n - 1] += dt * t_right * ((1.0 - theta) * fvals[s] + theta * fvals[s + 1])
        rhs[0] = rhs[0] / den[0]
        for i in range(1, n):
            rhs[i] = (rhs[i] - lo[i - 1] * rhs[i - 1]) / den[i]
        for i in range(n - 2, -1, -1):
            rhs[i] -= cp[i] * rhs[i + 1]
        for i in range(n):
            u[i] = rhs[i]
            out[s, i] = rhs[i]
    return out


def solve_heat(a: CoefficientM, source: BoundarySource, t_sim: float | None = None,
               cfg: HeatConfig | None = None) -> HeatField:
    """Weak solution of the forward heat problem on [0, t_sim].

    Parameters
    ----------
    a : CoefficientM
        Conductivity, bounded below by ``a.c0 > 0``.
    source : BoundarySource
        Boundary temperature at x = 1.
    t_sim : float, optional
        Final time, must exceed ``source.T``; defaults to :func:`default_tsim`.
    cfg : HeatConfig, optional
    """
    cfg = cfg or HeatConfig()
    if cfg.nx < 2 or not cfg.dt > 0 or not 0.5 <= cfg.theta <= 1.0:
        raise ConfigurationError(
            f"need nx >= 2, dt > 0 and theta in [0.5, 1]; got nx={cfg.nx}, dt={cfg.dt}, "
            f"theta={cfg.theta}. Try nx=400, dt=1e-3."
        )
    if cfg.dt > source.T / 20:
        raise ConfigurationError(
            f"dt={cfg.dt:g} does not resolve the source (T={source.T:g}); "
            f"use dt <= {source.T / 200:.3g}"
        )
    if t_sim is None:
        t_sim = default_tsim(a, source.T, cfg.tail_tol)
    if not t_sim > source.T:
        raise ConfigurationError(f"t_sim={t_sim} must exceed T={source.T}")

    faces = cell_faces(a, cfg.nx)
    mass, xc, diag, sub, sup, t_right = _operator(a, faces)
    if cfg.theta < 1.0 and cfg.dt * diag.max() / mass.min() > 1e8:
        raise ConfigurationError("time step too large for the implicit trapezoid rule; reduce dt")
    t, zones = time_grid(t_sim, cfg.dt, source.kinks, cfg.grading, return_zones=True)
    Fv = source(t)
    steps = np.diff(t)
    thetas = np.full(steps.size, cfg.theta)
    if cfg.theta < 1.0:
        for tk, (j, j_end) in zones.items():
            thetas[j:j + cfg.rannacher] = 1.0

    states = np.zeros((t.size, mass.size))
    u = np.zeros(mass.size)
    i = 0
    while i < steps.size:
        j = i + 1
        while j < steps.size and thetas[j] == thetas[i] and abs(steps[j] - steps[i]) <= 1e-12 * steps[i]:
            j += 1
        seg = _theta_run(mass, diag, sub, sup, t_right, u, Fv[i:j + 1], steps[i], thetas[i])
        states[i + 1:j + 1] = seg
        u = seg[-1]
        i = j

    x = np.concatenate(([0.0], xc, [1.0]))
    U = np.empty((t.size, x.size))
    U[:, 0] = 0.0
    U[:, 1:-1] = states
    U[:, -1] = Fv
    return HeatField(x=x, t=t, U=U, a=a, faces=faces, source=source,
                     meta={"nx": cfg.nx, "dt": cfg.dt, "theta": cfg.theta, "t_sim": float(t[-1])})


def _one_sided_weights(x0: float, x1: float, x2: float) -> np.ndarray:
    """Weights of the quadratic-interpolant derivative at x0."""
    return np.array([
        (2 * x0 - x1 - x2) / ((x0 - x1) * (x0 - x2)),
        (x0 - x2) / ((x1 - x0) * (x1 - x2)),
        (x0 - x1) / ((x2 - x0) * (x2 - x1)),
    ])


def extract_flux(field: HeatField) -> FluxTrace:
    """G(t) = a(1) U_x(1, t) from a second-order one-sided difference."""
    x = field.x
    w = _one_sided_weights(x[-1], x[-2], x[-3])
    dU = field.U[:, -1] * w[0] + field.U[:, -2] * w[1] + field.U[:, -3] * w[2]
    return FluxTrace(t=field.t.copy(), G=float(field.a.eval_left(1.0)) * dU)


def _derivative_weights(x0: float, nodes: np.ndarray) -> np.ndarray:
    """Weights giving p'(x0) for the interpolant p through ``nodes``."""
    n = nodes.size
    V = np.vander(nodes - x0, n, increasing=True).T
    e1 = np.zeros(n)
    e1[1] = 1.0
    return np.linalg.solve(V, e1)


def _interface_cells(field: HeatField, xb: float) -> int:
    return int(np.argmin(np.abs(field.faces - xb)))  # face j: cells j-1 | j


def interface_flux_defect(field: HeatField, order: int = 4) -> np.ndarray:
    """Jump of a U_x across each interior breakpoint of a, per time node.

    Each side's derivative comes from the interpolant through ``order``
    cell values on that side only (cubic by default), so each side sees
    a smooth function and the jump measures the discretisation error
    alone.  Returns an array of shape (n_times, n_interfaces).
    """
    a = field.a
    xc = field.x[1:-1]
    U = field.U[:, 1:-1]
    out = []
    for xb in a.breakpoints[1:-1]:
        j = _interface_cells(field, xb)
        m = min(order, j, xc.size - j)
        left = np.arange(j - 1, j - 1 - m, -1)
        right = np.arange(j, j + m)
        dl = U[:, left] @ _derivative_weights(xb, xc[left])
        dr = U[:, right] @ _derivative_weights(xb, xc[right])
        out.append(a.eval_left(xb) * dl - a.eval(xb) * dr)
    return np.array(out).T if out else np.zeros((field.t.size, 0))


def interface_face_flux(field: HeatField) -> np.ndarray:
    """The scheme's own flux through each interior breakpoint face, (n_times, n_interfaces)."""
    a = field.a
    h = np.diff(field.faces)
    ac = a.eval(field.x[1:-1])
    out = []
    for xb in a.breakpoints[1:-1]:
        j = _interface_cells(field, xb)
        resistance = h[j - 1] / (2 * ac[j - 1]) + h[j] / (2 * ac[j])
        out.append((field.U[:, j + 1] - field.U[:, j]) / resistance)
    return np.array(out).T if out else np.zeros((field.t.size, 0))
