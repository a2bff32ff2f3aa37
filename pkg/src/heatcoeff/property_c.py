"""Orthogonality functional I(k) = int_0^1 h u1 u2 dx and its decay experiments.

u1, u2 solve -u'' + k^2 q_j u = 0, u(0) = 1, u'(0) = 0.  Products u1 u2
grow like exp(k (sqrt(c1) + sqrt(c2))), so every integral is formed in
log space: the integrand is scaled by exp(-max log(u1 u2)) and the scale
is carried separately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .coefficient import CoefficientM, PiecewisePolynomial, SignedDifference, signed
from .parallel import pmap
from .sl_solver import SolverConfig, default_resolution, growth_lower_bound, make_grid, solve_volterra


class PreconditionError(ValueError):
    pass


def _as_signed(h) -> SignedDifference:
    return h if isinstance(h, SignedDifference) else signed(h)


def _solve_pair(q1, q2, k, extra_points=(), cfg=None, n=None):
    """Solve both problems on one grid containing all breakpoints and extra points."""
    cfg = cfg or SolverConfig()
    if n is None:
        n = cfg.n or max(
            default_resolution(k, q1.range_bounds()[1], cfg.rtol, cfg.n_max),
            default_resolution(k, q2.range_bounds()[1], cfg.rtol, cfg.n_max),
        )
    pts = np.union1d(np.union1d(q1.breakpoints, q2.breakpoints), np.asarray(extra_points, dtype=float))
    grid = make_grid(pts, n)
    return solve_volterra(q1, k, cfg, grid=grid), solve_volterra(q2, k, cfg, grid=grid)


def _scaled_integral(p: PiecewisePolynomial, grid, log_w, lo=0.0, hi=1.0):
    """int_lo^hi p(x) exp(log_w(x) - top) dx by trapezoid; returns (value, top).

    Nodes ``lo`` and ``hi`` must be on the grid; p uses one-sided limits.
    """
    top = float(np.max(log_w))
    w = np.exp(log_w - top)
    hx = np.diff(grid)
    pr = p.eval(grid[:-1]) * w[:-1]
    pl = p.eval_left(grid[1:]) * w[1:]
    cells = 0.5 * hx * (pr + pl)
    inside = (grid[:-1] >= lo - 1e-15) & (grid[1:] <= hi + 1e-15)
    return float(np.sum(cells[inside])), top


@dataclass
class OrthogonalityValue:
    k: float
    sign: int
    log_abs: float
    normalized: float

    @property
    def value(self) -> float:
        if self.sign == 0:
            return 0.0
        if self.log_abs > 709.0:
            return math.copysign(math.inf, self.sign)
        return self.sign * math.exp(self.log_abs)


def orthogonality_functional(h, q1: CoefficientM, q2: CoefficientM, k: float,
                             cfg: SolverConfig | None = None, n: int | None = None) -> OrthogonalityValue:
    """I(k) = int_0^1 h u1 u2 dx, kept as (sign, log|I|) plus I / (u1(1) u2(1))."""
    sd = _as_signed(h)
    s1, s2 = _solve_pair(q1, q2, k, sd.p.breakpoints, cfg, n)
    log_w = s1.log_u + s2.log_u
    val, top = _scaled_integral(sd.p, s1.grid, log_w)
    if val == 0.0:
        return OrthogonalityValue(float(k), 0, -math.inf, 0.0)
    normalized = val * math.exp(top - log_w[-1])
    return OrthogonalityValue(float(k), int(np.sign(val)), math.log(abs(val)) + top, normalized)


@dataclass
class OrthogonalityTrace:
    k: np.ndarray
    I: np.ndarray
    normalized: np.ndarray
    log_abs: np.ndarray
    sign: np.ndarray


def orthogonality_trace(h, q1, q2, kgrid, cfg=None) -> OrthogonalityTrace:
    sd = _as_signed(h)
    vals = pmap(lambda k: orthogonality_functional(sd, q1, q2, k, cfg), np.asarray(kgrid, dtype=float))
    return OrthogonalityTrace(
        k=np.array([v.k for v in vals]),
        I=np.array([v.value for v in vals]),
        normalized=np.array([v.normalized for v in vals]),
        log_abs=np.array([v.log_abs for v in vals]),
        sign=np.array([v.sign for v in vals]),
    )


@dataclass
class DecayReport:
    """Per-k quantities of the rightmost-interval decay argument.

    ``B`` is ratio * int_0^z |h| with ratio = u1(z) u2(z) / (u1(y) u2(y));
    ``growth_bound`` is int_0^z |h| divided by the product of the two
    quadratic growth lower bounds, so B <= growth_bound must hold.
    """

    z: float
    y: float
    sign: int
    k: np.ndarray
    log_ratio: np.ndarray
    B: np.ndarray
    growth_bound: np.ndarray
    mass_left: float
    mass_right_of_y: float
    right_lower_ok: np.ndarray  # int_z^1 h u u >= (int_y^1 h) u(y) u(y)
    constrained_ok: np.ndarray  # with I(k) = 0 imposed by rescaling h on [0, z)
    notes: dict = field(default_factory=dict)

    @property
    def decreasing(self) -> bool:
        return bool(np.all(np.diff(self.B) <= 1e-14 * self.B[:-1]))

    @property
    def within_growth_bound(self) -> bool:
        return bool(np.all(self.B <= self.growth_bound * (1 + 1e-8)))

    def loglog_slope(self) -> float:
        """Least-squares slope of log B against log(1 + k^2)."""
        good = self.B > 0
        x = np.log1p(self.k[good] ** 2)
        return float(np.polyfit(x, np.log(self.B[good]), 1)[0])


def tail_decay_experiment(h, q1: CoefficientM, q2: CoefficientM, kgrid,
                          z: float | None = None, y: float | None = None,
                          cfg: SolverConfig | None = None) -> DecayReport:
    """Evaluate the decay bound on the rightmost one-signed interval [z, 1] of h.

    ``z`` defaults to the last sign-change point of h (exact, from the
    sign structure) and ``y`` to the midpoint of [z, 1].
    """
    sd = _as_signed(h)
    z_auto, s = sd.last_sign_interval()
    if z is None:
        z = z_auto
    else:
        tail = [sg for (lo, hi), sg in sd.sign_intervals if hi > z and sg != 0]
        if len(set(tail)) > 1:
            raise PreconditionError(f"h changes sign on [{z}, 1]")
        s = tail[0] if tail else 0
    if y is None:
        y = 0.5 * (z + 1.0)
    if not z < y < 1.0:
        raise PreconditionError(f"need z < y < 1, got z={z}, y={y}")
    mass_left = sd.p.integrate(0.0, z, absolute=True)
    mass_right = abs(sd.p.integrate(y, 1.0))
    ks = np.asarray(kgrid, dtype=float)
    abs_h = _abs_pp(sd.p)
    log_ratio, B, bound, eq21, eq22 = [], [], [], [], []
    for k in ks:
        s1, s2 = _solve_pair(q1, q2, k, [z, y], cfg)
        g = s1.grid
        lw = s1.log_u + s2.log_u
        iz, iy = int(np.searchsorted(g, z)), int(np.searchsorted(g, y))
        lr = lw[iz] - lw[iy]
        log_ratio.append(lr)
        B.append(math.exp(lr) * mass_left)
        bound.append(mass_left / (growth_lower_bound(q1.c0, z, y, k) * growth_lower_bound(q2.c0, z, y, k)))
        # everything below is scaled by u1(y) u2(y)
        right, top = _scaled_integral(sd.p, g, lw, z, 1.0)
        right_y = s * right * math.exp(top - lw[iy])
        eq21.append(right_y >= mass_right * (1 - 1e-8) - 1e-12)
        left, topl = _scaled_integral(abs_h, g, lw, 0.0, z)
        if mass_left == 0.0 or left == 0.0:
            eq22.append(True)
            continue
        alpha = (s * right * math.exp(top - topl)) / left  # rescaling that makes I(k) = 0
        eq22.append(mass_right <= math.exp(lr) * alpha * mass_left * (1 + 1e-8) + 1e-12)
    return DecayReport(
        z=float(z), y=float(y), sign=int(s), k=ks,
        log_ratio=np.array(log_ratio), B=np.array(B), growth_bound=np.array(bound),
        mass_left=mass_left, mass_right_of_y=mass_right,
        right_lower_ok=np.array(eq21), constrained_ok=np.array(eq22),
    )


def _abs_pp(p: PiecewisePolynomial) -> PiecewisePolynomial:
    """|p| as a piecewise polynomial, splitting pieces at their real roots."""
    sd = signed(p)
    bps = sorted({0.0, 1.0} | {lo for (lo, _), _ in sd.sign_intervals})
    ref = p.refined(bps)
    pieces = []
    for (a, b), poly in zip(ref.intervals(), ref.pieces):
        mid = poly(0.5 * (a + b))
        pieces.append(poly.coef * (1.0 if mid >= 0 else -1.0))
    return PiecewisePolynomial(ref.breakpoints, pieces)


@dataclass
class ProbeResult:
    verdict: str
    max_normalized: float
    k_at_max: float
    eps: float
    trace: OrthogonalityTrace | None = None


def completeness_probe(h, q1, q2, kgrid, eps: float | None = None, cfg=None) -> ProbeResult:
    """Look for a k at which |I(k)| / (u1(1) u2(1)) exceeds eps.

    A finite grid can only exhibit witnesses against orthogonality; it
    never certifies h = 0, so the verdicts are "vacuous" (h = 0),
    "inconsistent-with-orthogonality" or "no-witness".
    """
    sd = _as_signed(h)
    norm1 = sd.p.integrate(absolute=True)
    if norm1 == 0.0:
        return ProbeResult("vacuous", 0.0, math.nan, 0.0 if eps is None else eps)
    if eps is None:
        eps = 1e-8 * norm1
    trace = orthogonality_trace(sd, q1, q2, kgrid, cfg)
    mags = np.abs(trace.normalized)
    i = int(np.argmax(mags))
    verdict = "inconsistent-with-orthogonality" if mags[i] > eps else "no-witness"
    return ProbeResult(verdict, float(mags[i]), float(trace.k[i]), float(eps), trace)
