"""Initial-value problem -u'' + k^2 q(x) u = 0, u(0) = 1, u'(0) = 0.

The problem is solved through its Volterra form

    u(x) = 1 + k^2 * int_0^x (x - s) q(s) u(s) ds

discretised by composite trapezoid product integration on a grid whose
nodes include every breakpoint of q (left/right limits of q are used on
either side of a breakpoint).  Because the kernel vanishes at s = x the
discrete equations are explicit and are marched node by node in O(n).
The derivative is never differenced: u'(x_i) = k^2 * trapz(q u, 0, x_i).

For large k the state is carried with a running exponent so that
``log u`` stays finite long after ``u`` itself would overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .coefficient import CoefficientM, DomainError, PiecewisePolynomial

LOG_THRESHOLD = 700.0  # beyond this exp(log_u) overflows a double
_RESCALE = 1e150


class IterationError(RuntimeError):
    """Picard iteration failed to reach the requested tolerance."""


@dataclass
class SolverConfig:
    """Discretisation settings for :func:`solve_volterra`.

    ``n`` is the number of cells per unit length; ``None`` selects the
    accuracy-driven default of :func:`default_resolution`.
    """

    n: int | None = None
    eps_v: float = 1e-12
    max_iter: int = 10_000
    method: str = "march"
    rtol: float = 1e-8
    n_max: int = 2_000_000

    def __post_init__(self):
        if self.n is not None and self.n < 2:
            raise ValueError("grid resolution n must be >= 2")
        if not self.eps_v > 0:
            raise ValueError("eps_v must be positive")
        if self.method not in ("march", "picard"):
            raise ValueError(f"unknown method {self.method!r}")


def default_resolution(k: float, c1: float, rtol: float = 1e-8, n_max: int = 2_000_000) -> int:
    """Cells per unit length for relative accuracy ~rtol.

    The scheme's relative error for u = cosh(mu x) behaves like
    mu^3 h^2 / 12 at x = 1 with mu = k sqrt(c1).
    """
    mu = k * math.sqrt(c1)
    n_acc = math.ceil(math.sqrt(mu**3 / (12.0 * rtol))) if mu > 0 else 0
    return int(min(max(200, math.ceil(50 * k), n_acc), n_max))


def make_grid(breakpoints, n: int) -> np.ndarray:
    """Uniform cells inside each interval, breakpoints always included."""
    bp = np.unique(np.asarray(breakpoints, dtype=float))
    parts = []
    for a, b in zip(bp[:-1], bp[1:]):
        m = max(2, math.ceil(n * (b - a) - 1e-9))
        parts.append(np.linspace(a, b, m + 1)[:-1])
    parts.append(bp[-1:])
    return np.concatenate(parts)


def _limits(q: PiecewisePolynomial, grid: np.ndarray):
    """q right limits at grid[:-1] and left limits at grid[1:]."""
    return q.eval(grid[:-1]), q.eval_left(grid[1:])


@dataclass
class SpectralSolution:
    """Solution of the initial-value problem on a grid at fixed k.

    ``log_u`` and ``log_du`` are always populated; ``u`` and ``du`` hold
    ``inf`` where the value is not representable (``log_form`` is then True).
    """

    k: float
    grid: np.ndarray
    log_u: np.ndarray
    log_du: np.ndarray
    q: PiecewisePolynomial | None = None
    residual: float = 0.0
    iterations: int = 0
    log_form: bool = field(init=False)

    def __post_init__(self):
        self.log_form = bool(np.max(self.log_u) > LOG_THRESHOLD)

    @property
    def u(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_u)

    @property
    def du(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_du)

    def log_at(self, x: float) -> float:
        """log u(x) by interpolation in log space (exact at grid nodes)."""
        return float(np.interp(x, self.grid, self.log_u))

    def scaled(self) -> tuple[np.ndarray, np.ndarray, float]:
        """(u / C, u' / C, log C) with C = max u, safe in any regime."""
        top = float(np.max(self.log_u))
        return np.exp(self.log_u - top), np.exp(self.log_du - top), top


@numba.njit(cache=True, nogil=True)
def _march(h, qr, ql, k2):
    n = h.size + 1
    ut = np.empty(n)
    at = np.empty(n)
    sexp = np.empty(n)
    ut[0] = 1.0
    at[0] = 0.0
    sexp[0] = 0.0
    u = 1.0
    a_int = 0.0
    d_int = 0.0
    one = 1.0  # the constant term, rescaled alongside the state
    s = 0.0
    for i in range(n - 1):
        hi = h[i]
        d_int = d_int + hi * (a_int + 0.5 * hi * qr[i] * u)
        u_next = one + k2 * d_int
        a_int = a_int + 0.5 * hi * (qr[i] * u + ql[i] * u_next)
        u = u_next
        if u > _RESCALE:
            u /= _RESCALE
            a_int /= _RESCALE
            d_int /= _RESCALE
            one /= _RESCALE
            s += math.log(_RESCALE)
        ut[i + 1] = u
        at[i + 1] = a_int
        sexp[i + 1] = s
    return ut, at, sexp


def _volterra_apply(h, qr, ql, k2, u):
    """(1 + k^2 V u, int_0^x q u) for the discrete product-trapezoid operator."""
    inc = 0.5 * h * (qr * u[:-1] + ql * u[1:])
    a_int = np.concatenate(([0.0], np.cumsum(inc)))
    d_inc = h * (a_int[:-1] + 0.5 * h * qr * u[:-1])
    d_int = np.concatenate(([0.0], np.cumsum(d_inc)))
    return 1.0 + k2 * d_int, a_int


def _picard(h, qr, ql, k2, eps, max_iter):
    u = np.ones(h.size + 1)
    for it in range(1, max_iter + 1):
        new, a_int = _volterra_apply(h, qr, ql, k2, u)
        if not np.all(np.isfinite(new)):
            raise IterationError("Picard iterates overflowed; use method='march'")
        change = np.max(np.abs(new - u) / new)
        u = new
        if change <= eps:
            return u, a_int, it
    raise IterationError(
        f"Picard iteration did not reach {eps:g} in {max_iter} iterations "
        f"(k^2 c1 too large for this path; use method='march')"
    )


def fixed_point_residual(sol: SpectralSolution) -> float:
    """Relative sup-norm residual of u = 1 + k^2 V u on the solution grid."""
    if sol.q is None:
        raise ValueError("solution carries no coefficient")
    h = np.diff(sol.grid)
    qr, ql = _limits(sol.q, sol.grid)
    us, _, top = sol.scaled()
    inc = 0.5 * h * (qr * us[:-1] + ql * us[1:])
    a_int = np.concatenate(([0.0], np.cumsum(inc)))
    d_int = np.concatenate(([0.0], np.cumsum(h * (a_int[:-1] + 0.5 * h * qr * us[:-1]))))
    rhs = math.exp(-top) + sol.k**2 * d_int
    seen = us > 0  # nodes where u / max u underflowed carry no information
    return float(np.max(np.abs(us[seen] - rhs[seen]) / us[seen]))


def solve_volterra(q: CoefficientM, k: float, cfg: SolverConfig | None = None, grid=None) -> SpectralSolution:
    """Solve the Volterra form of the initial-value problem at spectral parameter k.

    Parameters
    ----------
    q : CoefficientM
        Coefficient multiplying k^2.
    k : float
        Spectral parameter, k > 0.
    cfg : SolverConfig, optional
        Grid resolution and method; defaults to marching on the
        accuracy-driven grid.
    grid : array_like, optional
        Explicit grid; must contain 0, 1 and every breakpoint of q.

    Returns
    -------
    SpectralSolution
    """
    if not k > 0:
        raise DomainError(f"spectral parameter must be positive, got k={k}")
    cfg = cfg or SolverConfig()
    if grid is None:
        c1 = q.range_bounds()[1]
        n = cfg.n or default_resolution(k, c1, cfg.rtol, cfg.n_max)
        grid = make_grid(q.breakpoints, n)
    else:
        grid = np.asarray(grid, dtype=float)
        missing = np.setdiff1d(q.breakpoints, grid)
        if missing.size:
            raise DomainError(f"grid misses breakpoints {missing.tolist()}")
    h = np.diff(grid)
    qr, ql = _limits(q, grid)
    k2 = float(k) ** 2

    if cfg.method == "picard":
        u, a_int, iters = _picard(h, qr, ql, k2, cfg.eps_v, cfg.max_iter)
        with np.errstate(divide="ignore"):
            log_u, log_du = np.log(u), np.log(k2 * a_int)
    else:
        ut, at, sexp = _march(h, qr, ql, k2)
        iters = 0
        with np.errstate(divide="ignore"):
            log_u = np.log(ut) + sexp
            log_du = np.log(k2 * at) + sexp
    sol = SpectralSolution(k=float(k), grid=grid, log_u=log_u, log_du=log_du, q=q, iterations=iters)
    sol.residual = fixed_point_residual(sol)
    if cfg.method == "picard" and sol.residual > 10 * cfg.eps_v + 1e-13:
        raise IterationError(f"fixed-point residual {sol.residual:.3g} above eps_v={cfg.eps_v:g}")
    return sol


@dataclass
class PropertyReport:
    min_u_minus_1: float
    min_du: float
    min_second_difference: float
    tol: float

    @property
    def passed(self) -> bool:
        return min(self.min_u_minus_1, self.min_du, self.min_second_difference) >= -self.tol


def check_pointwise_properties(sol: SpectralSolution, tol: float = 1e-10) -> PropertyReport:
    """u >= 1, u' >= 0 and discrete convexity on the grid, relative to max u.

    Convexity uses divided second differences of u so that nonuniform
    grids (refined at breakpoints) are handled.
    """
    us, dus, top = sol.scaled()
    x = sol.grid
    # u - 1 >= 0 checked as log u >= 0
    min_u = float(np.min(np.expm1(sol.log_u.clip(max=50.0))))
    dd = np.diff(us) / np.diff(x)
    second = np.diff(dd) / (0.5 * (x[2:] - x[:-2]))
    return PropertyReport(
        min_u_minus_1=min_u,
        min_du=float(np.min(dus)),
        min_second_difference=float(np.min(second)) if second.size else 0.0,
        tol=tol,
    )


def monotonicity_in_k2(q: CoefficientM, k1: float, k2: float, x: float,
                       cfg: SolverConfig | None = None, tol: float = 1e-10) -> bool:
    """True when u(x, k2) >= u(x, k1) (compared in log form)."""
    if not 0 < k1 < k2:
        raise DomainError("need 0 < k1 < k2")
    if not 0.0 <= x <= 1.0:
        raise DomainError("x must lie in [0, 1]")
    lo = solve_volterra(q, k1, cfg).log_at(x)
    hi = solve_volterra(q, k2, cfg).log_at(x)
    return hi >= lo - tol


def growth_ratio(q: CoefficientM, y: float, x: float, k: float,
                 cfg: SolverConfig | None = None, log: bool = False) -> float:
    """u(x, k) / u(y, k) for 0 <= y < x <= 1 (its logarithm when ``log``).

    Grid nodes are placed at y and x so no interpolation enters the ratio.
    """
    if not 0.0 <= y < x <= 1.0:
        raise DomainError("need 0 <= y < x <= 1")
    cfg = cfg or SolverConfig()
    c1 = q.range_bounds()[1]
    n = cfg.n or default_resolution(k, c1, cfg.rtol, cfg.n_max)
    grid = make_grid(np.union1d(q.breakpoints, [y, x]), n)
    sol = solve_volterra(q, k, cfg, grid=grid)
    val = sol.log_at(x) - sol.log_at(y)
    return val if log else math.exp(val)


def growth_lower_bound(c0: float, y: float, x: float, k: float) -> float:
    """1 + k^2 c0 (x - y)^2 / 2."""
    return 1.0 + 0.5 * k**2 * c0 * (x - y) ** 2
