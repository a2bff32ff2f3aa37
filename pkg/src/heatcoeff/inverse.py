"""Least-squares reconstruction of q (= 1/a) from Laplace-domain boundary data.

The model datum at each k is

    g_model(k^2) = [k^2 f(k^2)]_data * u(1) / u'(1)

so only q enters; residuals are taken between logarithms because g
varies over orders of magnitude across the k grid.  Unknowns are mapped
to unconstrained reals: piece values through a scaled logistic onto the
bound box, interior breakpoints through a softmax over interval lengths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .coefficient import CoefficientError, CoefficientM, difference
from .heat_forward import BoundarySource
from .parallel import pmap
from .property_c import _scaled_integral, _solve_pair
from .sl_solver import SolverConfig, solve_volterra
from .spectral_reduction import SpectralData


class ParameterBoundError(ValueError):
    """Parameters decode to a coefficient outside the admissible box."""


def _logistic(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


def _logit(p):
    p = np.asarray(p, dtype=float)
    return np.log(p) - np.log1p(-p)


@dataclass
class ModelSpec:
    """Parametrised family of coefficients for the fit.

    ``breakpoints`` fixes the partition; with ``free_breakpoints`` only its
    length (the piece count) is used and interior points become unknowns,
    started from the given positions.  ``degree`` is per piece; a piece
    of degree d is described by its values at d + 1 Chebyshev points.
    """

    breakpoints: list
    degree: int = 0
    c0: float = 0.25
    c1: float = 4.0
    free_breakpoints: bool = False
    init_values: list | None = None
    min_gap: float = 1e-3

    def __post_init__(self):
        self.breakpoints = [float(b) for b in self.breakpoints]
        if self.degree < 0:
            raise ValueError("degree must be >= 0")
        if not 0 < self.c0 < self.c1:
            raise ValueError("bound box must satisfy 0 < c0 < c1")
        if self.init_values is None:
            mid = 0.5 * (self.c0 + self.c1)
            self.init_values = [mid] * self.n_values

    @property
    def n_pieces(self) -> int:
        return len(self.breakpoints) - 1

    @property
    def n_values(self) -> int:
        return self.n_pieces * (self.degree + 1)

    @property
    def n_params(self) -> int:
        return self.n_values + (self.n_pieces - 1 if self.free_breakpoints else 0)

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelSpec":
        bps = doc.get("breakpoints")
        if bps is None:
            n = int(doc["n_pieces"])
            bps = list(np.linspace(0.0, 1.0, n + 1))
        return cls(
            breakpoints=bps,
            degree=int(doc.get("degree", 0)),
            c0=float(doc.get("c0", 0.25)),
            c1=float(doc.get("c1", 4.0)),
            free_breakpoints=bool(doc.get("free_breakpoints", False)),
            init_values=doc.get("init_values"),
        )

    def nodes(self, a: float, b: float) -> np.ndarray:
        if self.degree == 0:
            return np.array([0.5 * (a + b)])
        j = np.arange(self.degree + 1)
        return 0.5 * (a + b) - 0.5 * (b - a) * np.cos(np.pi * j / self.degree)

    # -- parameter maps ----------------------------------------------------
    def encode(self, values, breakpoints=None) -> np.ndarray:
        vals = np.asarray(values, dtype=float)
        frac = (vals - self.c0) / (self.c1 - self.c0)
        if np.any(frac <= 0) or np.any(frac >= 1):
            raise ParameterBoundError("initial values must lie strictly inside (c0, c1)")
        theta = list(_logit(frac))
        if self.free_breakpoints:
            bp = np.asarray(self.breakpoints if breakpoints is None else breakpoints, dtype=float)
            gaps = np.diff(bp) - self.min_gap
            free = 1.0 - self.min_gap * self.n_pieces
            logs = np.log(gaps / free)
            theta.extend(logs[:-1] - logs[-1])
        return np.array(theta)

    def decode_breakpoints(self, theta) -> np.ndarray:
        if not self.free_breakpoints:
            return np.asarray(self.breakpoints)
        z = np.append(np.asarray(theta[self.n_values:], dtype=float), 0.0)
        w = np.exp(z - z.max())
        gaps = self.min_gap + (1.0 - self.min_gap * self.n_pieces) * w / w.sum()
        bp = np.concatenate(([0.0], np.cumsum(gaps)))
        bp[-1] = 1.0
        return bp

    def decode_values(self, theta) -> np.ndarray:
        return self.c0 + (self.c1 - self.c0) * _logistic(theta[: self.n_values])

    def physical(self, theta) -> np.ndarray:
        """Node values followed by interior breakpoints (when free)."""
        vals = self.decode_values(theta)
        if not self.free_breakpoints:
            return vals
        return np.concatenate((vals, self.decode_breakpoints(theta)[1:-1]))

    def decode(self, theta) -> CoefficientM:
        theta = np.asarray(theta, dtype=float)
        bp = self.decode_breakpoints(theta)
        vals = self.decode_values(theta).reshape(self.n_pieces, self.degree + 1)
        pieces = []
        for (a, b), v in zip(zip(bp[:-1], bp[1:]), vals):
            if self.degree == 0:
                pieces.append([v[0]])
            else:
                pieces.append(np.polynomial.Polynomial.fit(self.nodes(a, b), v, self.degree).convert().coef)
        try:
            return CoefficientM(bp, pieces, c0=self.c0, c1=self.c1, max_degree=max(8, self.degree))
        except CoefficientError as exc:
            raise ParameterBoundError(str(exc)) from None


def model_data(q: CoefficientM, data: SpectralData, cfg: SolverConfig | None = None) -> np.ndarray:
    """log g_model on the data's k grid, using the data's own k^2 f(k^2)."""
    def one(k):
        sol = solve_volterra(q, k, cfg)
        return sol.log_u[-1] - sol.log_du[-1]

    return np.log(data.lf) + np.array(pmap(one, data.k))


def residual(params, data: SpectralData, spec: ModelSpec, source: BoundarySource | None = None,
             cfg: SolverConfig | None = None) -> np.ndarray:
    """Log-domain residual vector.

    First block: log g_model - log g_data per k.  When the boundary source
    is known a second block log(k^2 f)_model - log(k^2 f)_data is appended;
    it does not depend on q and measures data consistency only.
    """
    q = spec.decode(params)
    r = model_data(q, data, cfg) - data.log_g
    if source is None:
        return r
    lf_model = np.array([k * k * source.laplace(k * k) for k in data.k])
    return np.concatenate((r, np.log(lf_model) - data.log_lf))


def fd_jacobian(fun, x, f0=None, rel_step: float = 1e-6, centered: bool = False) -> np.ndarray:
    """Finite-difference Jacobian with per-parameter step rel_step * max(1, |x_j|)."""
    x = np.asarray(x, dtype=float)
    if f0 is None and not centered:
        f0 = fun(x)
    cols = []
    for j in range(x.size):
        h = rel_step * max(1.0, abs(x[j]))
        e = np.zeros_like(x)
        e[j] = h
        if centered:
            cols.append((fun(x + e) - fun(x - e)) / (2 * h))
        else:
            cols.append((fun(x + e) - f0) / h)
    return np.column_stack(cols)


@dataclass
class ReconstructionResult:
    estimate: CoefficientM
    params: np.ndarray
    physical: np.ndarray
    history: list
    misfit: float
    iterations: int
    converged: bool
    reason: str
    covariance: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "coefficient": self.estimate.to_dict(),
            "misfit": self.misfit,
            "iterations": self.iterations,
            "converged": self.converged,
            "reason": self.reason,
            "residual_history": [float(v) for v in self.history],
            "parameters": [float(v) for v in self.physical],
            "covariance": None if self.covariance is None else self.covariance.tolist(),
        }


def levenberg_marquardt(fun, x0, tol_g: float = 1e-10, tol_x: float = 1e-12, max_iter: int = 200,
                        rel_step: float = 1e-6, lam0: float = 1e-3, bad_point=(ParameterBoundError,)):
    """Damped Gauss-Newton with Marquardt scaling.

    Only steps that lower the cost are accepted.  A trial point raising
    one of ``bad_point`` is treated as a rejected step.  Returns
    ``(x, r, J, history, iterations, converged, reason)``; ``history``
    holds the residual norm after every accepted step.
    """
    x = np.asarray(x0, dtype=float).copy()
    r = fun(x)
    cost = 0.5 * float(r @ r)
    history = [math.sqrt(2 * cost)]
    lam = lam0
    reason = "max_iter"
    J = None
    it = 0
    for it in range(1, max_iter + 1):
        J = fd_jacobian(fun, x, r, rel_step)
        grad = J.T @ r
        if np.max(np.abs(grad)) < tol_g:
            reason = "gtol"
            break
        A = J.T @ J
        scale = np.maximum(np.diag(A), 1e-12 * max(1.0, np.max(np.diag(A))))
        while True:
            try:
                step = np.linalg.solve(A + lam * np.diag(scale), -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = x + step
            try:
                r_new = fun(trial)
                cost_new = 0.5 * float(r_new @ r_new)
            except bad_point:
                cost_new = math.inf
            if cost_new < cost:
                x, r, cost = trial, r_new, cost_new
                history.append(math.sqrt(2 * cost))
                lam = max(lam / 3.0, 1e-12)
                break
            lam *= 4.0
            if lam > 1e12:
                break
        if lam > 1e12:
            reason = "stalled"
            break
        if np.linalg.norm(step) < tol_x * (np.linalg.norm(x) + tol_x):
            reason = "xtol"
            break
    converged = reason in ("gtol", "xtol", "stalled")
    return x, r, J, history, it, converged, reason


def reconstruct(data: SpectralData, spec: ModelSpec, cfg: SolverConfig | None = None,
                tol_g: float = 1e-10, tol_x: float = 1e-12, max_iter: int = 200,
                rel_step: float = 1e-6) -> ReconstructionResult:
    """Fit ``spec`` to ``data``.

    ``converged`` is False only when the iteration budget runs out; a
    "stalled" run (no damping level lowers the cost any further) sits at a
    numerical minimum and counts as converged.
    """
    x0 = spec.encode(spec.init_values)
    if spec.free_breakpoints:
        # values first at the initial partition, then release the breakpoints
        fixed = ModelSpec(spec.breakpoints, spec.degree, spec.c0, spec.c1,
                          init_values=list(spec.init_values))
        warm = reconstruct(data, fixed, cfg, tol_g, tol_x, max_iter, rel_step)
        x0 = spec.encode(warm.physical)

    def fun(theta):
        return residual(theta, data, spec, cfg=cfg)

    x, r, J, history, iters, converged, reason = levenberg_marquardt(
        fun, x0, tol_g=tol_g, tol_x=tol_x, max_iter=max_iter, rel_step=rel_step
    )
    q = spec.decode(x)
    cov = None
    if J is not None and r.size > x.size:
        sigma2 = float(r @ r) / (r.size - x.size)
        try:
            cov_theta = sigma2 * np.linalg.inv(J.T @ J)
            D = fd_jacobian(spec.physical, x, rel_step=1e-7)
            cov = D @ cov_theta @ D.T
        except np.linalg.LinAlgError:
            cov = None
    misfit = float(np.linalg.norm(r) / max(np.linalg.norm(data.log_g), 1e-300))
    return ReconstructionResult(
        estimate=q, params=x, physical=spec.physical(x), history=history, misfit=misfit,
        iterations=iters, converged=converged, reason=reason, covariance=cov,
    )


@dataclass
class SeparationReport:
    k: np.ndarray
    relative_separation: np.ndarray
    functional: np.ndarray  # int p u1 u2 / (u1(1) u2(1))
    max_separation: float
    identical: bool


def distinguishability_test(q1: CoefficientM, q2: CoefficientM, kgrid,
                            cfg: SolverConfig | None = None, tol: float = 1e-12) -> SeparationReport:
    """How far apart the data of two coefficients are on a k grid.

    For a common source the ratio of the g data is the ratio of
    u(1)/u'(1), so f cancels.  Alongside, the normalised functional
    int (q2 - q1) u1 u2 is reported as the driver of the separation.
    The default solver tolerance is 1e-6, ample for separations judged
    against thresholds of 1e-4 and about ten times cheaper than 1e-8.
    """
    cfg = cfg or SolverConfig(rtol=1e-6)
    ks = np.asarray(kgrid, dtype=float)
    p = difference(q2, q1).p
    zero = p.integrate(absolute=True) == 0.0

    def one(k):
        # one paired solve serves both the data ratio and the functional
        a, b = _solve_pair(q1, q2, k, p.breakpoints, cfg)
        lr = (a.log_u[-1] - a.log_du[-1]) - (b.log_u[-1] - b.log_du[-1])
        if zero:
            return abs(math.expm1(lr)), 0.0
        log_w = a.log_u + b.log_u
        val, top = _scaled_integral(p, a.grid, log_w)
        return abs(math.expm1(lr)), val * math.exp(top - log_w[-1])

    rows = np.array(pmap(one, ks), dtype=float).reshape(-1, 2)
    sep, func = rows[:, 0], rows[:, 1]
    mx = float(np.max(sep))
    return SeparationReport(ks, sep, func, mx, identical=mx <= tol)
