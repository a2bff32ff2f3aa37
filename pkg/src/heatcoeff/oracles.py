"""Closed-form reference solutions used by the test suite and ``selftest``.

None of these share code with the numerical paths they check.
"""

from __future__ import annotations

import math

import numpy as np


def transfer_matrix(breakpoints, values, k: float, x=None):
    """(u, u') of -u'' + k^2 q u = 0, u(0) = 1, u'(0) = 0 for piecewise-constant q.

    Propagates the state across each constant piece with the exact
    cosh/sinh matrix; value and derivative are continuous at interfaces.
    Returns the state at 1, or at each point of ``x`` when given.
    """
    bp = np.asarray(breakpoints, dtype=float)
    vals = np.asarray(values, dtype=float)
    pts = np.atleast_1d(np.asarray([1.0] if x is None else x, dtype=float))
    out_u = np.empty(pts.size)
    out_du = np.empty(pts.size)
    for j, xe in enumerate(pts):
        u, du = 1.0, 0.0
        for a, b, c in zip(bp[:-1], bp[1:], vals):
            if a >= xe:
                break
            L = min(b, xe) - a
            mu = k * math.sqrt(c)
            ch, sh = math.cosh(mu * L), math.sinh(mu * L)
            u, du = ch * u + sh / mu * du, mu * sh * u + ch * du
        out_u[j], out_du[j] = u, du
    if x is None:
        return out_u[0], out_du[0]
    return out_u, out_du


def cosh_square_integral(k: float) -> float:
    """int_0^1 cosh(k x)^2 dx."""
    return 0.5 + math.sinh(2 * k) / (4 * k)


def _sine_modes(T: float, n_terms: int):
    n = np.arange(1, n_terms + 1, dtype=float)
    mu = (n * math.pi) ** 2
    b = 2.0 * (-1.0) ** (n + 1) / (n * math.pi)
    return n, mu, b, math.pi / T


def heat_series(x, t, T: float = 1.0, n_terms: int = 4000) -> np.ndarray:
    """U(x, t) for a = 1 and F(t) = sin(pi t / T) on [0, T], zero after.

    Writes U = x F(t) + W with W expanded in sin(n pi x); each mode
    coefficient follows from Duhamel's formula in closed form.
    Returns an array of shape (len(t), len(x)).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    n, mu, b, w = _sine_modes(T, n_terms)
    S = np.sin(np.outer(n, x) * math.pi)  # (modes, x)
    out = np.empty((t.size, x.size))
    for j, tj in enumerate(t):
        te = min(tj, T)
        wn = -b * w * (mu * math.cos(w * te) + w * math.sin(w * te) - mu * np.exp(-mu * te)) / (mu**2 + w**2)
        F = math.sin(w * tj) if tj <= T else 0.0
        if tj > T:
            wn = wn * np.exp(-mu * (tj - T))
        out[j] = x * F + wn @ S
    return out


def heat_series_flux(t, T: float = 1.0, n_terms: int = 20000) -> np.ndarray:
    """G(t) = U_x(1, t) for the case of :func:`heat_series`.

    The slowly converging part of the mode sum is summed in closed form
    (sum 1 / (n pi)^2 = 1/6) so that the remainder decays like n^-4.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    n, mu, _b, w = _sine_modes(T, n_terms)
    den = mu**2 + w**2
    out = np.empty(t.size)
    for j, tj in enumerate(t):
        if tj <= 0.0:
            out[j] = 0.0
            continue
        if tj <= T:
            c, s = math.cos(w * tj), math.sin(w * tj)
            series = c / 6.0 - np.sum(w**2 * c / (mu * den) + mu * np.exp(-mu * tj) / den) + np.sum(w * s / den)
            out[j] = math.sin(w * tj) + 2.0 * w * series
        else:
            c, s = math.cos(w * T), math.sin(w * T)
            terms = (mu * c + w * s - mu * np.exp(-mu * T)) / den
            out[j] = 2.0 * w * np.sum(terms * np.exp(-mu * (tj - T)))
    return out


def sine_laplace(lam: float, T: float = 1.0) -> float:
    """int_0^T sin(pi t / T) e^{-lam t} dt."""
    w = math.pi / T
    return w * (1.0 + math.exp(-lam * T)) / (lam**2 + w**2)
