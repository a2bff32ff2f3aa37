"""Piecewise-polynomial coefficients on [0, 1].

A coefficient is stored as a list of breakpoints ``0 = x_0 < ... < x_M = 1``
and one power-series polynomial (ascending coefficients, global variable x)
per interval.  Values at interior breakpoints are right limits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.polynomial import Chebyshev, Polynomial

MAX_DEGREE = 8


class CoefficientError(ValueError):
    """Raised when a coefficient violates the admissible class."""


class DomainError(ValueError):
    """Raised for arguments outside [0, 1] or otherwise out of range."""


def _trim(coefs) -> np.ndarray:
    c = np.atleast_1d(np.asarray(coefs, dtype=float))
    if c.size == 0:
        return np.zeros(1)
    return c


class PiecewisePolynomial:
    """Piecewise polynomial on [0, 1] with right-continuous values."""

    def __init__(self, breakpoints: Sequence[float], pieces: Sequence[Sequence[float]]):
        bp = np.asarray(breakpoints, dtype=float)
        if bp.ndim != 1 or bp.size < 2:
            raise CoefficientError("need at least two breakpoints")
        if bp[0] != 0.0 or bp[-1] != 1.0:
            raise CoefficientError("breakpoints must start at 0 and end at 1")
        if np.any(np.diff(bp) <= 0):
            raise CoefficientError("breakpoints must be strictly increasing")
        if len(pieces) != bp.size - 1:
            raise CoefficientError(
                f"{bp.size - 1} intervals but {len(pieces)} pieces given"
            )
        self.breakpoints = bp
        self.pieces = [Polynomial(_trim(p)) for p in pieces]

    @property
    def n_pieces(self) -> int:
        return len(self.pieces)

    def piece_index(self, x) -> np.ndarray:
        """Index of the piece holding x, right-limit convention at breakpoints."""
        idx = np.searchsorted(self.breakpoints, x, side="right") - 1
        return np.clip(idx, 0, self.n_pieces - 1)

    def __call__(self, x):
        return self.eval(x)

    def eval(self, x):
        xa = np.asarray(x, dtype=float)
        if np.any((xa < 0.0) | (xa > 1.0)) or np.any(np.isnan(xa)):
            raise DomainError("x must lie in [0, 1]")
        idx = self.piece_index(xa)
        out = np.empty_like(xa)
        for m, poly in enumerate(self.pieces):
            sel = idx == m
            if np.any(sel):
                out[sel] = poly(xa[sel])
        if np.ndim(x) == 0:
            return float(out)
        return out

    def eval_left(self, x):
        """Left limits; at x = 0 this is the value itself."""
        xa = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.breakpoints, xa, side="left") - 1
        idx = np.clip(idx, 0, self.n_pieces - 1)
        out = np.empty_like(xa)
        for m, poly in enumerate(self.pieces):
            sel = idx == m
            if np.any(sel):
                out[sel] = poly(xa[sel])
        if np.ndim(x) == 0:
            return float(out)
        return out

    def refined(self, points: Sequence[float]) -> "PiecewisePolynomial":
        """Same function with extra breakpoints inserted."""
        new_bp = np.union1d(self.breakpoints, np.asarray(points, dtype=float))
        new_bp = new_bp[(new_bp >= 0.0) & (new_bp <= 1.0)]
        pieces = []
        for a, b in zip(new_bp[:-1], new_bp[1:]):
            m = int(self.piece_index(0.5 * (a + b)))
            pieces.append(self.pieces[m].coef.copy())
        return PiecewisePolynomial(new_bp, pieces)

    def integrate(self, a: float = 0.0, b: float = 1.0, absolute: bool = False) -> float:
        """Exact integral over [a, b]; with ``absolute`` integrates |p|."""
        total = 0.0
        for (lo, hi), poly in zip(self.intervals(), self.pieces):
            lo, hi = max(lo, a), min(hi, b)
            if hi <= lo:
                continue
            if not absolute:
                anti = poly.integ()
                total += anti(hi) - anti(lo)
                continue
            cuts = [lo] + _real_roots_inside(poly, lo, hi) + [hi]
            anti = poly.integ()
            for c0, c1 in zip(cuts[:-1], cuts[1:]):
                total += abs(anti(c1) - anti(c0))
        return float(total)

    def intervals(self):
        return list(zip(self.breakpoints[:-1], self.breakpoints[1:]))

    def range_bounds(self) -> tuple[float, float]:
        """Exact min and max over [0, 1] from endpoint and critical values."""
        lo, hi = np.inf, -np.inf
        for (a, b), poly in zip(self.intervals(), self.pieces):
            cand = [a, b] + _real_roots_inside(poly.deriv(), a, b)
            # right-open pieces still reach their left limit at b
            vals = poly(np.asarray(cand))
            lo, hi = min(lo, vals.min()), max(hi, vals.max())
        return float(lo), float(hi)

    def __sub__(self, other: "PiecewisePolynomial") -> "PiecewisePolynomial":
        bp = np.union1d(self.breakpoints, other.breakpoints)
        mine, theirs = self.refined(bp), other.refined(bp)
        pieces = [(p - r).coef for p, r in zip(mine.pieces, theirs.pieces)]
        return PiecewisePolynomial(bp, pieces)

    def to_dict(self) -> dict:
        return {
            "breakpoints": [float(b) for b in self.breakpoints],
            "pieces": [[float(c) for c in p.coef] for p in self.pieces],
        }

    def __repr__(self) -> str:
        return f"{type(self).__name__}(breakpoints={list(self.breakpoints)}, n_pieces={self.n_pieces})"


class CoefficientM(PiecewisePolynomial):
    """Member of the admissible class: piecewise polynomial with c0 <= value <= c1.

    Parameters
    ----------
    breakpoints : sequence of float
        ``0 = x_0 < x_1 < ... < x_M = 1``.
    pieces : sequence of coefficient arrays
        Ascending power-series coefficients in x, one per interval.
    c0, c1 : float, optional
        Declared bounds.  When omitted they are taken from the exact range.
    max_degree : int
        Largest polynomial degree accepted.
    """

    def __init__(self, breakpoints, pieces, c0=None, c1=None, max_degree: int = MAX_DEGREE):
        super().__init__(breakpoints, pieces)
        for p in self.pieces:
            if p.degree() > max_degree:
                raise CoefficientError(
                    f"piece degree {p.degree()} exceeds max_degree={max_degree}"
                )
        lo, hi = self.range_bounds()
        c0 = lo if c0 is None else float(c0)
        c1 = hi if c1 is None else float(c1)
        if not c0 > 0.0:
            raise CoefficientError(f"lower bound must be positive, got c0={c0}")
        if c1 < c0:
            raise CoefficientError(f"c1={c1} < c0={c0}")
        slack = 1e-12 * max(c1, 1.0)
        if lo < c0 - slack or hi > c1 + slack:
            raise CoefficientError(
                f"range [{lo:.6g}, {hi:.6g}] violates bounds [{c0:.6g}, {c1:.6g}]"
            )
        self.c0 = c0
        self.c1 = c1
        self.max_degree = max_degree

    @classmethod
    def constant(cls, value: float) -> "CoefficientM":
        return cls([0.0, 1.0], [[value]])

    @classmethod
    def piecewise_constant(cls, breakpoints, values, c0=None, c1=None) -> "CoefficientM":
        return cls(breakpoints, [[v] for v in values], c0=c0, c1=c1)

    @classmethod
    def from_dict(cls, doc: dict, max_degree: int = MAX_DEGREE) -> "CoefficientM":
        try:
            return cls(
                doc["breakpoints"],
                doc["pieces"],
                c0=doc.get("c0"),
                c1=doc.get("c1"),
                max_degree=max_degree,
            )
        except KeyError as exc:
            raise CoefficientError(f"missing key {exc} in coefficient document") from None

    @classmethod
    def load(cls, path, max_degree: int = MAX_DEGREE) -> "CoefficientM":
        return cls.from_dict(json.loads(Path(path).read_text()), max_degree=max_degree)

    def to_dict(self) -> dict:
        doc = super().to_dict()
        doc["c0"] = float(self.c0)
        doc["c1"] = float(self.c1)
        return doc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def is_piecewise_constant(self) -> bool:
        return all(p.degree() == 0 for p in self.pieces)

    def reciprocal(self, tol: float = 1e-10, max_degree: int | None = None) -> "CoefficientM":
        """1/value, re-approximated per piece by Chebyshev interpolation.

        Degree is escalated up to ``max_degree`` (default: this object's
        cap) until the sup-norm error on a dense check grid is at most
        ``tol``; a piece that still misses is bisected, which only adds
        breakpoints where the reciprocal is continuous.  Constant pieces
        are inverted exactly.
        """
        cap = self.max_degree if max_degree is None else max_degree
        bps, pieces = [0.0], []
        for (a, b), poly in zip(self.intervals(), self.pieces):
            for lo, hi, coef in _reciprocal_pieces(poly, a, b, tol, cap):
                bps.append(hi)
                pieces.append(coef)
        lo, hi = PiecewisePolynomial(bps, pieces).range_bounds()
        return CoefficientM(
            bps,
            pieces,
            c0=min(1.0 / self.c1, lo),
            c1=max(1.0 / self.c0, hi),
            max_degree=max(self.max_degree, cap),
        )


def _reciprocal_pieces(poly: Polynomial, a: float, b: float, tol: float, cap: int, depth: int = 0):
    if poly.degree() == 0:
        return [(a, b, [1.0 / poly.coef[0]])]
    check = np.linspace(a, b, 2001)
    target = 1.0 / poly(check)
    for deg in range(poly.degree(), cap + 1):
        cheb = Chebyshev.interpolate(lambda t: 1.0 / poly(t), deg, domain=[a, b])
        approx = cheb.convert(kind=Polynomial)
        if np.max(np.abs(approx(check) - target)) <= tol:
            return [(a, b, approx.coef)]
    if depth >= 12:
        raise CoefficientError(f"reciprocal on [{a}, {b}] not within {tol:g} at degree {cap}")
    mid = 0.5 * (a + b)
    return (_reciprocal_pieces(poly, a, mid, tol, cap, depth + 1)
            + _reciprocal_pieces(poly, mid, b, tol, cap, depth + 1))


def _real_roots_inside(poly: Polynomial, a: float, b: float) -> list[float]:
    c = np.trim_zeros(np.asarray(poly.coef, dtype=float), "b")
    if c.size <= 1:
        return []
    scale = np.max(np.abs(c))
    c = c.copy()
    while c.size > 1 and abs(c[-1]) <= 1e-14 * scale:
        c = c[:-1]
    if c.size <= 1:
        return []
    roots = Polynomial(c).roots()
    real = roots[np.abs(roots.imag) <= 1e-10 * (1.0 + np.abs(roots.real))].real
    return sorted(float(r) for r in real if a < r < b)


@dataclass
class SignedDifference:
    """Signed piecewise polynomial plus its sign structure on [0, 1].

    ``sign_intervals`` is a list of ``((lo, hi), sign)`` with sign in
    {+1, -1, 0}; adjacent intervals of equal sign are merged and the
    intervals partition [0, 1].
    """

    p: PiecewisePolynomial
    sign_intervals: list = field(default_factory=list)
    tol: float = 0.0

    @property
    def sign_change_points(self) -> list[float]:
        """Locations where the nonzero sign flips (zero pockets absorbed)."""
        points = []
        last = 0
        for (lo, _hi), s in self.sign_intervals:
            if s == 0:
                continue
            if last != 0 and s != last:
                points.append(lo)
            last = s
        return points

    def last_sign_interval(self) -> tuple[float, int]:
        """Start z and sign of the rightmost one-signed stretch ending at 1."""
        nonzero = [(iv, s) for iv, s in self.sign_intervals if s != 0]
        if not nonzero:
            return 0.0, 0
        s_last = nonzero[-1][1]
        z = nonzero[-1][0][0]
        for (lo, _hi), s in reversed(self.sign_intervals):
            if s == -s_last:
                break
            z = lo
        return float(z), s_last


def signed(p: PiecewisePolynomial, tol: float | None = None) -> SignedDifference:
    """Build the sign structure of ``p`` from exact per-piece root finding."""
    if tol is None:
        lo, hi = p.range_bounds()
        tol = 1e-12 * max(abs(lo), abs(hi), 1.0)
    raw = []
    for (a, b), poly in zip(p.intervals(), p.pieces):
        cuts = [a] + _real_roots_inside(poly, a, b) + [b]
        for c0, c1 in zip(cuts[:-1], cuts[1:]):
            mids = np.linspace(c0, c1, 5)[1:-1]
            vals = poly(mids)
            peak = vals[np.argmax(np.abs(vals))]
            s = 0 if abs(peak) < tol else int(np.sign(peak))
            raw.append(((float(c0), float(c1)), s))
    merged = [raw[0]]
    for (lo, hi), s in raw[1:]:
        (plo, _phi), ps = merged[-1]
        if s == ps:
            merged[-1] = ((plo, hi), s)
        else:
            merged.append(((lo, hi), s))
    return SignedDifference(p=p, sign_intervals=merged, tol=tol)


def difference(q2: PiecewisePolynomial, q1: PiecewisePolynomial, tol: float | None = None) -> SignedDifference:
    """p = q2 - q1 on merged breakpoints, with its sign structure."""
    if tol is None:
        c1 = max(getattr(q1, "c1", 1.0), getattr(q2, "c1", 1.0))
        tol = 1e-12 * max(c1, 1.0)
    return signed(q2 - q1, tol=tol)


def count_sign_changes(p: SignedDifference, tol: float | None = None) -> int:
    """Number of +/- transitions; pockets with |p| < tol count as neighbours."""
    if tol is not None and not tol > 0:
        raise ValueError("tol must be positive")
    sd = p if tol is None else signed(p.p, tol=tol)
    return len(sd.sign_change_points)
