"""Univariate B-spline spaces on uniform open knot vectors.

Basis evaluation follows the usual Cox-de Boor triangle with the derivative
recurrence (Piegl & Tiller, algorithm A2.3), vectorized over points that share
a knot span.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "SplineSpace1D",
    "QuadratureRule",
    "gauss_rule",
    "eval_basis",
    "basis_matrix",
    "element_basis",
]


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre rule on the reference interval [0, 1]."""

    points: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.points)

    def mapped(self, a, b):
        """Points and weights on the interval [a, b]."""
        return a + (b - a) * self.points, (b - a) * self.weights


def gauss_rule(n_points: int) -> QuadratureRule:
    if not 1 <= int(n_points) <= 16:
        raise ValueError(f"n_points must be in 1..16, got {n_points}")
    x, w = np.polynomial.legendre.leggauss(int(n_points))
    pts = 0.5 * (x + 1.0)
    wts = 0.5 * w
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts)


@dataclass(frozen=True)
class SplineSpace1D:
    """Uniform B-spline space of degree ``degree`` with ``n_elements`` elements.

    ``interior_smoothness`` is the continuity k at interior breakpoints, so the
    interior knot multiplicity is ``degree - k``.  ``None`` means maximal
    smoothness k = p - 1.
    """

    degree: int
    n_elements: int
    domain: tuple[float, float] = (0.0, 1.0)
    interior_smoothness: int | None = None
    knots: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        p, ne = int(self.degree), int(self.n_elements)
        if p < 1:
            raise ValueError(f"degree must be >= 1, got {p}")
        if ne < 1:
            raise ValueError(f"n_elements must be >= 1, got {ne}")
        k = p - 1 if self.interior_smoothness is None else int(self.interior_smoothness)
        if not 0 <= k <= p - 1:
            raise ValueError(f"interior smoothness must be in 0..{p - 1}, got {k}")
        x0, x1 = map(float, self.domain)
        if not x1 > x0:
            raise ValueError("domain must satisfy x0 < x1")
        object.__setattr__(self, "degree", p)
        object.__setattr__(self, "n_elements", ne)
        object.__setattr__(self, "interior_smoothness", k)
        object.__setattr__(self, "domain", (x0, x1))
        brk = np.linspace(x0, x1, ne + 1)
        knots = np.concatenate(
            [np.full(p + 1, x0), np.repeat(brk[1:-1], p - k), np.full(p + 1, x1)]
        )
        knots.setflags(write=False)
        object.__setattr__(self, "knots", knots)

    @property
    def h(self) -> float:
        return (self.domain[1] - self.domain[0]) / self.n_elements

    @property
    def dim(self) -> int:
        p, k = self.degree, self.interior_smoothness
        return self.n_elements * (p - k) + k + 1

    @cached_property
    def breakpoints(self) -> np.ndarray:
        return np.linspace(self.domain[0], self.domain[1], self.n_elements + 1)

    def greville(self) -> np.ndarray:
        p = self.degree
        t = self.knots
        return np.array([t[i + 1 : i + p + 1].mean() for i in range(self.dim)])

    def span(self, x: float, side: str | None = None) -> int:
        """Knot span index for ``x``.

        ``side='right'`` takes the right limit at a breakpoint (default, except
        at the right end of the domain); ``side='left'`` the left limit.
        """
        x0, x1 = self.domain
        if not x0 - 1e-14 * (x1 - x0) <= x <= x1 + 1e-14 * (x1 - x0):
            raise ValueError(f"x={x!r} outside domain [{x0}, {x1}]")
        t, p = self.knots, self.degree
        if side is None:
            side = "left" if x >= x1 else "right"
        if side == "right":
            s = int(np.searchsorted(t, x, side="right")) - 1
            return min(max(s, p), len(t) - p - 2)
        if side == "left":
            s = int(np.searchsorted(t, x, side="left")) - 1
            return min(max(s, p), len(t) - p - 2)
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")

    def element_span(self, e: int) -> int:
        """Span index of element ``e`` (0-based)."""
        return self.degree + e * (self.degree - self.interior_smoothness)


def _ders(t, p, span, x, n):
    """Nonzero basis derivatives 0..n at points ``x`` inside knot span ``span``.

    Returns an array of shape (n + 1, len(x), p + 1).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    m = x.size
    ndu = np.zeros((p + 1, p + 1, m))
    ndu[0, 0] = 1.0
    left = np.zeros((p + 1, m))
    right = np.zeros((p + 1, m))
    for j in range(1, p + 1):
        left[j] = x - t[span + 1 - j]
        right[j] = t[span + j] - x
        saved = np.zeros(m)
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r]
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved

    ders = np.zeros((n + 1, m, p + 1))
    for j in range(p + 1):
        ders[0, :, j] = ndu[j, p]
    a = np.zeros((2, p + 1, m))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[0, 0] = 1.0
        for k in range(1, n + 1):
            d = np.zeros(m)
            rk, pk = r - k, p - k
            if r >= k:
                a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                d = a[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                d = d + a[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r]
                d = d + a[s2, k] * ndu[r, pk]
            ders[k, :, r] = d
            s1, s2 = s2, s1
    fac = float(p)
    for k in range(1, n + 1):
        ders[k] *= fac
        fac *= p - k
    return ders


def eval_basis(space: SplineSpace1D, x: float, deriv_order: int = 0, side: str | None = None):
    """Return ``(first, values)``: the p+1 basis derivatives that may be
    nonzero at ``x``; ``values[j]`` belongs to basis function ``first + j``.
    """
    p = space.degree
    if deriv_order < 0 or deriv_order > p:
        raise ValueError(f"deriv_order must be in 0..{p}, got {deriv_order}")
    s = space.span(float(x), side)
    vals = _ders(space.knots, p, s, [float(x)], deriv_order)[deriv_order, 0]
    return s - p, vals


def element_basis(space: SplineSpace1D, e: int, x, nders: int = 0):
    """Derivatives 0..nders of the basis on element ``e`` at points ``x``.

    Returns ``(first, ders)`` with ``ders`` of shape (nders + 1, len(x), p + 1).
    Points on the element boundary are treated as interior to element ``e``.
    """
    if not 0 <= e < space.n_elements:
        raise ValueError(f"element index {e} out of range")
    if nders > space.degree:
        raise ValueError(f"nders must be <= degree={space.degree}")
    s = space.element_span(e)
    return s - space.degree, _ders(space.knots, space.degree, s, x, nders)


def basis_matrix(space: SplineSpace1D, xs, deriv_order: int = 0, side: str | None = None) -> np.ndarray:
    """Dense collocation matrix ``B[i, j] = d^k B_j(xs[i])``."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    p = space.degree
    if deriv_order < 0 or deriv_order > p:
        raise ValueError(f"deriv_order must be in 0..{p}, got {deriv_order}")
    out = np.zeros((xs.size, space.dim))
    spans = np.array([space.span(x, side) for x in xs], dtype=int)
    for s in np.unique(spans):
        rows = np.flatnonzero(spans == s)
        vals = _ders(space.knots, p, s, xs[rows], deriv_order)[deriv_order]
        out[rows[:, None], s - p + np.arange(p + 1)] = vals
    return out
