"""Multipatch spline spaces with strongly imposed boundary and coupling constraints.

A 1D multipatch space is the concatenation of per-patch maximally smooth
spline spaces ("raw" space, discontinuous across patches).  Linear constraints
on the raw coefficients (C^0 or C^1 coupling at interfaces, essential and
outlier-removal boundary conditions) are eliminated to obtain the extraction
matrix ``E`` with ``raw = E @ reduced``.  2D spaces are tensor products.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .spline import SplineSpace1D, basis_matrix, eval_basis, gauss_rule

__all__ = [
    "ProblemKind",
    "Interface",
    "MultipatchSpace",
    "TensorSpace",
    "build_space_1d",
    "build_space_2d",
    "count_interior_outliers",
    "boundary_constraint_orders",
]

SECOND, FOURTH = "second", "fourth"
BOUNDARY_TYPES = ("dirichlet_fixed", "neumann_free", "simply_supported")


@dataclass(frozen=True)
class ProblemKind:
    """Operator order plus boundary type per side.

    ``boundary`` is either one type for every side or a tuple with one entry
    per side: (left, right) in 1D, (x0, x1, y0, y1) in 2D.  A 2-tuple used in
    2D applies to both directions.
    """

    operator_order: str
    boundary: str | tuple[str, ...] = "dirichlet_fixed"

    def __post_init__(self):
        if self.operator_order not in (SECOND, FOURTH):
            raise ValueError(f"operator_order must be 'second' or 'fourth', got {self.operator_order!r}")
        sides = (self.boundary,) if isinstance(self.boundary, str) else tuple(self.boundary)
        if len(sides) not in (1, 2, 4):
            raise ValueError("boundary must name 1, 2 or 4 sides")
        for b in sides:
            if b not in BOUNDARY_TYPES:
                raise ValueError(f"unknown boundary type {b!r}; expected one of {BOUNDARY_TYPES}")
        if self.operator_order == SECOND and "simply_supported" in sides:
            raise ValueError("simply_supported applies to fourth-order problems")
        if self.operator_order == FOURTH and "dirichlet_fixed" in sides:
            raise ValueError("only simply_supported or neumann_free sides are implemented for fourth order")
        object.__setattr__(self, "boundary", sides[0] if len(sides) == 1 else sides)

    @property
    def coupling_smoothness(self) -> int:
        return 0 if self.operator_order == SECOND else 1

    def sides(self, dim: int) -> tuple[str, ...]:
        b = self.boundary
        if isinstance(b, str):
            return (b,) * (2 * dim)
        if len(b) == 2 * dim:
            return b
        if len(b) == 2 and dim == 2:
            return b + b
        raise ValueError(f"boundary {b!r} does not fit a {dim}D problem")

    def direction(self, axis: int) -> "ProblemKind":
        s = self.sides(2)
        return ProblemKind(self.operator_order, (s[2 * axis], s[2 * axis + 1]))


def boundary_constraint_orders(boundary: str, p: int, outlier_removal: bool = True) -> list[int]:
    """Derivative orders constrained to vanish at a boundary point.

    Essential data: the value for fixed and simply supported sides, nothing
    for free sides.  With outlier removal the remaining derivatives of the same
    parity as the eigenfunctions' vanishing derivatives (even for sin-type,
    odd for cos-type) up to order p-1 are added.
    """
    if boundary in ("dirichlet_fixed", "simply_supported"):
        return list(range(0, p, 2)) if outlier_removal else [0]
    if boundary == "neumann_free":
        return list(range(1, p, 2)) if outlier_removal else []
    raise ValueError(f"unknown boundary type {boundary!r}")


@dataclass(frozen=True)
class Interface:
    location: float
    left_patch: int
    right_patch: int
    axis: int = 0


def _nullspace_by_elimination(C: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Basis of ker(C) with an identity block on the free columns.

    Gauss-Jordan elimination row by row, pivoting on the largest unused entry.
    Since each constraint row touches only a few neighbouring coefficients the
    resulting basis stays local.
    """
    C = np.array(C, dtype=float)
    m, n = C.shape
    pivots = []
    rows = []
    scale = np.abs(C).max() if C.size else 1.0
    used = np.zeros(n, dtype=bool)
    for i in range(m):
        r = C[i]
        cand = np.where(used, 0.0, np.abs(r))
        j = int(np.argmax(cand))
        if cand[j] <= tol * scale:
            continue  # linearly dependent constraint
        C[i] = r / r[j]
        for k in range(m):
            if k != i and C[k, j] != 0.0:
                C[k] -= C[k, j] * C[i]
        used[j] = True
        pivots.append(j)
        rows.append(i)
    free = np.flatnonzero(~used)
    E = np.zeros((n, free.size))
    E[free, np.arange(free.size)] = 1.0
    if pivots:
        E[pivots, :] = -C[np.ix_(rows, free)]
    E[np.abs(E) < 1e-14] = 0.0
    return E


@dataclass(eq=False)
class MultipatchSpace:
    """Univariate multipatch space on [x0, x1] with reduced coordinates."""

    kind: ProblemKind
    degree: int
    patches: tuple[SplineSpace1D, ...]
    interfaces: tuple[Interface, ...]
    extraction: sp.csr_matrix
    offsets: np.ndarray
    outlier_removal: bool = True
    patch_smoothness: int = 0
    matrix_cache: dict = field(default_factory=dict, repr=False)

    dim = 1

    @property
    def n_patches(self) -> int:
        return len(self.patches)

    @property
    def n_elements(self) -> int:
        return sum(s.n_elements for s in self.patches)

    @property
    def n_raw(self) -> int:
        return int(self.offsets[-1])

    @property
    def N(self) -> int:
        return self.extraction.shape[1]

    @property
    def h(self) -> float:
        return self.patches[0].h

    @property
    def domain(self) -> tuple[float, float]:
        return self.patches[0].domain[0], self.patches[-1].domain[1]

    def patch_of(self, x: float, side: str | None = None) -> int:
        x0, x1 = self.domain
        if not x0 - 1e-14 <= x <= x1 + 1e-14:
            raise ValueError(f"x={x!r} outside domain [{x0}, {x1}]")
        L = (x1 - x0) / self.n_patches
        s = (x - x0) / L
        i = int(np.floor(s))
        if side == "left" and abs(s - round(s)) < 1e-12:
            i = int(round(s)) - 1
        return min(max(i, 0), self.n_patches - 1)

    def raw_row(self, x: float, deriv: int = 0, side: str | None = None) -> np.ndarray:
        """Raw-space row vector of all basis derivatives at ``x``."""
        i = self.patch_of(x, side)
        sp_i = self.patches[i]
        first, vals = eval_basis(sp_i, x, deriv, side)
        row = np.zeros(self.n_raw)
        o = self.offsets[i] + first
        row[o : o + len(vals)] = vals
        return row

    def raw_collocation(self, xs, deriv: int = 0, side: str | None = None) -> np.ndarray:
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        out = np.zeros((xs.size, self.n_raw))
        idx = np.array([self.patch_of(x, side) for x in xs], dtype=int)
        for i, s in enumerate(self.patches):
            r = np.flatnonzero(idx == i)
            if r.size:
                out[np.ix_(r, np.arange(self.offsets[i], self.offsets[i + 1]))] = basis_matrix(s, xs[r], deriv, side)
        return out

    def collocation(self, xs, deriv: int = 0, side: str | None = None) -> np.ndarray:
        """Reduced-basis collocation matrix (len(xs) x N)."""
        return np.asarray(self.extraction.T @ self.raw_collocation(xs, deriv, side).T).T

    def evaluate(self, coeffs, xs, deriv: int = 0, side: str | None = None) -> np.ndarray:
        raw = self.extraction @ np.asarray(coeffs, dtype=float)
        return self.raw_collocation(xs, deriv, side) @ raw

    def jump_vector(self, e: int, order: int) -> np.ndarray:
        """Reduced-coordinate functional of the jump (right minus left) of the
        ``order``-th derivative across interface ``e``."""
        itf = self.interfaces[e]
        d = self.raw_row(itf.location, order, "right") - self.raw_row(itf.location, order, "left")
        return self.extraction.T @ d

    def quadrature(self, n_points: int | None = None):
        """Global Gauss points/weights over all elements (``n_points`` per element)."""
        q = gauss_rule(n_points or self.degree + 1)
        xs, ws = [], []
        for s in self.patches:
            for a, b in zip(s.breakpoints[:-1], s.breakpoints[1:]):
                x, w = q.mapped(a, b)
                xs.append(x)
                ws.append(w)
        return np.concatenate(xs), np.concatenate(ws)


@dataclass(eq=False)
class TensorSpace:
    """Tensor product of two univariate multipatch spaces (x fastest-varying
    last: reduced index (i, j) -> i * Ny + j)."""

    kind: ProblemKind
    x: MultipatchSpace
    y: MultipatchSpace

    dim = 2

    @property
    def degree(self) -> int:
        return self.x.degree

    @cached_property
    def extraction(self) -> sp.csr_matrix:
        return sp.kron(self.x.extraction, self.y.extraction, format="csr")

    @property
    def N(self) -> int:
        return self.x.N * self.y.N

    @property
    def n_raw(self) -> int:
        return self.x.n_raw * self.y.n_raw

    @property
    def h(self) -> float:
        return max(self.x.h, self.y.h)

    @property
    def interfaces(self) -> tuple[Interface, ...]:
        return tuple(Interface(i.location, i.left_patch, i.right_patch, 0) for i in self.x.interfaces) + tuple(
            Interface(i.location, i.left_patch, i.right_patch, 1) for i in self.y.interfaces
        )

    def evaluate(self, coeffs, xs, ys, deriv=(0, 0), side=(None, None)) -> np.ndarray:
        """Values on the grid xs x ys, shape (len(xs), len(ys))."""
        C = np.asarray(coeffs, dtype=float).reshape(self.x.N, self.y.N)
        Bx = self.x.collocation(xs, deriv[0], side[0])
        By = self.y.collocation(ys, deriv[1], side[1])
        return Bx @ C @ By.T


def _check_degree(kind: ProblemKind, p: int):
    if p < 1:
        raise ValueError(f"degree must be >= 1, got {p}")
    if kind.operator_order == FOURTH and p < 2:
        raise ValueError("fourth-order problems need C^1 spaces, i.e. degree >= 2")


def build_space_1d(
    kind: ProblemKind,
    p: int,
    n_patches: int,
    elems_per_patch: int,
    domain: tuple[float, float] = (0.0, 1.0),
    outlier_removal: bool = True,
    patch_smoothness: int | None = None,
) -> MultipatchSpace:
    """Multipatch space of C^{p-1} B-splines with C^k coupling at interfaces.

    ``patch_smoothness`` defaults to 0 (second order) or 1 (fourth order).
    """
    _check_degree(kind, p)
    if n_patches < 1 or elems_per_patch < 1:
        raise ValueError("n_patches and elems_per_patch must be >= 1")
    left_bc, right_bc = kind.sides(1)
    k = kind.coupling_smoothness if patch_smoothness is None else int(patch_smoothness)
    if n_patches > 1 and not kind.coupling_smoothness <= k <= p - 1:
        raise ValueError(f"patch smoothness {k} invalid for degree {p} and {kind.operator_order} order")
    x0, x1 = map(float, domain)
    L = (x1 - x0) / n_patches
    patches = tuple(
        SplineSpace1D(p, elems_per_patch, (x0 + i * L, x0 + (i + 1) * L if i < n_patches - 1 else x1))
        for i in range(n_patches)
    )
    offsets = np.concatenate([[0], np.cumsum([s.dim for s in patches])])
    n_raw = int(offsets[-1])
    interfaces = tuple(Interface(patches[i].domain[1], i, i + 1) for i in range(n_patches - 1))

    def local_row(i, x, order, side):
        first, vals = eval_basis(patches[i], x, order, side)
        row = np.zeros(n_raw)
        row[offsets[i] + first : offsets[i] + first + len(vals)] = vals
        return row

    rows = []
    for order in boundary_constraint_orders(left_bc, p, outlier_removal):
        rows.append(local_row(0, x0, order, "right"))
    for itf in interfaces:
        for order in range(k + 1):
            rows.append(
                local_row(itf.right_patch, itf.location, order, "right")
                - local_row(itf.left_patch, itf.location, order, "left")
            )
    for order in boundary_constraint_orders(right_bc, p, outlier_removal):
        rows.append(local_row(n_patches - 1, x1, order, "left"))

    if rows:
        C = np.vstack(rows)
        # scale rows so pivot selection is not biased by h^-order factors
        C /= np.abs(C).max(axis=1, keepdims=True)
        E = _nullspace_by_elimination(C)
    else:
        E = np.eye(n_raw)
    return MultipatchSpace(
        kind=kind,
        degree=p,
        patches=patches,
        interfaces=interfaces,
        extraction=sp.csr_matrix(E),
        offsets=offsets,
        outlier_removal=outlier_removal,
        patch_smoothness=k,
    )


def build_space_2d(
    kind: ProblemKind,
    p: int,
    n_patches_per_dir,
    elems_per_patch_per_dir,
    outlier_removal: bool = True,
) -> TensorSpace:
    """Tensor-product multipatch space on the unit square."""
    npx, npy = (n_patches_per_dir,) * 2 if np.isscalar(n_patches_per_dir) else n_patches_per_dir
    nex, ney = (elems_per_patch_per_dir,) * 2 if np.isscalar(elems_per_patch_per_dir) else elems_per_patch_per_dir
    kind.sides(2)
    sx = build_space_1d(kind.direction(0), p, int(npx), int(nex), outlier_removal=outlier_removal)
    sy = build_space_1d(kind.direction(1), p, int(npy), int(ney), outlier_removal=outlier_removal)
    return TensorSpace(kind, sx, sy)


def count_interior_outliers(kind: ProblemKind, p: int, n_patches: int) -> int:
    """Number of interior outlier modes of a 1D multipatch discretization."""
    if kind.operator_order == SECOND:
        return (n_patches - 1) * max(p - 1, 0)
    return (n_patches - 1) * max(p - 2, 0)
