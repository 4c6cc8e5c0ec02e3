"""Galerkin assembly of mass, stiffness and interface-penalty matrices.

All matrices are returned in reduced coordinates as symmetric
``scipy.sparse.csr_matrix``.  1D raw matrices are assembled patch by patch
with an element loop; 2D operators are Kronecker combinations of the 1D ones
(affine unit-square geometry).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.io
import scipy.sparse as sp

from .multipatch import FOURTH, SECOND, MultipatchSpace, ProblemKind, TensorSpace
from .spline import element_basis, gauss_rule

__all__ = [
    "OperatorSet",
    "assemble",
    "assemble_mass",
    "assemble_stiffness",
    "assemble_interface_penalty",
    "combine_penalties",
    "export_matrix_market",
]


def _sym(A) -> sp.csr_matrix:
    A = sp.csr_matrix(A)
    return sp.csr_matrix(0.5 * (A + A.T))


def _raw_1d(space: MultipatchSpace, n_points: int | None = None) -> dict[str, sp.csr_matrix]:
    """Block-diagonal raw matrices: mass, d1 (B'B'), d2 (B''B''), d2d0 (B''B)."""
    p = space.degree
    q = gauss_rule(n_points or p + 1)
    nd = min(2, p)
    n = space.n_raw
    rows, cols = [], []
    vals = {"mass": [], "d1": [], "d2": [], "d2d0": []}
    loc = np.arange(p + 1)
    for ip, s in enumerate(space.patches):
        for e in range(s.n_elements):
            a, b = s.breakpoints[e], s.breakpoints[e + 1]
            x, w = q.mapped(a, b)
            first, D = element_basis(s, e, x, nd)
            idx = space.offsets[ip] + first + loc
            r, c = np.meshgrid(idx, idx, indexing="ij")
            rows.append(r.ravel())
            cols.append(c.ravel())
            B0 = D[0]
            vals["mass"].append((B0.T * w) @ B0)
            vals["d1"].append((D[1].T * w) @ D[1])
            if nd >= 2:
                vals["d2"].append((D[2].T * w) @ D[2])
                vals["d2d0"].append((D[2].T * w) @ B0)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    out = {}
    for key, v in vals.items():
        if v:
            out[key] = sp.csr_matrix((np.concatenate([m.ravel() for m in v]), (rows, cols)), shape=(n, n))
    return out


def _reduce(space: MultipatchSpace, A) -> sp.csr_matrix:
    E = space.extraction
    return sp.csr_matrix(E.T @ A @ E)


def _mat1d(space: MultipatchSpace, key: str) -> sp.csr_matrix:
    """Reduced 1D matrix ``key``, assembled once per (immutable) space."""
    store = space.matrix_cache
    if key not in store:
        for name, A in _raw_1d(space).items():
            store[name] = _reduce(space, A)
    return store[key]


def assemble_mass(space) -> sp.csr_matrix:
    """Consistent mass matrix of the L2 inner product."""
    if isinstance(space, TensorSpace):
        return _sym(sp.kron(_mat1d(space.x, "mass"), _mat1d(space.y, "mass")))
    return _sym(_mat1d(space, "mass"))


def _order(space, kind) -> str:
    if kind is None:
        return space.kind.operator_order
    return kind.operator_order if isinstance(kind, ProblemKind) else str(kind)


def assemble_stiffness(space, kind: ProblemKind | str | None = None) -> sp.csr_matrix:
    """Gradient-gradient (second order) or Laplacian-Laplacian (fourth order) matrix."""
    order = _order(space, kind)
    if order not in (SECOND, FOURTH):
        raise ValueError(f"unknown operator order {order!r}")
    spaces = (space.x, space.y) if isinstance(space, TensorSpace) else (space,)
    if order == FOURTH:
        for s in spaces:
            if s.degree < 2 or (s.n_patches > 1 and s.patch_smoothness < 1):
                raise ValueError("fourth-order stiffness needs a C^1 space")
    if isinstance(space, TensorSpace):
        Mx, My = _mat1d(space.x, "mass"), _mat1d(space.y, "mass")
        if order == SECOND:
            return _sym(sp.kron(_mat1d(space.x, "d1"), My) + sp.kron(Mx, _mat1d(space.y, "d1")))
        Gx, Gy = _mat1d(space.x, "d2d0"), _mat1d(space.y, "d2d0")
        A = (
            sp.kron(_mat1d(space.x, "d2"), My)
            + sp.kron(Mx, _mat1d(space.y, "d2"))
            + sp.kron(Gx, Gy.T)
            + sp.kron(Gx.T, Gy)
        )
        return _sym(A)
    return _sym(_mat1d(space, "d1" if order == SECOND else "d2"))


def _jump_gram_1d(space: MultipatchSpace, l: int, interfaces=None) -> sp.csr_matrix:
    N = space.N
    A = np.zeros((N, N))
    for e in range(len(space.interfaces)) if interfaces is None else interfaces:
        d = space.jump_vector(e, l)
        A += np.outer(d, d)
    A[np.abs(A) < 1e-300] = 0.0
    return sp.csr_matrix(A)


def assemble_interface_penalty(space, l: int, interface: tuple[int, int] | int | None = None) -> sp.csr_matrix:
    """Gram matrix of the jumps of the l-th normal derivative across interfaces.

    ``interface`` restricts the sum to one interface: an index in 1D, an
    ``(axis, index)`` pair in 2D.
    """
    p = space.degree
    if not 1 <= l <= p - 1:
        raise ValueError(f"penalty level l must be in 1..{p - 1}, got {l}")
    if isinstance(space, TensorSpace):
        Mx, My = _mat1d(space.x, "mass"), _mat1d(space.y, "mass")
        if interface is None:
            Jx, Jy = _jump_gram_1d(space.x, l), _jump_gram_1d(space.y, l)
            return _sym(sp.kron(Jx, My) + sp.kron(Mx, Jy))
        axis, e = interface
        if axis == 0:
            return _sym(sp.kron(_jump_gram_1d(space.x, l, [e]), My))
        return _sym(sp.kron(Mx, _jump_gram_1d(space.y, l, [e])))
    return _sym(_jump_gram_1d(space, l, None if interface is None else [interface]))


def combine_penalties(penalties, h: float) -> sp.csr_matrix:
    """Sum_l h^(2l-2) K_Gamma^l for penalties ordered l = 1, 2, ..."""
    if not penalties:
        raise ValueError("need at least one penalty matrix")
    out = sp.csr_matrix(penalties[0].shape)
    for l, P in enumerate(penalties, start=1):
        out = out + h ** (2 * l - 2) * P
    return sp.csr_matrix(out)


@dataclass(eq=False)
class OperatorSet:
    """Mass, stiffness and per-level interface penalties of one discretization."""

    M: sp.csr_matrix
    K: sp.csr_matrix
    penalties: tuple[sp.csr_matrix, ...]
    h: float
    per_interface: dict = field(default_factory=dict)
    space: object = None

    @property
    def N(self) -> int:
        return self.M.shape[0]

    @property
    def degree(self) -> int:
        return len(self.penalties) + 1

    @cached_property
    def combined(self) -> sp.csr_matrix:
        if not self.penalties:
            return sp.csr_matrix(self.M.shape)
        return combine_penalties(self.penalties, self.h)


def assemble(space, split_interfaces: bool = False) -> OperatorSet:
    """All operators for ``space``; ``split_interfaces`` also stores the
    per-interface penalty pieces keyed by ``(l, interface)``."""
    p = space.degree
    pens = tuple(assemble_interface_penalty(space, l) for l in range(1, p))
    per = {}
    if split_interfaces:
        if isinstance(space, TensorSpace):
            keys = [(0, e) for e in range(len(space.x.interfaces))] + [(1, e) for e in range(len(space.y.interfaces))]
        else:
            keys = list(range(len(space.interfaces)))
        for l in range(1, p):
            for key in keys:
                per[(l, key)] = assemble_interface_penalty(space, l, key)
    return OperatorSet(
        M=assemble_mass(space),
        K=assemble_stiffness(space),
        penalties=pens,
        h=space.h,
        per_interface=per,
        space=space,
    )


def export_matrix_market(path, A, comment: str = "") -> None:
    """Write a matrix in Matrix Market coordinate format."""
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), comment=comment, symmetry="symmetric")
