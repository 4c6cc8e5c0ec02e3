"""Analytic reference modes, mode matching, errors and convergence rates."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import MatchingError
from .multipatch import FOURTH, SECOND, ProblemKind, TensorSpace, build_space_1d, build_space_2d

__all__ = [
    "PROBLEMS",
    "Problem",
    "AnalyticModeSet",
    "MatchedSpectrum",
    "analytic_modes",
    "match_modes",
    "normalized_frequencies",
    "mode_l2_error",
    "flag_outliers",
    "interface_energy_ratio",
    "interface_fraction",
    "rayleigh_frequency",
    "l2_projection",
    "function_l2_error",
    "convergence_order",
]


@dataclass(frozen=True)
class Problem:
    name: str
    dim: int
    kind: ProblemKind
    mode_type: str  # "sin" or "cos"

    def build_space(self, p, n_patches, elems_per_patch, outlier_removal=True):
        if self.dim == 1:
            return build_space_1d(self.kind, p, n_patches, elems_per_patch, outlier_removal=outlier_removal)
        return build_space_2d(self.kind, p, n_patches, elems_per_patch, outlier_removal=outlier_removal)


PROBLEMS = {
    "fixed_bar": Problem("fixed_bar", 1, ProblemKind(SECOND, "dirichlet_fixed"), "sin"),
    "free_bar": Problem("free_bar", 1, ProblemKind(SECOND, "neumann_free"), "cos"),
    "ss_beam": Problem("ss_beam", 1, ProblemKind(FOURTH, "simply_supported"), "sin"),
    "fixed_membrane": Problem("fixed_membrane", 2, ProblemKind(SECOND, "dirichlet_fixed"), "sin"),
    "ss_plate": Problem("ss_plate", 2, ProblemKind(FOURTH, "simply_supported"), "sin"),
}


@dataclass(frozen=True, eq=False)
class AnalyticModeSet:
    """Closed-form modes of the unit bar/beam/square.

    1D: indices n = 1..count (free bar: n = 0..count-1, n = 0 the rigid mode).
    2D: the tensor index set {1..shape[0]} x {1..shape[1]}, ordered by
    ascending frequency (ties by index).
    """

    problem: Problem
    shape: tuple[int, ...]

    @cached_property
    def indices(self) -> np.ndarray:
        if self.problem.dim == 1:
            start = 0 if self.problem.mode_type == "cos" else 1
            return np.arange(start, start + self.shape[0])[:, None]
        m, n = np.meshgrid(np.arange(1, self.shape[0] + 1), np.arange(1, self.shape[1] + 1), indexing="ij")
        idx = np.column_stack([m.ravel(), n.ravel()])
        key = idx[:, 0] ** 2 + idx[:, 1] ** 2
        order = np.lexsort((idx[:, 1], idx[:, 0], key))
        return idx[order]

    def __len__(self):
        return len(self.indices)

    @cached_property
    def omegas(self) -> np.ndarray:
        s = (self.indices.astype(float) ** 2).sum(axis=1)
        if self.problem.kind.operator_order == SECOND:
            return math.pi * np.sqrt(s)
        return math.pi**2 * s

    @cached_property
    def norms(self) -> np.ndarray:
        """L2 norms of the unnormalized modes sin/cos products."""
        out = np.full(len(self), math.sqrt(0.5 ** self.problem.dim))
        if self.problem.mode_type == "cos":
            out[self.indices[:, 0] == 0] = 1.0
        return out

    def values_1d(self, n: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Matrix [len(x), len(n)] of univariate mode values."""
        arg = math.pi * np.outer(x, n)
        return np.cos(arg) if self.problem.mode_type == "cos" else np.sin(arg)

    def evaluate(self, k: int, *coords) -> np.ndarray:
        idx = self.indices[k]
        if self.problem.dim == 1:
            return self.values_1d(idx[:1], coords[0])[:, 0]
        return np.outer(self.values_1d(idx[:1], coords[0])[:, 0], self.values_1d(idx[1:], coords[1])[:, 0])


def analytic_modes(problem: str | Problem, space) -> AnalyticModeSet:
    prob = PROBLEMS[problem] if isinstance(problem, str) else problem
    shape = (space.x.N, space.y.N) if isinstance(space, TensorSpace) else (space.N,)
    return AnalyticModeSet(prob, shape)


def _quad_1d(s, extra=8):
    xq, wq = s.quadrature(min(s.degree + extra, 16))
    return xq, wq, s.collocation(xq)


@dataclass(eq=False)
class MatchedSpectrum:
    """Discrete modes re-ordered by ascending analytic frequency.

    ``sigma[n]`` is the discrete mode matched to analytic mode n;
    ``vectors[:, n]`` that mode, M-normalized and sign-aligned.
    ``groups`` lists analytic indices sharing one frequency.
    """

    analytic: AnalyticModeSet
    sigma: np.ndarray
    omega_exact: np.ndarray
    omega_h: np.ndarray
    vectors: np.ndarray
    projections: np.ndarray  # P[n, sigma[n]] after sign alignment
    groups: list
    space: object = None
    flags: np.ndarray | None = None
    coefficients: dict = field(default_factory=dict)


def _projection_matrix(space, analytic: AnalyticModeSet, V: np.ndarray) -> np.ndarray:
    """P[n, k] = <U_n, u_k> / ||U_n|| for M-normalized discrete modes u_k."""
    idx = analytic.indices
    if isinstance(space, TensorSpace):
        xq, wq, Bx = _quad_1d(space.x)
        yq, wy, By = _quad_1d(space.y)
        mx = np.arange(1, space.x.N + 1)
        my = np.arange(1, space.y.N + 1)
        Fx = (analytic.values_1d(mx, xq).T * wq) @ Bx  # (mx, Nx)
        Fy = (analytic.values_1d(my, yq).T * wy) @ By
        Vr = V.reshape(space.x.N, space.y.N, -1)
        T = np.einsum("mi,ijk->mjk", Fx, Vr)
        T = np.einsum("nj,mjk->mnk", Fy, T)  # (mx, my, modes)
        P = T[idx[:, 0] - 1, idx[:, 1] - 1, :]
    else:
        xq, wq, B = _quad_1d(space)
        F = (analytic.values_1d(idx[:, 0], xq).T * wq) @ B
        P = F @ V
    return P / analytic.norms[:, None]


def match_modes(spectrum, analytic: AnalyticModeSet, space, M=None, group_tol: float = 1e-9) -> MatchedSpectrum:
    """Pair each analytic mode with the discrete mode of largest normalized
    L2 projection, greedily in ascending analytic order.

    Degenerate analytic groups take the unassigned discrete modes with the
    largest projection onto the group's span.
    """
    V = spectrum.eigenvectors
    if M is not None:
        V = V / np.sqrt(np.einsum("ij,ij->j", V, M @ V))
    nd = V.shape[1]
    na = len(analytic)
    if na > nd:
        raise MatchingError(f"{na} analytic modes but only {nd} discrete modes")
    P = _projection_matrix(space, analytic, V)
    om = analytic.omegas
    groups = []
    i = 0
    while i < na:
        j = i + 1
        while j < na and abs(om[j] - om[i]) <= group_tol * max(om[i], 1.0):
            j += 1
        groups.append(np.arange(i, j))
        i = j
    free = np.ones(nd, dtype=bool)
    sigma = np.empty(na, dtype=int)
    for g in groups:
        if len(g) == 1:
            score = np.where(free, np.abs(P[g[0]]), -1.0)
            k = int(np.argmax(score))
            sigma[g[0]] = k
            free[k] = False
            continue
        score = np.where(free, (P[g] ** 2).sum(axis=0), -1.0)
        S = np.argsort(-score, kind="stable")[: len(g)]
        sub = P[np.ix_(g, S)]
        sv = np.linalg.svd(sub, compute_uv=False)
        if sv[-1] <= 1e-12 * max(sv[0], 1e-300):
            raise MatchingError(f"rank-deficient projection for degenerate group at omega={om[g[0]]:.6g}")
        r, c = linear_sum_assignment(-np.abs(sub))
        sigma[g[r]] = S[c]
        free[S] = False
    signs = np.sign(P[np.arange(na), sigma])
    signs[signs == 0] = 1.0
    vecs = V[:, sigma] * signs
    lam = spectrum.eigenvalues[sigma]
    omega_h = np.sqrt(np.clip(lam, 0.0, None))
    proj = np.abs(P[np.arange(na), sigma])
    ms = MatchedSpectrum(analytic, sigma, om.copy(), omega_h, vecs, proj, groups, space)
    # projections of U_n onto the aligned modes of its group (columns g of vecs)
    for g in groups:
        for n in g:
            ms.coefficients[int(n)] = (g, P[n, sigma[g]] * signs[g])
    return ms


def normalized_frequencies(matched: MatchedSpectrum) -> np.ndarray:
    """omega_h / omega in matched order (NaN for a zero analytic frequency)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(matched.omega_exact > 0, matched.omega_h / matched.omega_exact, np.nan)


def _approximation(matched: MatchedSpectrum, n: int) -> np.ndarray:
    """Reduced coefficients approximating analytic mode n, scaled to its L2 norm.

    For a degenerate group this is the normalized projection of U_n onto the
    span of the group's matched modes; otherwise the sign-aligned mode.
    """
    g, c = matched.coefficients[n]
    nrm = np.linalg.norm(c)
    if len(g) == 1 or nrm == 0.0:
        return matched.vectors[:, n] * matched.analytic.norms[n]
    return matched.vectors[:, g] @ c * (matched.analytic.norms[n] / nrm)


def mode_l2_error(matched: MatchedSpectrum, modes=None) -> np.ndarray:
    """Relative L2 error ||u_h - U|| / ||U|| with ||u_h|| = ||U||, by quadrature.

    ``modes`` selects analytic indices (default: all).
    """
    a, space = matched.analytic, matched.space
    modes = np.arange(len(a)) if modes is None else np.atleast_1d(modes)
    C = np.column_stack([_approximation(matched, int(n)) for n in modes])
    if isinstance(space, TensorSpace):
        xq, wx, Bx = _quad_1d(space.x)
        yq, wy, By = _quad_1d(space.y)
        Cr = C.reshape(space.x.N, space.y.N, -1)
        U = np.einsum("ai,ijk->ajk", Bx, Cr)
        U = np.einsum("bj,ajk->abk", By, U)  # (xq, yq, modes)
        err = np.empty(len(modes))
        for t, n in enumerate(modes):
            ex = np.outer(a.values_1d(a.indices[n, :1], xq)[:, 0], a.values_1d(a.indices[n, 1:], yq)[:, 0])
            d = U[:, :, t] - ex
            err[t] = math.sqrt(max(wx @ (d * d) @ wy, 0.0))
    else:
        xq, wq, B = _quad_1d(space)
        Uh = B @ C
        ex = a.values_1d(a.indices[modes, 0], xq)
        err = np.sqrt(np.maximum(wq @ (Uh - ex) ** 2, 0.0))
    return err / a.norms[modes]


def interface_energy_ratio(spectrum, ops) -> np.ndarray:
    """v^T K_G v / v^T M v per discrete mode (combined penalty, unperturbed M)."""
    V = spectrum.eigenvectors
    G, M = ops.combined, ops.M
    return np.einsum("ij,ij->j", V, G @ V) / np.einsum("ij,ij->j", V, M @ V)


def interface_fraction(spectrum, ops, rtol: float = 1e-10) -> np.ndarray:
    """Share of each mode's M-norm lying outside the smooth subspace null(K_G).

    null(K_G) holds the functions without derivative jumps at interfaces; its
    M-orthogonal complement M^-1 range(K_G) has dimension equal to the number
    of interior outliers, and outlier modes live almost entirely in it.
    """
    V = spectrum.eigenvectors
    M = ops.M
    mv = np.einsum("ij,ij->j", V, M @ V)
    G = ops.combined.toarray()
    if not np.any(G):
        return np.zeros(V.shape[1])
    w, Q = np.linalg.eigh(G)
    R = Q[:, w > rtol * w.max()]
    gram = R.T @ np.linalg.solve(M.toarray(), R)
    RV = R.T @ V
    return np.einsum("ij,ij->j", RV, np.linalg.solve(gram, RV)) / mv


def flag_outliers(spectrum, ops, threshold: float = 0.5) -> np.ndarray:
    """Modes whose :func:`interface_fraction` exceeds ``threshold``."""
    return interface_fraction(spectrum, ops) > threshold


def rayleigh_frequency(space, coeffs, alpha_levels=None, beta_levels=None) -> float:
    """Frequency of a 1D mode from sqrt(int (u^(m))^2 / int u^2), m = 1 or 2.

    Both integrals are sums of nonnegative quadrature terms, so this avoids
    the cancellation in v^T K v and resolves relative frequency errors far
    below what the assembled matrices allow.  Per-level penalty weights add
    the squared interface jumps to numerator and denominator, giving the
    Rayleigh quotient of the perturbed pair in the same cancellation-free form.
    """
    if isinstance(space, TensorSpace):
        raise ValueError("rayleigh_frequency supports 1D spaces only")
    m = 1 if space.kind.operator_order == SECOND else 2
    xq, wq = space.quadrature(min(space.degree + 1, 16))
    u = space.collocation(xq) @ coeffs
    du = space.collocation(xq, deriv=m) @ coeffs
    num, den = list(wq * du * du), list(wq * u * u)
    for weights, terms in ((alpha_levels, num), (beta_levels, den)):
        if weights is None:
            continue
        for l, w in enumerate(weights, start=1):
            if w:
                terms += [w * float(space.jump_vector(e, l) @ coeffs) ** 2 for e in range(len(space.interfaces))]
    return math.sqrt(math.fsum(num) / math.fsum(den))


def l2_projection(space, fx, fy=None) -> np.ndarray:
    """Reduced coefficients of the L2 projection of f(x) or f(x) g(y)."""
    if isinstance(space, TensorSpace):
        bx = _load_1d(space.x, fx)
        by = _load_1d(space.y, fy)
        cx = np.linalg.solve(_mass_dense(space.x), bx)
        cy = np.linalg.solve(_mass_dense(space.y), by)
        # the tensor mass matrix is kron(Mx, My), so the projection separates
        return np.kron(cx, cy)
    return np.linalg.solve(_mass_dense(space), _load_1d(space, fx))


def _load_1d(s, f):
    xq, wq, B = _quad_1d(s)
    return B.T @ (wq * f(xq))


def _mass_dense(s):
    xq, wq, B = _quad_1d(s)
    return (B.T * wq) @ B


def function_l2_error(space, coeffs, fx, fy=None, relative: bool = True) -> float:
    """L2 distance between a discrete field and f(x) [g(y)], by quadrature."""
    if isinstance(space, TensorSpace):
        xq, wx, Bx = _quad_1d(space.x)
        yq, wy, By = _quad_1d(space.y)
        U = Bx @ np.asarray(coeffs).reshape(space.x.N, space.y.N) @ By.T
        ex = np.outer(fx(xq), fy(yq))
        err = math.sqrt(max(wx @ ((U - ex) ** 2) @ wy, 0.0))
        ref = math.sqrt(wx @ (ex**2) @ wy)
    else:
        xq, wq, B = _quad_1d(space)
        ex = fx(xq)
        err = math.sqrt(wq @ (B @ coeffs - ex) ** 2)
        ref = math.sqrt(wq @ ex**2)
    return err / ref if relative else err


def convergence_order(h, errors) -> float:
    """Least-squares slope of log(error) against log(h)."""
    h = np.asarray(h, dtype=float)
    e = np.asarray(errors, dtype=float)
    if h.size < 3 or h.size != e.size:
        raise ValueError("need at least 3 (h, error) pairs of equal length")
    if np.any(h <= 0) or np.any(e <= 0):
        raise ValueError("h and errors must be positive")
    slope, _ = np.polyfit(np.log(h), np.log(e), 1)
    return float(slope)
