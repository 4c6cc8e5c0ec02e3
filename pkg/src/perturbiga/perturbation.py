"""Perturbed eigenproblems and estimation of the perturbation parameters.

The perturbed pair is

    K~ = K + sum_l alpha_l K_G^l,    M~ = M + sum_l beta_l K_G^l,

or, with the h-scaled combination K_G = sum_l h^(2l-2) K_G^l,
K~ = K + alpha K_G and M~ = M + beta K_G.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import OperatorSet
from .eigensolve import Spectrum, max_eigenpair, solve_gevp
from .errors import ConvergenceError, EstimationError, NoOutlierError

__all__ = [
    "TraceRecord",
    "PerturbationParams",
    "PerturbedOperators",
    "perturb",
    "regime_params",
    "regime_probe",
    "estimate_exact_target_1d",
    "active_levels",
    "algorithm1_estimate",
    "REGIMES",
]

log = logging.getLogger(__name__)

REGIMES = ("f_zero", "f_in_0_1", "f_gt_1", "mass_only")


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    alpha: float
    beta: float
    omega_max: float
    target: float = float("nan")


@dataclass
class PerturbationParams:
    """Scalings of the interface penalty on the stiffness (alpha) and mass
    (beta) side.

    Scalar ``alpha``/``beta`` multiply the h-combined penalty.  When
    ``alpha_levels``/``beta_levels`` are given they multiply the individual
    levels l = 1..p-1 instead.  ``per_interface`` maps ``(l, interface)`` to an
    ``(alpha, beta)`` override for that single interface.
    """

    alpha: float = 0.0
    beta: float = 0.0
    f: float | None = None
    c: float | None = None
    alpha_levels: tuple[float, ...] | None = None
    beta_levels: tuple[float, ...] | None = None
    per_interface: dict = field(default_factory=dict)
    target: float | None = None
    omega_max: float | None = None
    trace: list[TraceRecord] = field(default_factory=list)

    def __post_init__(self):
        vals = [self.alpha, self.beta, *(self.alpha_levels or ()), *(self.beta_levels or ())]
        if any(v < 0 for v in vals):
            raise ValueError("perturbation parameters must be nonnegative")

    @property
    def is_zero(self) -> bool:
        vals = [self.alpha, self.beta, *(self.alpha_levels or ()), *(self.beta_levels or ())]
        vals += [x for ab in self.per_interface.values() for x in ab]
        return all(v == 0 for v in vals)

    def level_values(self, ops: OperatorSet) -> tuple[np.ndarray, np.ndarray]:
        L = len(ops.penalties)
        scale = np.array([ops.h ** (2 * l - 2) for l in range(1, L + 1)])
        a = np.asarray(self.alpha_levels, dtype=float) if self.alpha_levels is not None else self.alpha * scale
        b = np.asarray(self.beta_levels, dtype=float) if self.beta_levels is not None else self.beta * scale
        if a.shape != (L,) or b.shape != (L,):
            raise ValueError(f"expected {L} level parameters")
        return a, b


@dataclass(frozen=True, eq=False)
class PerturbedOperators:
    K: sp.spmatrix
    M: sp.spmatrix


def perturb(ops: OperatorSet, params: PerturbationParams) -> PerturbedOperators:
    if params.is_zero:
        return PerturbedOperators(ops.K, ops.M)
    if not params.per_interface and params.alpha_levels is None and params.beta_levels is None:
        G = ops.combined
        return PerturbedOperators(sp.csr_matrix(ops.K + params.alpha * G), sp.csr_matrix(ops.M + params.beta * G))
    a, b = params.level_values(ops)
    K, M = ops.K.copy(), ops.M.copy()
    if params.per_interface:
        if not ops.per_interface:
            raise ValueError("per-interface parameters need operators assembled with split_interfaces=True")
        for (l, key), P in ops.per_interface.items():
            al, bl = params.per_interface.get((l, key), (a[l - 1], b[l - 1]))
            K = K + al * P
            M = M + bl * P
    else:
        for l, P in enumerate(ops.penalties, start=1):
            K = K + a[l - 1] * P
            M = M + b[l - 1] * P
    return PerturbedOperators(sp.csr_matrix(K), sp.csr_matrix(M))


def _unperturbed_max(ops: OperatorSet):
    return max_eigenpair(ops.K, ops.M)


def regime_params(ops: OperatorSet, regime: str, f: float | None = None, alpha: float | None = None,
                  beta: float | None = None, target: float | None = None) -> PerturbationParams:
    """Parameters for the four parameter regimes of the first-order analysis.

    f_zero:   alpha given, beta = 0 (stiffness-side penalty only)
    f_in_0_1: f in (0, 1), alpha given, beta = f alpha / omega_max^2
    f_gt_1:   f > 1, alpha from the first-order relation aiming at ``target``,
              beta = f alpha / target^2
    mass_only: alpha = 0, beta given
    """
    if regime == "f_zero":
        return PerturbationParams(alpha=float(alpha), beta=0.0, f=0.0)
    if regime == "f_in_0_1":
        if not 0 < f < 1:
            raise ValueError("f_in_0_1 needs 0 < f < 1")
        w, _ = _unperturbed_max(ops)
        return PerturbationParams(alpha=float(alpha), beta=f * alpha / w**2, f=f)
    if regime == "f_gt_1":
        if f is None or f <= 1 or target is None or target <= 0:
            raise ValueError("f_gt_1 needs f > 1 and a positive target frequency")
        w, U = _unperturbed_max(ops)
        energy = U @ (ops.combined @ U)
        if energy < 1e-12:
            raise NoOutlierError("maximum mode has no interface energy")
        a = (target**2 - w**2) / (energy * (1.0 - f))
        return PerturbationParams(alpha=a, beta=f * a / target**2, f=f, target=target)
    if regime == "mass_only":
        return PerturbationParams(alpha=0.0, beta=float(beta))
    raise ValueError(f"unknown regime {regime!r}; expected one of {REGIMES}")


def regime_probe(ops: OperatorSet, regime: str, **kw) -> Spectrum:
    P = perturb(ops, regime_params(ops, regime, **kw))
    return solve_gevp(P.K, P.M)


def _m_normalize(V, M):
    norms = np.sqrt(np.einsum("ij,ij->j", V, M @ V))
    return V / norms


def estimate_exact_target_1d(ops: OperatorSet, f: float, targets, max_iters: int = 50,
                             tol: float = 1e-6, cycle_len: int = 4, relaxation: float = 1.0) -> PerturbationParams:
    """Per-level parameters driving the p-1 interface outliers to known targets.

    Each iteration solves the perturbed problem, picks for each level l the
    mode with the largest K_G^l energy among modes not yet picked, and solves
    the (p-1)x(p-1) linear system of the first-order relations for alpha_l;
    beta_l = f alpha_l / target_l^2.  The largest target goes to the picked
    mode with the highest frequency, and so on down.

    Converges when the relative change of every alpha_l is below ``tol``.
    When targets sit inside the regular branch the picked modes can swap
    between iterations and the iterates cycle; a return to an iterate seen at
    most ``cycle_len`` steps earlier ends the loop, keeping the cycle member
    with the lowest maximum frequency.
    """
    if f <= 1:
        raise ValueError("exact-target estimation needs f > 1")
    if not 0 < relaxation <= 1:
        raise ValueError("relaxation must lie in (0, 1]")
    active = active_levels(ops)
    L = len(active)
    if L == 0:
        raise EstimationError("interface penalty matrices vanish; nothing to estimate")
    targets = np.sort(np.asarray(targets, dtype=float))[::-1]
    if targets.shape != (L,):
        raise ValueError(f"need {L} target frequencies (one per active penalty level)")
    if np.any(targets <= 0):
        raise ValueError("targets must be positive")
    Md = ops.M.toarray()
    Kd = ops.K.toarray()
    G = [ops.penalties[l - 1].toarray() for l in active]
    n_levels = len(ops.penalties)

    def full(x):
        out = np.zeros(n_levels)
        out[np.asarray(active) - 1] = x
        return tuple(out)

    def params(alpha, beta, trace):
        return PerturbationParams(alpha_levels=full(alpha), beta_levels=full(beta), f=f,
                                  target=float(targets[0]), trace=trace)

    alpha = np.zeros(L)
    beta = np.zeros(L)
    trace = []
    history = []  # (alpha, beta, omega_max of the problem they define)
    for it in range(1, max_iters + 1):
        Kt = Kd + sum(a * g for a, g in zip(alpha, G))
        Mt = Md + sum(b * g for b, g in zip(beta, G))
        spec = solve_gevp(Kt, Mt)
        if it > 1:
            history.append((alpha, beta, float(spec.frequencies[-1])))
        V = _m_normalize(spec.eigenvectors, Md)
        energies = np.array([np.einsum("ij,ij->j", V, g @ V) for g in G])
        n_sel = []
        for l in range(L):
            e = energies[l].copy()
            e[n_sel] = -np.inf
            best = e.max()
            ties = np.flatnonzero(e >= best - 1e-12 * abs(best))
            n_sel.append(int(ties.max()))
        order = np.argsort([-spec.eigenvalues[n] for n in n_sel])
        tgt = np.empty(L)
        tgt[order] = targets
        A = np.empty((L, L))
        rhs = np.empty(L)
        for j, n in enumerate(n_sel):
            v = V[:, n]
            for l in range(L):
                A[j, l] = (1.0 - f * tgt[j] ** 2 / tgt[l] ** 2) * energies[l, n]
            rhs[j] = tgt[j] ** 2 - v @ Kd @ v
        # level energies scale like h^(-2l); judge conditioning after column equilibration
        colmax = np.abs(A).max(axis=0)
        if not np.all(np.isfinite(A)) or np.any(colmax == 0) or np.linalg.cond(A / colmax) > 1e14:
            raise EstimationError("singular parameter system (no interface energy in the selected modes)")
        new_alpha = np.linalg.solve(A, rhs)
        if it > 1 and relaxation != 1.0:
            new_alpha = relaxation * new_alpha + (1.0 - relaxation) * alpha
        new_beta = f * new_alpha / tgt**2
        trace.append(TraceRecord(it, float(new_alpha.sum()), float(new_beta.sum()), float(spec.frequencies[-1])))
        if np.any(new_alpha < 0):
            # a level whose selected mode already sits below its target: leave it unpenalized
            if np.all(new_alpha <= 0):
                raise EstimationError(f"no positive parameters at iteration {it}: {new_alpha}")
            log.info("exact-target iteration %d: clamping negative levels %s", it, np.flatnonzero(new_alpha < 0) + 1)
            new_alpha = np.maximum(new_alpha, 0.0)
            new_beta = f * new_alpha / tgt**2

        def close(x, y):
            return np.max(np.abs(x - y) / np.maximum(np.abs(x), 1e-300)) <= tol

        change = np.max(np.abs(new_alpha - alpha) / np.maximum(np.abs(new_alpha), 1e-300))
        log.debug("exact-target iteration %d: alpha=%s change=%.3e", it, new_alpha, change)
        if change <= tol:
            return params(new_alpha, new_beta, trace)
        for back in range(1, min(cycle_len, len(history)) + 1):
            if close(new_alpha, history[-back][0]):
                cyc = history[-back:]
                a_best, b_best, w = min(cyc, key=lambda h: h[2])
                log.info("exact-target iterates cycle with period %d; keeping omega_max=%.10g", back + 1, w)
                return params(a_best, b_best, trace)
        alpha, beta = new_alpha, new_beta
    raise ConvergenceError(f"exact-target estimation did not converge in {max_iters} iterations",
                           last=params(alpha, beta, trace), trace=trace)


def active_levels(ops: OperatorSet) -> list[int]:
    """Penalty levels l whose jump matrix is not identically zero.

    Levels up to the coupling smoothness vanish (l = 1 under C^1 coupling).
    Without a space attached, a level counts as active when its h-weighted
    norm is not negligible.
    """
    space = ops.space
    if space is not None:
        s1 = space.x if hasattr(space, "x") else space
        if s1.n_patches < 2 and not (hasattr(space, "y") and space.y.n_patches > 1):
            return []
        k = s1.patch_smoothness
        return list(range(k + 1, len(ops.penalties) + 1))
    norms = [ops.h ** (2 * l - 2) * (abs(P).max() if P.nnz else 0.0) for l, P in enumerate(ops.penalties, start=1)]
    top = max(norms, default=0.0)
    return [l for l, n in enumerate(norms, start=1) if top > 0 and n > 1e-10 * top]


def _max_pair(K, M, method: str):
    if method == "power":
        try:
            return max_eigenpair(K, M)
        except ConvergenceError:
            # nearly coincident top eigenvalues; the full solve settles it
            log.warning("power iteration stalled; using the dense eigensolver")
            method = "dense"
    if method == "dense":
        s = solve_gevp(K, M)
        return float(s.frequencies[-1]), s.eigenvectors[:, -1]
    raise ValueError(f"unknown eigensolver {method!r}")


def algorithm1_estimate(ops: OperatorSet, f: float = 2.0, c: float = 0.9, max_outer: int = 30,
                        eigensolver: str = "power", tol: float = 1e-6) -> PerturbationParams:
    """Pragmatic estimation of (alpha, beta) for the h-combined penalty.

    Each pass targets ``c`` times the current maximum frequency.  The update
    uses the unperturbed maximum mode in the denominator; the loop stops as
    soon as the maximum frequency grows again and returns the previous
    parameters.  It also stops when alpha changes by less than ``tol``
    (relative): the maximum frequency has then settled at a floor the
    combined penalty cannot push below.
    """
    if f <= 1:
        raise ValueError("f must be > 1")
    if not 0 < c < 1:
        raise ValueError("c must lie in (0, 1)")
    G = ops.combined
    w0, U0 = _max_pair(ops.K, ops.M, eigensolver)
    U0 = U0 / np.sqrt(U0 @ (ops.M @ U0))
    denom = U0 @ (G @ U0)
    if not denom > 1e-12:
        raise NoOutlierError("maximum mode carries no interface energy; nothing to suppress")

    trace = [TraceRecord(0, 0.0, 0.0, w0)]
    prev = PerturbationParams(alpha=0.0, beta=0.0, f=f, c=c, omega_max=w0)
    w_cur, U_cur = w0, U0
    for it in range(1, max_outer + 1):
        target = c * w_cur
        a = (target**2 - U_cur @ (ops.K @ U_cur)) / (denom * (1.0 - f))
        if not a > 0:
            # first-order update no longer lowers the maximum frequency
            trace.append(TraceRecord(it, a, float("nan"), float("nan"), target))
            prev.trace = trace
            return prev
        b = f * a / target**2
        P = perturb(ops, PerturbationParams(alpha=a, beta=b))
        w_new, U_new = _max_pair(P.K, P.M, eigensolver)
        U_new = U_new / np.sqrt(U_new @ (ops.M @ U_new))
        trace.append(TraceRecord(it, a, b, w_new, target))
        log.debug("algorithm1 iteration %d: alpha=%.6g beta=%.6g omega_max=%.10g", it, a, b, w_new)
        if w_new > w_cur:
            prev.trace = trace
            return prev
        settled = prev.alpha > 0 and abs(a - prev.alpha) <= tol * a
        prev = PerturbationParams(alpha=a, beta=b, f=f, c=c, target=target, omega_max=w_new)
        if settled:
            prev.trace = trace
            return prev
        w_cur, U_cur = w_new, U_new
    raise ConvergenceError(f"maximum frequency still decreasing after {max_outer} iterations",
                           last=prev, trace=trace)
