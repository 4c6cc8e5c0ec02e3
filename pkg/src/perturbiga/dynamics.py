"""Explicit central-difference integration of the (perturbed) semi-discrete system

    M~ u'' + K~ u = 0,   K~ = K + alpha K_G,   M~ = M + beta K_G.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import OperatorSet
from .eigensolve import max_eigenpair
from .errors import NotSPDError, StabilityError
from .perturbation import PerturbationParams, perturb

__all__ = [
    "critical_timestep",
    "TransientState",
    "Trajectory",
    "CentralDifference",
    "integrate",
    "energy",
]


def critical_timestep(omega_max: float) -> float:
    """Stability limit 2 / omega_max of the central-difference scheme."""
    if not omega_max > 0:
        raise ValueError(f"omega_max must be positive, got {omega_max}")
    return 2.0 / omega_max


@dataclass(frozen=True, eq=False)
class TransientState:
    u: np.ndarray
    u_prev: np.ndarray
    t: float
    dt: float

    def __post_init__(self):
        if self.u.shape != self.u_prev.shape:
            raise ValueError("u and u_prev must have equal length")

    @property
    def velocity(self) -> np.ndarray:
        """Backward difference (u_k - u_{k-1}) / dt, the half-step central velocity."""
        return (self.u - self.u_prev) / self.dt


@dataclass(eq=False)
class Trajectory:
    times: np.ndarray
    displacements: np.ndarray  # (samples, N)
    energies: np.ndarray  # (samples, 3): kinetic, strain, total
    final: TransientState
    n_steps: int
    omega_max: float | None = None
    observed: list = field(default_factory=list)


class CentralDifference:
    """u_{k+1} = 2 u_k - u_{k-1} - dt^2 M~^-1 K~ u_k with M~ factored once.

    The mass factorization is a sparse LU (``splu``), so each step costs one
    product with K~ and one pair of triangular solves.
    """

    def __init__(self, K, M, dt: float):
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.K = sp.csr_matrix(K)
        self.M = sp.csr_matrix(M)
        self.dt = float(dt)
        try:
            self._lu = spla.splu(sp.csc_matrix(M))
        except RuntimeError as exc:
            raise NotSPDError(f"mass matrix factorization failed: {exc}") from None
        if np.any(self._lu.U.diagonal() <= 0):
            raise NotSPDError("mass matrix is not positive definite")

    def accel(self, u: np.ndarray) -> np.ndarray:
        return -self._lu.solve(self.K @ u)

    def start(self, u0, v0, t0: float = 0.0) -> TransientState:
        u0 = np.asarray(u0, dtype=float)
        v0 = np.asarray(v0, dtype=float)
        dt = self.dt
        u_prev = u0 - dt * v0 + 0.5 * dt**2 * self.accel(u0)
        return TransientState(u0.copy(), u_prev, t0, dt)

    def step(self, s: TransientState) -> TransientState:
        u_next = 2.0 * s.u - s.u_prev + self.dt**2 * self.accel(s.u)
        return TransientState(u_next, s.u, s.t + self.dt, self.dt)

    def advance(self, s: TransientState, n: int) -> TransientState:
        u, u_prev = s.u, s.u_prev
        dt2 = self.dt**2
        for _ in range(n):
            u, u_prev = 2.0 * u - u_prev + dt2 * self.accel(u), u
        return TransientState(u, u_prev, s.t + n * self.dt, self.dt)


def _energy(K, M, s: TransientState) -> tuple[float, float, float]:
    v = s.velocity
    kin = 0.5 * float(v @ (M @ v))
    strain = 0.5 * float(s.u @ (K @ s.u))
    return kin, strain, kin + strain


def energy(ops: OperatorSet, params: PerturbationParams | None, state: TransientState):
    """(kinetic, strain, total) of ``state`` for the perturbed pair."""
    P = perturb(ops, params or PerturbationParams())
    return _energy(P.K, P.M, state)


def integrate(
    ops: OperatorSet,
    params: PerturbationParams | None,
    u0,
    v0,
    dt: float,
    T: float,
    sample_every: int | None = None,
    observer=None,
    check_stability: bool = True,
) -> Trajectory:
    """Integrate from t = 0 to t = T.

    The step count is ceil(T / dt) and the step is shrunk to T / n_steps so
    the run ends exactly at T.  ``observer(t, u)``, when given, is evaluated
    at every sample and its results are collected in ``Trajectory.observed``.
    With ``check_stability`` the perturbed maximum frequency is computed and
    a step at or above the critical one is refused.
    """
    if not T > 0 or not dt > 0:
        raise ValueError("dt and T must be positive")
    P = perturb(ops, params or PerturbationParams())
    n_steps = int(np.ceil(T / dt - 1e-12))
    dt_eff = T / n_steps
    omega = None
    if check_stability:
        omega, _ = max_eigenpair(P.K, P.M)
        dt_crit = critical_timestep(omega)
        if dt_eff >= dt_crit:
            raise StabilityError(f"time step {dt_eff:.6g} is not below the critical step {dt_crit:.6g}")
    cd = CentralDifference(P.K, P.M, dt_eff)
    every = sample_every or n_steps
    state = cd.start(u0, v0)
    times, disp, ens, obs = [], [], [], []

    def record(s):
        times.append(s.t)
        disp.append(s.u.copy())
        ens.append(_energy(P.K, P.M, s))
        if observer is not None:
            obs.append(observer(s.t, s.u))

    record(state)
    done = 0
    while done < n_steps:
        k = min(every, n_steps - done)
        state = cd.advance(state, k)
        done += k
        record(state)
    # exact final time, free of accumulated rounding in t
    state = TransientState(state.u, state.u_prev, float(T), dt_eff)
    times[-1] = float(T)
    return Trajectory(np.array(times), np.array(disp), np.array(ens), state, n_steps, omega, obs)
