"""Rigid-body mechanical dynamics.

Evaluates inertia, Coriolis, potential, forward/inverse dynamics and the
Hamiltonian for built-in and user-defined models.  The Coriolis matrix is
built from Christoffel symbols of the first kind so that Mdot - 2C is skew
symmetric along trajectories and the energy balance dH/dt = <tau, qdot>
holds exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .errors import DimensionMismatchError, SingularInertiaError

# Central-difference step for internally generated partials.
_FD_STEP = 1e-6

# Condition-estimate threshold above which the inertia is treated as singular.
_COND_LIMIT = 1e12


@dataclass(frozen=True)
class ConfigurationState:
    """Generalized coordinates and velocities (q, qdot), both length n."""

    q: np.ndarray
    qdot: np.ndarray

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        qd = np.atleast_1d(np.asarray(self.qdot, dtype=float))
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qdot", qd)
        if q.ndim != 1 or qd.ndim != 1 or q.shape != qd.shape or q.size < 1:
            raise DimensionMismatchError(
                f"q and qdot must be equal-length vectors, got {q.shape} and {qd.shape}"
            )
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd))):
            raise DimensionMismatchError("state entries must be finite")

    @property
    def n(self) -> int:
        return self.q.size


def _fd_inertia_partials(inertia: Callable, n: int) -> Callable:
    def partials(q: np.ndarray) -> np.ndarray:
        out = np.empty((n, n, n))
        for k in range(n):
            dq = np.zeros(n)
            dq[k] = _FD_STEP
            out[k] = (inertia(q + dq) - inertia(q - dq)) / (2.0 * _FD_STEP)
        return out

    return partials


def _fd_potential_grad(potential: Callable, n: int) -> Callable:
    def grad(q: np.ndarray) -> np.ndarray:
        out = np.empty(n)
        for k in range(n):
            dq = np.zeros(n)
            dq[k] = _FD_STEP
            out[k] = (potential(q + dq) - potential(q - dq)) / (2.0 * _FD_STEP)
        return out

    return grad


@dataclass(frozen=True)
class MechModel:
    """Evaluatable conservative mechanical system.

    ``inertia(q)`` returns the symmetric positive-definite n x n matrix M(q),
    ``potential(q)`` the scalar U(q).  ``inertia_partials(q)`` returns an
    (n, n, n) array P with ``P[k] = dM/dq_k``; ``potential_grad(q)`` returns
    dU/dq.  When the partials are omitted they are generated internally by
    central differences with step 1e-6 (at a documented accuracy cost).

    Models are immutable after construction and safe to share across
    concurrent scenario runs.
    """

    n: int
    inertia: Callable[[np.ndarray], np.ndarray]
    potential: Callable[[np.ndarray], float]
    inertia_partials: Optional[Callable[[np.ndarray], np.ndarray]] = None
    potential_grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    # Skip the Christoffel computation entirely for configuration-independent M.
    constant_inertia: bool = field(default=False)

    def __post_init__(self):
        if self.n < 1:
            raise DimensionMismatchError("model dimension must be >= 1")
        if self.inertia_partials is None:
            object.__setattr__(
                self, "inertia_partials", _fd_inertia_partials(self.inertia, self.n)
            )
        if self.potential_grad is None:
            object.__setattr__(
                self, "potential_grad", _fd_potential_grad(self.potential, self.n)
            )

    def check_state(self, state: ConfigurationState) -> None:
        if state.n != self.n:
            raise DimensionMismatchError(
                f"state dimension {state.n} != model dimension {self.n}"
            )


def point_mass(mass: float = 1.0, gravity: float = 0.0, dims: int = 2) -> MechModel:
    """Point mass with constant inertia m*I and U = m*g*q[-1].

    ``dims=2`` gives the planar point mass; ``dims=1`` is handy for scalar
    test paths.  Gravity acts along the last coordinate.
    """
    m = float(mass)
    g = float(gravity)
    M = m * np.eye(dims)
    zero_partials = np.zeros((dims, dims, dims))
    grad = np.zeros(dims)
    grad[-1] = m * g

    return MechModel(
        n=dims,
        inertia=lambda q: M,
        potential=lambda q: m * g * q[-1],
        inertia_partials=lambda q: zero_partials,
        potential_grad=lambda q: grad.copy(),
        constant_inertia=True,
    )


def two_link_arm(
    m1: float = 1.0,
    m2: float = 1.0,
    l1: float = 1.0,
    l2: float = 1.0,
    lc1: float = 0.5,
    lc2: float = 0.5,
    I1: float = 1.0 / 12.0,
    I2: float = 1.0 / 12.0,
    g: float = 9.81,
) -> MechModel:
    """Planar two-link revolute arm with the standard closed-form M and U.

    Angles are measured from the horizontal; gravity pulls along -y.
    """
    a1 = I1 + I2 + m1 * lc1**2 + m2 * (l1**2 + lc2**2)
    a2 = m2 * l1 * lc2
    a3 = I2 + m2 * lc2**2

    def inertia(q: np.ndarray) -> np.ndarray:
        c2 = np.cos(q[1])
        m11 = a1 + 2.0 * a2 * c2
        m12 = a3 + a2 * c2
        return np.array([[m11, m12], [m12, a3]])

    def inertia_partials(q: np.ndarray) -> np.ndarray:
        s2 = np.sin(q[1])
        out = np.zeros((2, 2, 2))
        out[1] = np.array(
            [[-2.0 * a2 * s2, -a2 * s2], [-a2 * s2, 0.0]]
        )
        return out

    def potential(q: np.ndarray) -> float:
        return m1 * g * lc1 * np.sin(q[0]) + m2 * g * (
            l1 * np.sin(q[0]) + lc2 * np.sin(q[0] + q[1])
        )

    def potential_grad(q: np.ndarray) -> np.ndarray:
        c1 = np.cos(q[0])
        c12 = np.cos(q[0] + q[1])
        return np.array(
            [
                m1 * g * lc1 * c1 + m2 * g * (l1 * c1 + lc2 * c12),
                m2 * g * lc2 * c12,
            ]
        )

    return MechModel(
        n=2,
        inertia=inertia,
        potential=potential,
        inertia_partials=inertia_partials,
        potential_grad=potential_grad,
    )


def coriolis_raw(model: MechModel, q: np.ndarray, qdot: np.ndarray) -> np.ndarray:
    """Coriolis matrix without state validation (hot-loop entry point)."""
    if model.constant_inertia:
        return np.zeros((model.n, model.n))
    P = model.inertia_partials(q)
    term1 = np.einsum("kij,k->ij", P, qdot)
    term2 = np.einsum("jik,k->ij", P, qdot)
    term3 = np.einsum("ijk,k->ij", P, qdot)
    return 0.5 * (term1 + term2 - term3)


def coriolis_force(model: MechModel, q: np.ndarray, qdot: np.ndarray) -> np.ndarray:
    """Coriolis force C(q, qdot) qdot directly in vector form (hot loop)."""
    if model.constant_inertia:
        return np.zeros(model.n)
    P = model.inertia_partials(q)
    e1 = np.einsum("kij,k,j->i", P, qdot, qdot)
    e3 = np.einsum("ijk,j,k->i", P, qdot, qdot)
    return e1 - 0.5 * e3


def coriolis(model: MechModel, state: ConfigurationState) -> np.ndarray:
    """Coriolis matrix from Christoffel symbols of the first kind.

    C_ij = sum_k 0.5 (dM_ij/dq_k + dM_ik/dq_j - dM_jk/dq_i) qdot_k, which
    guarantees that Mdot - 2C is skew symmetric along trajectories.
    """
    model.check_state(state)
    return coriolis_raw(model, state.q, state.qdot)


def _chol_factor(M: np.ndarray) -> np.ndarray:
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise SingularInertiaError(f"inertia not positive definite: {exc}") from exc
    d = np.diag(L)
    cond_est = (d.max() / d.min()) ** 2
    if cond_est > _COND_LIMIT:
        raise SingularInertiaError(
            f"inertia condition estimate {cond_est:.3e} exceeds {_COND_LIMIT:.0e}"
        )
    return L


def forward_dynamics(
    model: MechModel, state: ConfigurationState, tau: np.ndarray
) -> np.ndarray:
    """Acceleration qddot = M(q)^{-1} (tau - C qdot - dU/dq), by SPD solve."""
    model.check_state(state)
    tau = np.asarray(tau, dtype=float)
    if tau.shape != (model.n,):
        raise DimensionMismatchError(
            f"torque shape {tau.shape} != ({model.n},)"
        )
    M = model.inertia(state.q)
    rhs = tau - coriolis(model, state) @ state.qdot - model.potential_grad(state.q)
    L = _chol_factor(M)
    return scipy.linalg.cho_solve((L, True), rhs)


def inverse_dynamics(
    model: MechModel, state: ConfigurationState, qddot: np.ndarray
) -> np.ndarray:
    """Torque tau = M(q) qddot + C(q, qdot) qdot + dU/dq."""
    model.check_state(state)
    qddot = np.asarray(qddot, dtype=float)
    if qddot.shape != (model.n,):
        raise DimensionMismatchError(
            f"acceleration shape {qddot.shape} != ({model.n},)"
        )
    M = model.inertia(state.q)
    return M @ qddot + coriolis(model, state) @ state.qdot + model.potential_grad(state.q)


def hamiltonian(model: MechModel, state: ConfigurationState) -> float:
    """Total mechanical energy H = 0.5 qdot^T M(q) qdot + U(q)."""
    model.check_state(state)
    M = model.inertia(state.q)
    return 0.5 * float(state.qdot @ M @ state.qdot) + float(model.potential(state.q))


def power_bracket(tau: np.ndarray, qdot: np.ndarray) -> float:
    """Power supplied by a generalized force through a velocity: tau^T qdot."""
    tau = np.asarray(tau, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    if tau.shape != qdot.shape:
        raise DimensionMismatchError(
            f"force shape {tau.shape} != velocity shape {qdot.shape}"
        )
    return float(tau @ qdot)
