"""Spring/damper interconnection controller.

Computes the coupling torque tau applied to the true system and the scalar
coupling input e_c applied to the reference system from the instantaneous
augmented state, with every intermediate quantity exposed for diagnostics.
All functions are stateless and pure; the relative path parameter sigma is
integrated by the simulation engine, not here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .dynamics import ConfigurationState, MechModel
from .errors import NumericFaultError
from .reference import ReducedModel

# Zero-velocity cutoff (energy units) below which the velocity-steering term
# is defined as 0; a measure-zero event in closed loop.
VELOCITY_CUTOFF = 1e-12

SpringFn = Callable[[np.ndarray, np.ndarray], tuple[float, np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class CouplingGains:
    """Strictly positive interconnection gains."""

    spring_K: float = 10.0
    kappa: float = 5.0
    damping_R: float = 2.0

    def __post_init__(self):
        for name in ("spring_K", "kappa", "damping_R"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")


@dataclass(frozen=True)
class SyncOutput:
    """Controller outputs plus diagnostics."""

    tau: np.ndarray
    e_c: float
    mu: float
    tau_qdot: np.ndarray
    tau_r0: np.ndarray
    sigma_dot: float
    s_tilde: float
    s_tilde_dot: float
    phi: float
    psi: float


def speed_ratio(
    model: MechModel, state: ConfigurationState, rm: ReducedModel, s: float
) -> float:
    """sigmadot = sqrt(qdot^T M qdot) / sqrt(M_r(s)); 0 at rest."""
    model.check_state(state)
    mr = rm.reduced_inertia(s)
    speed_sq = float(state.qdot @ model.inertia(state.q) @ state.qdot)
    if speed_sq <= 0.0:
        return 0.0
    return float(np.sqrt(speed_sq / mr))


def dual_torque(model: MechModel, state: ConfigurationState) -> np.ndarray:
    """Generalized torque metrically dual to the velocity: M(q) qdot."""
    model.check_state(state)
    return model.inertia(state.q) @ state.qdot


def constraint_force(
    model: MechModel,
    state: ConfigurationState,
    rm: ReducedModel,
    s: float,
    tau_r: np.ndarray,
) -> np.ndarray:
    """Workless steering component of the reference force.

    tau_r0 = (<tau_qdot, qdot>/M_r) tau_r - (<qdot, tau_r>/M_r) tau_qdot,
    so that <tau_r0, qdot> = 0 by construction.
    """
    mr = rm.reduced_inertia(s)
    tq = dual_torque(model, state)
    return (float(tq @ state.qdot) / mr) * np.asarray(tau_r, dtype=float) - (
        float(state.qdot @ tau_r) / mr
    ) * tq


def quadratic_spring(K: float) -> SpringFn:
    """Default spring potential phi = K |q - q_r|^2 / 2 and its gradients."""

    def spring(q: np.ndarray, q_r: np.ndarray):
        e = q - q_r
        g = K * e
        return 0.5 * float(g @ e), g, -g

    return spring


def mu_gain(
    rm: ReducedModel,
    s: float,
    s_tilde: float,
    s_tilde_dot: float,
    sigma: float,
    gains: CouplingGains,
) -> float:
    """Velocity-steering gain.

    mu = (dW_r/dsigma - kappa s_tilde - R s_tilde_dot) / sqrt(M_r(s)),
    with the reference-potential gradient evaluated at the true system's
    path parameter sigma.
    """
    dw_dsigma = -rm.reference_input(sigma)
    mr = rm.reduced_inertia(s)
    return (dw_dsigma - gains.kappa * s_tilde - gains.damping_R * s_tilde_dot) / np.sqrt(mr)


def _sync_core(
    M: np.ndarray,
    q: np.ndarray,
    qdot: np.ndarray,
    rv,
    e_r_sigma: float,
    s: float,
    sdot: float,
    sigma: float,
    gains: CouplingGains,
    spring: SpringFn,
) -> SyncOutput:
    """Interconnection law on precomputed quantities.

    ``rv`` is the reduced-model evaluation at s (``ReducedModel.reduced_eval``)
    and ``e_r_sigma`` the scalar reference input at the true path parameter
    sigma.  Shared by ``control_signals`` and the simulation hot loop.
    """
    tau_qdot = M @ qdot
    p = float(tau_qdot @ qdot)

    sigma_dot = np.sqrt(p / rv.m_r) if p > 0.0 else 0.0
    s_tilde = s - sigma
    s_tilde_dot = sdot - sigma_dot

    tau_r0 = (p / rv.m_r) * rv.tau_r - (float(qdot @ rv.tau_r) / rv.m_r) * tau_qdot

    phi, dphi_dq, dphi_dqr = spring(q, rv.q_r)
    psi = 0.5 * gains.kappa * s_tilde * s_tilde

    mu = (
        -e_r_sigma - gains.kappa * s_tilde - gains.damping_R * s_tilde_dot
    ) / np.sqrt(rv.m_r)

    if p < VELOCITY_CUTOFF:
        steering = np.zeros(q.size)
    else:
        steering = (mu / np.sqrt(p)) * tau_qdot

    tau = -steering + tau_r0 - dphi_dq
    e_c = -gains.kappa * s_tilde - gains.damping_R * s_tilde_dot - float(
        dphi_dqr @ rv.d1
    )

    if not (np.isfinite(tau).all() and np.isfinite(e_c) and np.isfinite(mu)):
        for name, val in (("tau", tau), ("e_c", e_c), ("mu", mu)):
            if not np.all(np.isfinite(val)):
                raise NumericFaultError(f"non-finite controller output: {name}")

    return SyncOutput(
        tau=tau,
        e_c=e_c,
        mu=float(mu),
        tau_qdot=tau_qdot,
        tau_r0=tau_r0,
        sigma_dot=float(sigma_dot),
        s_tilde=float(s_tilde),
        s_tilde_dot=float(s_tilde_dot),
        phi=float(phi),
        psi=float(psi),
    )


def control_signals(
    model: MechModel,
    state: ConfigurationState,
    rm: ReducedModel,
    s: float,
    sdot: float,
    sigma: float,
    gains: CouplingGains,
    spring: Optional[SpringFn] = None,
) -> SyncOutput:
    """Interconnection signals tau and e_c with all diagnostics.

    tau = -mu tau_qdot / sqrt(<tau_qdot, qdot>) + tau_r0 - dphi/dq, with the
    steering term set to 0 below the zero-velocity cutoff;
    e_c = -kappa s_tilde - R s_tilde_dot - <dphi/dq_r, q_r'(s)>.
    """
    model.check_state(state)
    if spring is None:
        spring = quadratic_spring(gains.spring_K)
    rv = rm.reduced_eval(s)
    e_r_sigma = rm.reference_input(sigma)
    M = model.inertia(state.q)
    return _sync_core(
        M, state.q, state.qdot, rv, e_r_sigma, s, sdot, sigma, gains, spring
    )
