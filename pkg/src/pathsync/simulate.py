"""Closed-loop simulation engine.

Integrates the augmented state (q, qdot, s, sdot, sigma) with a fixed-step
classical 4th-order Runge-Kutta scheme, produces per-step controller and
energy diagnostics, generates zero-dynamics phase portraits, runs the
computed-torque baseline, and verifies the closed-loop power identity and
convergence behaviour on recorded traces.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg

from .controller import CouplingGains, SyncOutput, _sync_core, quadratic_spring
from .dynamics import (
    ConfigurationState,
    MechModel,
    _chol_factor,
    coriolis,
    coriolis_force,
    coriolis_raw,
)
from .errors import (
    ConfigError,
    DimensionMismatchError,
    NumericFaultError,
    PathsyncError,
    TraceModeError,
)
from .reference import ReducedModel

CONTROLLER_MODES = ("theorem1", "theorem1+pump", "computed_torque", "open_loop")

# Residual gate of the closed-loop power identity dE/dt = -R stilde_dot^2.
POWER_BALANCE_TOL = 1e-6

# Convergence statistics are taken over the final fifth of the horizon.
TAIL_FRACTION = 0.2


@dataclass(frozen=True)
class AugmentedState:
    """Closed-loop state: true system (q, qdot) plus scalar states (s, sdot, sigma)."""

    q: np.ndarray
    qdot: np.ndarray
    s: float
    sdot: float
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "q", np.atleast_1d(np.asarray(self.q, dtype=float)))
        object.__setattr__(
            self, "qdot", np.atleast_1d(np.asarray(self.qdot, dtype=float))
        )
        if self.q.shape != self.qdot.shape:
            raise DimensionMismatchError("q and qdot must have equal length")
        vec = self.as_vector()
        if not np.all(np.isfinite(vec)):
            raise DimensionMismatchError("augmented state entries must be finite")

    @property
    def n(self) -> int:
        return self.q.size

    def as_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.q, self.qdot, [self.s, self.sdot, self.sigma]]
        )

    @classmethod
    def from_vector(cls, y: np.ndarray, n: int) -> "AugmentedState":
        return cls(q=y[:n], qdot=y[n : 2 * n], s=y[2 * n], sdot=y[2 * n + 1], sigma=y[2 * n + 2])


@dataclass(frozen=True)
class Scenario:
    """Immutable description of one closed-loop run."""

    model: MechModel
    rm: ReducedModel
    gains: CouplingGains
    initial: AugmentedState
    horizon: float = 20.0
    step: float = 1e-3
    controller: str = "theorem1"
    pump_k: float = 0.5
    # Open-loop input tau(t, state); used only in "open_loop" mode.
    external_torque: Optional[Callable[[float, ConfigurationState], np.ndarray]] = None
    baseline_kp: float = 100.0
    baseline_kd: float = 20.0

    def __post_init__(self):
        if self.step <= 0:
            raise ConfigError(["step must be > 0"])
        if self.horizon < self.step:
            raise ConfigError(["horizon must be >= step"])
        if self.controller not in CONTROLLER_MODES:
            raise ConfigError([f"unknown controller mode {self.controller!r}"])
        if self.pump_k < 0:
            raise ConfigError(["pump_k must be >= 0"])
        if self.initial.n != self.model.n:
            raise ConfigError(
                [f"initial state dimension {self.initial.n} != model dimension {self.model.n}"]
            )


@dataclass
class Trace:
    """Uniform-grid time series of one run; one writer per trace."""

    scenario: Scenario
    t: np.ndarray
    q: np.ndarray
    qdot: np.ndarray
    s: np.ndarray
    sdot: np.ndarray
    sigma: np.ndarray
    sigmadot: np.ndarray
    stilde: np.ndarray
    stildedot: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    H: np.ndarray
    H_r: np.ndarray
    W_sigma: np.ndarray
    E: np.ndarray
    dEdt_num: np.ndarray
    neg_R_std2: np.ndarray
    tau: np.ndarray
    e_c: np.ndarray
    f_pow: np.ndarray
    fr_pow: np.ndarray
    fault: Optional[str] = None

    def __len__(self) -> int:
        return self.t.size


class _FieldEvaluator:
    """Evaluates d/dt of the augmented state plus per-sample diagnostics.

    Shares the inertia factorization and reduced-model evaluations across
    the controller, forward dynamics, pumps and diagnostics; the control law
    itself lives in ``controller._sync_core``.
    """

    def __init__(self, scenario: Scenario):
        self.scn = scenario
        self.n = scenario.model.n
        self.spring = quadratic_spring(scenario.gains.spring_K)
        if scenario.model.constant_inertia:
            M = scenario.model.inertia(scenario.initial.q)
            self._const = (M, _chol_factor(M))
        else:
            self._const = None

    def _inertia_factor(self, q):
        if self._const is not None:
            return self._const
        M = self.scn.model.inertia(q)
        return M, _chol_factor(M)

    def __call__(self, t: float, y: np.ndarray, collect: bool = False):
        scn = self.scn
        n = self.n
        model, rm, gains = scn.model, scn.rm, scn.gains
        q = y[:n]
        qdot = y[n : 2 * n]
        s = y[2 * n]
        sdot = y[2 * n + 1]
        sigma = y[2 * n + 2]

        rv = rm.reduced_eval(s)
        M, L = self._inertia_factor(q)

        f_pow = 0.0
        fr_pow = 0.0
        sync: Optional[SyncOutput] = None
        sig = None
        h_true = None

        if scn.controller in ("theorem1", "theorem1+pump"):
            sig = rm.sigma_eval(sigma)
            sync = _sync_core(
                M, q, qdot, rv, sig.e_r, s, sdot, sigma, gains, self.spring
            )
            tau_total = sync.tau
            e_total = sync.e_c
            e_c = sync.e_c
            sigma_dot = sync.sigma_dot
            if scn.controller == "theorem1+pump":
                h_true = 0.5 * float(qdot @ sync.tau_qdot) + float(model.potential(q))
                f = -scn.pump_k * (h_true + sig.w_r) * qdot
                fr = -scn.pump_k * (0.5 * rv.m_r * (sdot * sdot - 1.0)) * sdot
                tau_total = tau_total + f
                e_total = e_total + fr
                f_pow = float(f @ qdot)
                fr_pow = fr * sdot
        elif scn.controller == "computed_torque":
            qd_r = rv.d1 * sdot
            tau_total = (
                M @ (rv.d2 * sdot * sdot)
                + coriolis_raw(model, q, qdot) @ qd_r
                + model.potential_grad(q)
                - np.asarray(scn.baseline_kp) * (q - rv.q_r)
                - np.asarray(scn.baseline_kd) * (qdot - qd_r)
            )
            e_total = None  # s follows sddot = 0 in baseline mode
            e_c = 0.0
            p = float(qdot @ M @ qdot)
            sigma_dot = np.sqrt(p / rv.m_r) if p > 0.0 else 0.0
        else:  # open_loop
            if scn.external_torque is not None:
                tau_total = np.asarray(
                    scn.external_torque(t, ConfigurationState(q, qdot)), dtype=float
                )
            else:
                tau_total = np.zeros(n)
            e_total = 0.0
            e_c = 0.0
            p = float(qdot @ M @ qdot)
            sigma_dot = np.sqrt(p / rv.m_r) if p > 0.0 else 0.0

        rhs = tau_total - coriolis_force(model, q, qdot) - model.potential_grad(q)
        qddot = scipy.linalg.cho_solve((L, True), rhs, check_finite=False)
        if e_total is None:
            sddot = 0.0
        else:
            sddot = (-0.5 * rv.slope * (sdot * sdot - 1.0) + e_total) / rv.m_r

        ydot = np.empty(2 * n + 3)
        ydot[:n] = qdot
        ydot[n : 2 * n] = qddot
        ydot[2 * n] = sdot
        ydot[2 * n + 1] = sddot
        ydot[2 * n + 2] = sigma_dot

        if not collect:
            return ydot

        if sig is None:
            sig = rm.sigma_eval(sigma)
        if h_true is None:
            h_true = 0.5 * float(qdot @ M @ qdot) + float(model.potential(q))
        h_ref = 0.5 * rv.m_r * (sdot * sdot - 1.0)
        if sync is not None:
            phi = sync.phi
            psi = sync.psi
            s_tilde = sync.s_tilde
            s_tilde_dot = sync.s_tilde_dot
        else:
            phi, _, _ = self.spring(q, rv.q_r)
            s_tilde = s - sigma
            s_tilde_dot = sdot - sigma_dot
            psi = 0.5 * gains.kappa * s_tilde * s_tilde
        diag = {
            "sigmadot": sigma_dot,
            "stilde": s_tilde,
            "stildedot": s_tilde_dot,
            "phi": phi,
            "psi": psi,
            "H": h_true,
            "H_r": h_ref,
            "W_sigma": sig.w_r,
            "E": h_true + sig.w_r + h_ref + phi + psi,
            "neg_R_std2": -gains.damping_R * s_tilde_dot * s_tilde_dot,
            "tau": tau_total,
            "e_c": e_c,
            "f_pow": f_pow,
            "fr_pow": fr_pow,
        }
        return ydot, diag


def rk4_fixed(
    f: Callable[[float, np.ndarray], np.ndarray],
    y0: np.ndarray,
    step: float,
    n_steps: int,
    t0: float = 0.0,
) -> np.ndarray:
    """Classical fixed-step RK4; returns the state after ``n_steps`` steps."""
    y = np.asarray(y0, dtype=float).copy()
    h = step
    t = t0
    for i in range(n_steps):
        k1 = f(t, y)
        k2 = f(t + 0.5 * h, y + (0.5 * h) * k1)
        k3 = f(t + 0.5 * h, y + (0.5 * h) * k2)
        k4 = f(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = t0 + (i + 1) * h
    return y


def _fd_derivative_4th(values: np.ndarray, h: float) -> np.ndarray:
    """4th-order finite-difference derivative on a uniform grid."""
    v = values
    m = v.size
    out = np.empty(m)
    if m < 5:
        out[:] = np.gradient(v, h) if m > 1 else 0.0
        return out
    out[2:-2] = (-v[4:] + 8.0 * v[3:-1] - 8.0 * v[1:-3] + v[:-4]) / (12.0 * h)
    # one-sided 5-point stencils at the edges
    out[0] = (-25 * v[0] + 48 * v[1] - 36 * v[2] + 16 * v[3] - 3 * v[4]) / (12.0 * h)
    out[1] = (-3 * v[0] - 10 * v[1] + 18 * v[2] - 6 * v[3] + v[4]) / (12.0 * h)
    out[-2] = (3 * v[-1] + 10 * v[-2] - 18 * v[-3] + 6 * v[-4] - v[-5]) / (12.0 * h)
    out[-1] = (25 * v[-1] - 48 * v[-2] + 36 * v[-3] - 16 * v[-4] + 3 * v[-5]) / (12.0 * h)
    return out


_DIAG_KEYS = (
    "sigmadot", "stilde", "stildedot", "phi", "psi",
    "H", "H_r", "W_sigma", "E", "neg_R_std2", "e_c", "f_pow", "fr_pow",
)


def integrate(scenario: Scenario) -> Trace:
    """Run one scenario to completion (or to the first numeric fault).

    Fixed-step classical RK4; controller and energy diagnostics are recorded
    at every accepted step and at the final time.  Deterministic: identical
    scenarios produce bit-identical traces.  On a mid-run fault the partial
    trace is returned with ``fault`` set.
    """
    n = scenario.model.n
    h = scenario.step
    n_steps = int(round(scenario.horizon / h))
    m = n_steps + 1

    t_arr = np.arange(m) * h
    q_arr = np.empty((m, n))
    qd_arr = np.empty((m, n))
    svec = np.empty((m, 3))  # s, sdot, sigma
    tau_arr = np.empty((m, n))
    diag_arrs = {k: np.empty(m) for k in _DIAG_KEYS}

    fld = _FieldEvaluator(scenario)
    y = scenario.initial.as_vector()
    fault = None
    recorded = 0

    def _record(i, y, diag):
        q_arr[i] = y[:n]
        qd_arr[i] = y[n : 2 * n]
        svec[i] = y[2 * n : 2 * n + 3]
        tau_arr[i] = diag["tau"]
        for k in _DIAG_KEYS:
            diag_arrs[k][i] = diag[k]

    try:
        for i in range(n_steps):
            t = t_arr[i]
            k1, diag = fld(t, y, collect=True)
            _record(i, y, diag)
            recorded = i + 1
            k2 = fld(t + 0.5 * h, y + (0.5 * h) * k1)
            k3 = fld(t + 0.5 * h, y + (0.5 * h) * k2)
            k4 = fld(t + h, y + h * k3)
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(y)):
                raise NumericFaultError("non-finite value in term: integrated state")
        _, diag = fld(t_arr[-1], y, collect=True)
        _record(n_steps, y, diag)
        recorded = m
    except PathsyncError as exc:
        fault = str(exc)

    sl = slice(0, recorded)
    dEdt = _fd_derivative_4th(diag_arrs["E"][sl], h) if recorded > 1 else np.zeros(recorded)

    return Trace(
        scenario=scenario,
        t=t_arr[sl],
        q=q_arr[sl],
        qdot=qd_arr[sl],
        s=svec[sl, 0],
        sdot=svec[sl, 1],
        sigma=svec[sl, 2],
        sigmadot=diag_arrs["sigmadot"][sl],
        stilde=diag_arrs["stilde"][sl],
        stildedot=diag_arrs["stildedot"][sl],
        phi=diag_arrs["phi"][sl],
        psi=diag_arrs["psi"][sl],
        H=diag_arrs["H"][sl],
        H_r=diag_arrs["H_r"][sl],
        W_sigma=diag_arrs["W_sigma"][sl],
        E=diag_arrs["E"][sl],
        dEdt_num=dEdt,
        neg_R_std2=diag_arrs["neg_R_std2"][sl],
        tau=tau_arr[sl],
        e_c=diag_arrs["e_c"][sl],
        f_pow=diag_arrs["f_pow"][sl],
        fr_pow=diag_arrs["fr_pow"][sl],
        fault=fault,
    )


@dataclass
class PortraitTrajectory:
    seed_id: int
    s0: float
    sdot0: float
    t: np.ndarray
    s: np.ndarray
    sdot: np.ndarray
    fault: Optional[str] = None


def zero_dynamics_portrait(
    rm: ReducedModel,
    seeds: Sequence[tuple[float, float]],
    horizon: float = 10.0,
    step: float = 1e-3,
) -> list[PortraitTrajectory]:
    """Free (e_c = 0) trajectories of the scalar reference system.

    Integrates the reduced dynamics from each (s0, sdot0) seed; per-seed
    faults are recorded and the remaining seeds still run.
    """
    n_steps = int(round(horizon / step))
    t_arr = np.arange(n_steps + 1) * step

    def f(_, y):
        return np.array([y[1], rm.reference_dynamics(y[0], y[1], 0.0)])

    out = []
    for seed_id, (s0, sdot0) in enumerate(seeds):
        s_arr = np.empty(n_steps + 1)
        sd_arr = np.empty(n_steps + 1)
        y = np.array([float(s0), float(sdot0)])
        fault = None
        recorded = 0
        try:
            for i in range(n_steps + 1):
                s_arr[i], sd_arr[i] = y
                recorded = i + 1
                if i == n_steps:
                    break
                y = rk4_fixed(f, y, step, 1, t0=t_arr[i])
                if not np.all(np.isfinite(y)):
                    raise NumericFaultError("non-finite value in term: portrait state")
        except PathsyncError as exc:
            fault = str(exc)
        out.append(
            PortraitTrajectory(
                seed_id=seed_id,
                s0=float(s0),
                sdot0=float(sdot0),
                t=t_arr[:recorded].copy(),
                s=s_arr[:recorded].copy(),
                sdot=sd_arr[:recorded].copy(),
                fault=fault,
            )
        )
    return out


def computed_torque_baseline(
    model: MechModel,
    reference: Callable[[float], tuple[np.ndarray, np.ndarray, np.ndarray]],
    kp,
    kd,
    state: ConfigurationState,
    t: float,
) -> np.ndarray:
    """Classical feedforward-plus-PD tracking torque.

    tau = M(q) qddot_r + C(q, qdot) qdot_r + dU/dq - Kp (q - q_r) - Kd (qdot - qdot_r).
    ``reference`` maps t to (q_r, qdot_r, qddot_r).
    """
    model.check_state(state)
    q_r, qd_r, qdd_r = reference(t)
    M = model.inertia(state.q)
    C = coriolis(model, state)
    grad_u = model.potential_grad(state.q)
    return (
        M @ qdd_r
        + C @ qd_r
        + grad_u
        - np.asarray(kp) * (state.q - q_r)
        - np.asarray(kd) * (state.qdot - qd_r)
    )


def verify_power_balance(trace: Trace) -> dict:
    """Check dE/dt = -R stilde_dot^2 sample by sample on a theorem1 trace."""
    if trace.scenario.controller != "theorem1":
        raise TraceModeError(
            f"power-balance check needs a 'theorem1' trace, got "
            f"{trace.scenario.controller!r}"
        )
    residual = trace.dEdt_num - trace.neg_R_std2
    max_dedt = float(np.max(np.abs(trace.dEdt_num)))
    max_resid = float(np.max(np.abs(residual)))
    threshold = POWER_BALANCE_TOL * (1.0 + max_dedt)
    return {
        "max_residual": max_resid,
        "rms_residual": float(np.sqrt(np.mean(residual**2))),
        "max_dEdt": max_dedt,
        "threshold": threshold,
        "passed": bool(max_resid <= threshold),
    }


def _tail_slice(trace: Trace) -> slice:
    m = len(trace)
    k = int(np.floor(m * (1.0 - TAIL_FRACTION)))
    if m - k < 5:
        raise ConfigError(
            ["horizon too short for convergence metrics (tail window < 5 samples)"]
        )
    return slice(k, m)


def convergence_metrics(trace: Trace, rm: Optional[ReducedModel] = None) -> dict:
    """Tail-window statistics of the tracking run.

    Reports the mean and slope of the path error stilde, the mean magnitudes
    of stilde_dot, phi, sdot - 1 and E over the final fifth of the horizon,
    and the recovered time offset t0 (tail mean and slope of t - s).
    """
    if trace.fault is not None:
        raise ConfigError([f"trace ended in fault: {trace.fault}"])
    rm = rm if rm is not None else trace.scenario.rm
    tail = _tail_slice(trace)
    t = trace.t[tail]
    stilde = trace.stilde[tail]
    t0_series = t - trace.s[tail]
    return {
        "stilde_mean": float(np.mean(stilde)),
        "stilde_slope": float(np.polyfit(t, stilde, 1)[0]),
        "stildedot_mean": float(np.mean(trace.stildedot[tail])),
        "stildedot_mean_abs": float(np.mean(np.abs(trace.stildedot[tail]))),
        "phi_mean": float(np.mean(trace.phi[tail])),
        "sdot_err_mean_abs": float(np.mean(np.abs(trace.sdot[tail] - 1.0))),
        "E_mean_abs": float(np.mean(np.abs(trace.E[tail]))),
        "t0_estimate": float(np.mean(t0_series)),
        "t0_slope": float(np.polyfit(t, t0_series, 1)[0]),
        "tail_start": float(t[0]),
        "tail_end": float(t[-1]),
    }


# -- CSV serialization -------------------------------------------------------

_FMT = "%.17g"


def trace_columns(n: int) -> list[str]:
    cols = ["t"]
    cols += [f"q_{i}" for i in range(1, n + 1)]
    cols += [f"qd_{i}" for i in range(1, n + 1)]
    cols += [
        "s", "sdot", "sigma", "sigmadot", "stilde", "stildedot",
        "phi", "psi", "H", "H_r", "W_sigma", "E", "dEdt_num", "neg_R_std2",
    ]
    cols += [f"tau_{i}" for i in range(1, n + 1)]
    cols += ["e_c", "f_pow", "fr_pow"]
    return cols


def write_trace_csv(trace: Trace, filename) -> None:
    n = trace.scenario.model.n
    data = np.column_stack(
        [
            trace.t, trace.q, trace.qdot, trace.s, trace.sdot, trace.sigma,
            trace.sigmadot, trace.stilde, trace.stildedot, trace.phi, trace.psi,
            trace.H, trace.H_r, trace.W_sigma, trace.E, trace.dEdt_num,
            trace.neg_R_std2, trace.tau, trace.e_c, trace.f_pow, trace.fr_pow,
        ]
    )
    np.savetxt(
        filename,
        data,
        delimiter=",",
        fmt=_FMT,
        header=",".join(trace_columns(n)),
        comments="",
    )


def read_trace_csv(filename) -> tuple[list[str], np.ndarray]:
    """Read a trace CSV back as (column names, data matrix)."""
    with open(filename, newline="") as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(filename, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != len(header):
        raise ConfigError([f"{filename}: column count mismatch"])
    return header, data


def write_portrait_csv(trajectories: Sequence[PortraitTrajectory], filename) -> None:
    with open(filename, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed_id", "t", "s", "sdot"])
        for traj in trajectories:
            for t, s, sd in zip(traj.t, traj.s, traj.sdot):
                writer.writerow(
                    [traj.seed_id, _FMT % t, _FMT % s, _FMT % sd]
                )
