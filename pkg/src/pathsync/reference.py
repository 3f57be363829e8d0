"""Reference-path reduction.

A reference trajectory q_r(s) is reduced to a one-coordinate mechanical
system: scalar inertia M_r(s), reparametrized potential U_r(s), the shaped
reference potential W_r(s) = -U_r - M_r/2, the scalar input e_r(s) that makes
unit-speed traversal a free solution, and the generalized force tau_r(s)
needed to drive the full system along the path at unit speed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from types import SimpleNamespace
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .dynamics import ConfigurationState, MechModel, inverse_dynamics
from .errors import DegeneratePathError, PathDomainError

_MODES = ("clamp", "linear", "periodic")


@dataclass(frozen=True)
class ReferencePath:
    """Map s -> q_r(s) with first and second derivatives.

    ``mode`` controls evaluation outside [lo, hi]: ``clamp`` raises,
    ``linear`` extrapolates linearly from the nearest endpoint, and
    ``periodic`` wraps (required for closed paths).  The path parameter s
    carries time units: the desired motion is s(t) = t - t0.
    """

    n: int
    domain: tuple[float, float]
    mode: str
    value_fn: Callable[[float], np.ndarray]
    d1_fn: Callable[[float], np.ndarray]
    d2_fn: Callable[[float], np.ndarray]
    backing: str = "analytic"

    def __post_init__(self):
        lo, hi = self.domain
        if not (np.isfinite(lo) and np.isfinite(hi) and hi > lo):
            raise PathDomainError(f"invalid path domain {self.domain}")
        if self.mode not in _MODES:
            raise PathDomainError(f"unknown extension mode {self.mode!r}")

    @property
    def period(self) -> float:
        return self.domain[1] - self.domain[0]

    def _resolve(self, s: float, need_derivative: bool) -> tuple[float, str]:
        """Map s to a base-domain parameter; returns (s_base, region)."""
        lo, hi = self.domain
        if self.mode == "periodic":
            return lo + (s - lo) % (hi - lo), "in"
        if lo <= s <= hi:
            if need_derivative and self.mode == "clamp" and (s == lo or s == hi):
                raise PathDomainError(
                    f"derivative requested at clamped domain boundary s={s}"
                )
            return s, "in"
        if self.mode == "clamp":
            raise PathDomainError(f"s={s} outside clamped domain [{lo}, {hi}]")
        return (lo, "below") if s < lo else (hi, "above")

    def value(self, s: float) -> np.ndarray:
        sb, region = self._resolve(s, need_derivative=False)
        q = np.asarray(self.value_fn(sb), dtype=float)
        if region != "in":
            q = q + self.d1_fn(sb) * (s - sb)
        return q

    def d1(self, s: float) -> np.ndarray:
        sb, _ = self._resolve(s, need_derivative=True)
        return np.asarray(self.d1_fn(sb), dtype=float)

    def d2(self, s: float) -> np.ndarray:
        sb, region = self._resolve(s, need_derivative=True)
        if region != "in":
            return np.zeros(self.n)
        return np.asarray(self.d2_fn(sb), dtype=float)

    def jet(self, s: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Value and both derivatives with a single domain resolution."""
        sb, region = self._resolve(s, need_derivative=True)
        q = np.asarray(self.value_fn(sb), dtype=float)
        d1 = np.asarray(self.d1_fn(sb), dtype=float)
        if region != "in":
            return q + d1 * (s - sb), d1, np.zeros(self.n)
        return q, d1, np.asarray(self.d2_fn(sb), dtype=float)


def circle(
    radius: float = 1.0, omega: float = 1.0, center=(0.0, 0.0)
) -> ReferencePath:
    """Closed circular path q_r(s) = center + r (cos w s, sin w s)."""
    r = float(radius)
    w = float(omega)
    c = np.asarray(center, dtype=float)

    return ReferencePath(
        n=2,
        domain=(0.0, 2.0 * np.pi / w),
        mode="periodic",
        value_fn=lambda s: c + r * np.array([np.cos(w * s), np.sin(w * s)]),
        d1_fn=lambda s: r * w * np.array([-np.sin(w * s), np.cos(w * s)]),
        d2_fn=lambda s: -r * w * w * np.array([np.cos(w * s), np.sin(w * s)]),
    )


def line(velocity, origin=None, domain=(0.0, 20.0)) -> ReferencePath:
    """Constant-velocity straight line q_r(s) = origin + v s."""
    v = np.atleast_1d(np.asarray(velocity, dtype=float))
    o = np.zeros_like(v) if origin is None else np.asarray(origin, dtype=float)
    zero = np.zeros_like(v)

    return ReferencePath(
        n=v.size,
        domain=(float(domain[0]), float(domain[1])),
        mode="linear",
        value_fn=lambda s: o + v * s,
        d1_fn=lambda s: v.copy(),
        d2_fn=lambda s: zero.copy(),
    )


def parabola(domain=(0.5, 3.0), mode: str = "clamp") -> ReferencePath:
    """One-dimensional path q_r(s) = (s^2); non-stationary away from s = 0."""
    return ReferencePath(
        n=1,
        domain=(float(domain[0]), float(domain[1])),
        mode=mode,
        value_fn=lambda s: np.array([s * s]),
        d1_fn=lambda s: np.array([2.0 * s]),
        d2_fn=lambda s: np.array([2.0]),
    )


def from_samples(s_vals, q_vals, mode: str = "clamp") -> ReferencePath:
    """Natural cubic spline through sampled path points.

    ``s_vals`` must be strictly increasing; with ``mode='periodic'`` the first
    and last rows of ``q_vals`` must coincide (closed path).
    """
    s_vals = np.asarray(s_vals, dtype=float)
    q_vals = np.asarray(q_vals, dtype=float)
    if q_vals.ndim == 1:
        q_vals = q_vals[:, None]
    if s_vals.ndim != 1 or s_vals.size != q_vals.shape[0]:
        raise PathDomainError("sample arrays have inconsistent shapes")
    if s_vals.size < 8:
        raise PathDomainError("need at least 8 path samples")
    if not np.all(np.diff(s_vals) > 0):
        raise PathDomainError("path samples must have strictly increasing s")

    if mode == "periodic":
        if not np.allclose(q_vals[0], q_vals[-1], atol=1e-12):
            raise PathDomainError("periodic path samples must close (first == last)")
        spline = CubicSpline(s_vals, q_vals, axis=0, bc_type="periodic")
    else:
        spline = CubicSpline(s_vals, q_vals, axis=0, bc_type="natural")
    d1 = spline.derivative(1)
    d2 = spline.derivative(2)

    return ReferencePath(
        n=q_vals.shape[1],
        domain=(float(s_vals[0]), float(s_vals[-1])),
        mode=mode,
        value_fn=lambda s: spline(s),
        d1_fn=lambda s: d1(s),
        d2_fn=lambda s: d2(s),
        backing="spline",
    )


def from_csv(filename, mode: str = "clamp") -> ReferencePath:
    """Load a sampled path from CSV with header ``s,q_1,...,q_n``."""
    with open(filename, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise PathDomainError(f"{filename}: empty path file")
    header = [h.strip() for h in rows[0]]
    if header[0] != "s" or any(
        h != f"q_{i}" for i, h in enumerate(header[1:], start=1)
    ):
        raise PathDomainError(
            f"{filename}: header must be s,q_1,...,q_n, got {header}"
        )
    data = np.array([[float(x) for x in row] for row in rows[1:] if row])
    return from_samples(data[:, 0], data[:, 1:], mode=mode)


@dataclass(frozen=True)
class ReducedModel:
    """Single-coordinate reduction of ``model`` constrained to ``path``.

    Immutable after construction; the non-stationarity bound M_r(s) > beta
    is validated on a dense sweep of the base domain at construction time.
    """

    model: MechModel
    path: ReferencePath
    beta: float = 1e-6
    sweep_points: int = field(default=10_000, repr=False)

    def __post_init__(self):
        if self.model.n != self.path.n:
            raise DegeneratePathError(
                f"path dimension {self.path.n} != model dimension {self.model.n}"
            )
        if self.beta <= 0:
            raise DegeneratePathError("beta must be positive")
        lo, hi = self.path.domain
        for s in np.linspace(lo, hi, self.sweep_points):
            d1 = self.path.d1_fn(float(s))
            q = self.path.value_fn(float(s))
            mr = float(d1 @ self.model.inertia(q) @ d1)
            if mr <= self.beta:
                raise DegeneratePathError(
                    f"M_r({s:.6g}) = {mr:.3e} <= beta = {self.beta:.3e}; "
                    "path violates the non-stationarity bound"
                )

    # -- reduced quantities ------------------------------------------------

    def reduced_inertia(self, s: float) -> float:
        """M_r(s) = q_r'(s)^T M(q_r(s)) q_r'(s)."""
        d1 = self.path.d1(s)
        q = self.path.value(s)
        mr = float(d1 @ self.model.inertia(q) @ d1)
        if mr <= self.beta:
            raise DegeneratePathError(f"M_r({s}) = {mr:.3e} <= beta")
        return mr

    def reduced_inertia_slope(self, s: float) -> float:
        """dM_r/ds by the chain rule through the model's inertia partials."""
        q = self.path.value(s)
        d1 = self.path.d1(s)
        d2 = self.path.d2(s)
        M = self.model.inertia(q)
        slope = 2.0 * float(d2 @ M @ d1)
        if not self.model.constant_inertia:
            P = self.model.inertia_partials(q)
            slope += float(np.einsum("kij,i,j,k->", P, d1, d1, d1))
        return slope

    def potential_along(self, s: float) -> float:
        """U_r(s) = U(q_r(s))."""
        return float(self.model.potential(self.path.value(s)))

    def reference_potential(self, s: float) -> float:
        """W_r(s) = -U_r(s) - M_r(s)/2."""
        return -self.potential_along(s) - 0.5 * self.reduced_inertia(s)

    def reference_input(self, s: float) -> float:
        """e_r(s) = d/ds (U_r + M_r/2) = -dW_r/ds."""
        q = self.path.value(s)
        d1 = self.path.d1(s)
        du = float(self.model.potential_grad(q) @ d1)
        return du + 0.5 * self.reduced_inertia_slope(s)

    def reference_force(self, s: float) -> np.ndarray:
        """tau_r(s): inverse dynamics at (q_r, q_r', q_r'') (sdot=1, sddot=0)."""
        state = ConfigurationState(self.path.value(s), self.path.d1(s))
        return inverse_dynamics(self.model, state, self.path.d2(s))

    def reference_dynamics(self, s: float, sdot: float, e_c: float) -> float:
        """sddot = (-(dM_r/ds)(sdot^2 - 1)/2 + e_c) / M_r(s)."""
        mr = self.reduced_inertia(s)
        slope = self.reduced_inertia_slope(s)
        return (-0.5 * slope * (sdot * sdot - 1.0) + e_c) / mr

    def reference_hamiltonian(self, s: float, sdot: float) -> float:
        """Shaped scalar energy H_r = M_r(s) (sdot^2 - 1) / 2.

        Algebraically equal to M_r sdot^2 / 2 + U_r + W_r; the factored form
        makes H_r vanish identically at sdot = +/-1.
        """
        return 0.5 * self.reduced_inertia(s) * (sdot * sdot - 1.0)

    def reduced_eval(self, s: float) -> SimpleNamespace:
        """Evaluate all reduced quantities at s in one pass (hot-loop helper)."""
        q, d1, d2 = self.path.jet(s)
        M = self.model.inertia(q)
        mr = float(d1 @ M @ d1)
        if mr <= self.beta:
            raise DegeneratePathError(f"M_r({s}) = {mr:.3e} <= beta")
        slope = 2.0 * float(d2 @ M @ d1)
        grad_u = self.model.potential_grad(q)
        if self.model.constant_inertia:
            cor_d1 = np.zeros(self.model.n)
        else:
            P = self.model.inertia_partials(q)
            # Christoffel force C(q_r, q_r') q_r' in vector form; its inner
            # product with d1 also supplies the cubic part of dM_r/ds
            e1 = np.einsum("kij,k,j->i", P, d1, d1)
            e3 = np.einsum("ijk,j,k->i", P, d1, d1)
            slope += float(e1 @ d1)
            cor_d1 = e1 - 0.5 * e3
        u_r = float(self.model.potential(q))
        w_r = -u_r - 0.5 * mr
        e_r = float(grad_u @ d1) + 0.5 * slope
        tau_r = M @ d2 + cor_d1 + grad_u
        return SimpleNamespace(
            q_r=q, d1=d1, d2=d2, M=M, m_r=mr, slope=slope,
            u_r=u_r, w_r=w_r, e_r=e_r, tau_r=tau_r,
        )

    def sigma_eval(self, sigma: float) -> SimpleNamespace:
        """W_r and e_r at the true system's path parameter, in one pass."""
        q, d1, d2 = self.path.jet(sigma)
        M = self.model.inertia(q)
        mr = float(d1 @ M @ d1)
        slope = 2.0 * float(d2 @ M @ d1)
        if not self.model.constant_inertia:
            P = self.model.inertia_partials(q)
            slope += float(np.einsum("kij,i,j,k->", P, d1, d1, d1))
        u_r = float(self.model.potential(q))
        w_r = -u_r - 0.5 * mr
        e_r = float(self.model.potential_grad(q) @ d1) + 0.5 * slope
        return SimpleNamespace(w_r=w_r, e_r=e_r, m_r=mr)
