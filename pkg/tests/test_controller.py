"""Tests for the spring/damper interconnection controller."""

import numpy as np
import pytest

import pathsync as ps
from pathsync.controller import VELOCITY_CUTOFF, mu_gain


def unit_circle_rm():
    return ps.ReducedModel(model=ps.point_mass(), path=ps.circle())


def arm_rm():
    return ps.ReducedModel(
        model=ps.two_link_arm(),
        path=ps.circle(radius=0.4, omega=1.0, center=(0.3, 0.8)),
    )


def test_gains_must_be_positive():
    ps.CouplingGains(1.0, 1.0, 1.0)
    for bad in (
        dict(spring_K=0.0),
        dict(kappa=-1.0),
        dict(damping_R=0.0),
    ):
        with pytest.raises(ValueError):
            ps.CouplingGains(**bad)


def test_speed_ratio_nonnegative_and_zero_at_rest():
    rm = arm_rm()
    model = rm.model
    rng = np.random.default_rng(23)
    for _ in range(50):
        st = ps.ConfigurationState(
            rng.uniform(-np.pi, np.pi, size=2), rng.normal(size=2)
        )
        assert ps.speed_ratio(model, st, rm, rng.uniform(0, 6)) >= 0.0
    rest = ps.ConfigurationState([0.4, 0.2], [0.0, 0.0])
    assert ps.speed_ratio(model, rest, rm, 1.0) == 0.0


def test_dual_torque_zero_at_rest():
    arm = ps.two_link_arm()
    st = ps.ConfigurationState([1.0, -0.5], [0.0, 0.0])
    assert np.all(ps.dual_torque(arm, st) == 0.0)


def test_constraint_force_is_workless():
    rm = arm_rm()
    model = rm.model
    rng = np.random.default_rng(31)
    for _ in range(200):
        st = ps.ConfigurationState(
            rng.uniform(-np.pi, np.pi, size=2), rng.normal(size=2)
        )
        s = rng.uniform(0, 2 * np.pi)
        tau_r = rm.reference_force(s)
        f = ps.constraint_force(model, st, rm, s, tau_r)
        assert abs(f @ st.qdot) < 1e-10 * (1 + np.linalg.norm(f))


def test_quadratic_spring_gradients():
    spring = ps.quadratic_spring(7.0)
    rng = np.random.default_rng(41)
    h = 1e-6
    for _ in range(20):
        q = rng.normal(size=3)
        qr = rng.normal(size=3)
        phi, dq, dqr = spring(q, qr)
        assert phi == pytest.approx(3.5 * np.sum((q - qr) ** 2))
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            fd_q = (spring(q + e, qr)[0] - spring(q - e, qr)[0]) / (2 * h)
            fd_qr = (spring(q, qr + e)[0] - spring(q, qr - e)[0]) / (2 * h)
            assert dq[k] == pytest.approx(fd_q, abs=1e-6)
            assert dqr[k] == pytest.approx(fd_qr, abs=1e-6)


def test_on_reference_torque_equals_reference_force():
    # with q on the path at matched speed and sigma = s the spring and the
    # scalar coupling vanish and tau reduces to the pure path-following force
    rm = unit_circle_rm()
    model = rm.model
    for s in np.linspace(0.0, 6.0, 9):
        st = ps.ConfigurationState(rm.path.value(s), rm.path.d1(s))
        out = ps.control_signals(model, st, rm, s, 1.0, s, ps.CouplingGains())
        assert np.max(np.abs(out.tau - rm.reference_force(s))) < 1e-12
        assert abs(out.e_c) < 1e-12
        assert out.phi == 0.0
        assert out.psi == 0.0
        assert out.s_tilde == 0.0
        assert abs(out.s_tilde_dot) < 1e-12


def test_bookkeeping_fields():
    rm = unit_circle_rm()
    model = rm.model
    st = ps.ConfigurationState([1.1, 0.1], [0.0, 0.9])
    out = ps.control_signals(model, st, rm, 0.4, 1.0, 0.1, ps.CouplingGains())
    assert out.s_tilde == pytest.approx(0.3)
    assert out.sigma_dot == pytest.approx(np.sqrt(0.81 + 0.0), abs=1e-12)
    assert out.s_tilde_dot == pytest.approx(1.0 - out.sigma_dot)
    assert out.psi == pytest.approx(0.5 * 5.0 * 0.09)
    assert np.allclose(out.tau_qdot, [0.0, 0.9])


def test_mu_gain_consistency():
    rm = arm_rm()
    model = rm.model
    gains = ps.CouplingGains()
    st = ps.ConfigurationState([0.5, 0.9], [0.3, -0.2])
    s, sdot, sigma = 1.2, 0.8, 1.0
    out = ps.control_signals(model, st, rm, s, sdot, sigma, gains)
    mu = mu_gain(rm, s, out.s_tilde, out.s_tilde_dot, sigma, gains)
    assert out.mu == pytest.approx(mu, rel=1e-12)


def test_steering_cut_off_at_rest():
    # below the kinetic cutoff the steering term is defined as zero, so the
    # applied torque is the workless force plus the spring pull only
    rm = unit_circle_rm()
    model = rm.model
    st = ps.ConfigurationState([1.2, 0.0], [0.0, 0.0])
    gains = ps.CouplingGains()
    out = ps.control_signals(model, st, rm, 0.0, 1.0, 0.0, gains)
    assert out.sigma_dot == 0.0
    expected = -gains.spring_K * (st.q - rm.path.value(0.0))
    assert np.max(np.abs(out.tau - expected)) < 1e-12
    # epsilon above the cutoff the steering is direction-normalized, so the
    # output jumps by |mu| but must stay finite and bounded
    eps = np.sqrt(VELOCITY_CUTOFF) * 2
    st2 = ps.ConfigurationState([1.2, 0.0], [0.0, eps])
    out2 = ps.control_signals(model, st2, rm, 0.0, 1.0, 0.0, gains)
    assert np.all(np.isfinite(out2.tau))
    assert np.max(np.abs(out2.tau - expected)) < abs(out2.mu) + 1e-6


def test_applied_power_chain():
    # <tau, qdot> = -sigmadot (dW_r/dsigma - kappa stilde - R stildedot)
    #               - <dphi/dq, qdot> away from rest; this is the scalar
    # bookkeeping that makes the closed-loop energy rate equal -R stildedot^2
    rm = arm_rm()
    model = rm.model
    gains = ps.CouplingGains()
    rng = np.random.default_rng(53)
    for _ in range(100):
        st = ps.ConfigurationState(
            rng.uniform(-np.pi, np.pi, size=2), rng.normal(size=2) + 0.3
        )
        s = rng.uniform(0, 2 * np.pi)
        sdot = rng.normal()
        sigma = s + 0.2 * rng.normal()
        out = ps.control_signals(model, st, rm, s, sdot, sigma, gains)
        dw_dsigma = -rm.reference_input(sigma)
        spring_pow = gains.spring_K * float((st.q - rm.path.value(s)) @ st.qdot)
        expected = (
            -out.sigma_dot
            * (dw_dsigma - gains.kappa * out.s_tilde - gains.damping_R * out.s_tilde_dot)
            - spring_pow
        )
        got = float(out.tau @ st.qdot)
        assert abs(got - expected) <= 1e-10 * (1 + abs(got))


def test_custom_spring_is_honored():
    rm = unit_circle_rm()
    model = rm.model

    def quartic(q, qr):
        e = q - qr
        r2 = float(e @ e)
        return 0.25 * r2 * r2, r2 * e, -r2 * e

    st = ps.ConfigurationState([1.3, 0.2], [0.0, 1.0])
    out = ps.control_signals(
        model, st, rm, 0.0, 1.0, 0.0, ps.CouplingGains(), spring=quartic
    )
    e = st.q - rm.path.value(0.0)
    assert out.phi == pytest.approx(0.25 * float(e @ e) ** 2)
