"""Tests for the energy pumps and the combined-energy ledger."""

import math

import numpy as np
import pytest

import pathsync as ps


def unit_circle_rm():
    return ps.ReducedModel(model=ps.point_mass(), path=ps.circle())


def test_pump_true_inactive_on_reference():
    rm = unit_circle_rm()
    for s in np.linspace(0.0, 6.0, 7):
        st = ps.ConfigurationState(rm.path.value(s), rm.path.d1(s))
        f = ps.pump_true(rm.model, st, rm, s, k=0.5)
        assert np.max(np.abs(f)) < 1e-12


def test_pump_true_sign():
    rm = unit_circle_rm()
    # too much energy: the pump opposes the velocity
    fast = ps.ConfigurationState([1.0, 0.0], [0.0, 2.0])
    f = ps.pump_true(rm.model, fast, rm, 0.0, k=0.5)
    assert f @ fast.qdot < 0.0
    # too little energy: the pump pushes along the velocity
    slow = ps.ConfigurationState([1.0, 0.0], [0.0, 0.5])
    f = ps.pump_true(rm.model, slow, rm, 0.0, k=0.5)
    assert f @ slow.qdot > 0.0


def test_pump_reference_zero_at_unit_speed():
    rm = unit_circle_rm()
    assert ps.pump_reference(rm, 0.7, 1.0, k=0.5) == 0.0
    assert ps.pump_reference(rm, 0.7, -1.0, k=0.5) == 0.0
    # overspeed is braked
    assert ps.pump_reference(rm, 0.7, 1.5, k=0.5) * 1.5 < 0.0


def test_combined_energy_zero_on_reference():
    rm = unit_circle_rm()
    gains = ps.CouplingGains()
    for s in np.linspace(0.0, 6.0, 7):
        st = ps.ConfigurationState(rm.path.value(s), rm.path.d1(s))
        eb = ps.combined_energy(rm.model, st, rm, s, 1.0, s, gains)
        assert abs(eb.E_total) < 1e-12
        assert eb.phi == 0.0
        assert eb.psi == 0.0
        assert abs(eb.neg_R_stilde_dot_sq) < 1e-12
        assert math.isnan(eb.dE_dt_numeric)


def test_combined_energy_terms_add_up():
    rm = unit_circle_rm()
    gains = ps.CouplingGains()
    rng = np.random.default_rng(13)
    for _ in range(25):
        st = ps.ConfigurationState(rng.normal(size=2), rng.normal(size=2))
        s = rng.uniform(0, 6)
        sigma = s + rng.normal() * 0.2
        sdot = rng.normal()
        eb = ps.combined_energy(rm.model, st, rm, s, sdot, sigma, gains)
        total = eb.H_true + eb.W_sigma + eb.H_ref + eb.phi + eb.psi
        assert eb.E_total == pytest.approx(total, rel=1e-14)
        assert eb.neg_R_stilde_dot_sq <= 0.0


def test_combined_energy_shaped_term_no_double_count():
    # H_ref is the factored form M_r (sdot^2 - 1) / 2, so at sdot = 1 the
    # ledger holds exactly H + W_r(sigma) + phi + psi with no extra path term
    rm = unit_circle_rm()
    gains = ps.CouplingGains()
    st = ps.ConfigurationState([1.3, 0.0], [0.0, 1.0])
    eb = ps.combined_energy(rm.model, st, rm, 0.0, 1.0, 0.0, gains)
    assert eb.H_ref == 0.0
    expected = 0.5 + (-0.5) + 0.5 * gains.spring_K * 0.09 + 0.0
    assert eb.E_total == pytest.approx(expected, abs=1e-12)


def test_combined_energy_custom_spring():
    rm = unit_circle_rm()
    gains = ps.CouplingGains()

    def stiff(q, qr):
        e = q - qr
        return 50.0 * float(e @ e), 100.0 * e, -100.0 * e

    st = ps.ConfigurationState([1.1, 0.0], [0.0, 1.0])
    eb = ps.combined_energy(rm.model, st, rm, 0.0, 1.0, 0.0, gains, spring=stiff)
    assert eb.phi == pytest.approx(50.0 * 0.01)
