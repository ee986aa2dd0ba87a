import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from snsqkd.model import ChannelParams, ConfigError, PhaseMode, ProtocolParams, WindowClass, arm_transmittance
from snsqkd.photonics import (
    acceptance_fraction,
    accepted,
    click_distribution,
    click_probabilities,
    detector_intensities,
    effective_rates,
    joint_outcomes,
)

P = ProtocolParams(mu=0.5, q=0.3)
PD = 1e-11


def test_neither_is_dark_counts_only():
    for delta in (0.0, 1.0, math.pi):
        d = click_distribution(WindowClass.NEITHER, delta, P, ChannelParams(distance_km=50))
        assert d.p_l_only == pytest.approx(PD * (1 - PD), rel=1e-12)
        assert d.p_r_only == pytest.approx(PD * (1 - PD), rel=1e-12)
        assert d.p_none == pytest.approx((1 - PD) ** 2, rel=1e-15)


def test_both_perfect_interference():
    ch = ChannelParams(distance_km=50, e_a=0.0)
    eta = arm_transmittance(ch)
    d = click_distribution(WindowClass.BOTH, 0.0, P, ch)
    # all light goes left: the right detector can only fire from a dark count
    assert d.p_r_only == pytest.approx(PD * (1 - PD) * math.exp(-2 * eta * P.mu), rel=1e-9)
    s_l, s_r = effective_rates(WindowClass.BOTH, P, ch)
    assert s_r == pytest.approx(PD * math.exp(-2 * eta * P.mu), rel=1e-9)


def test_both_no_dark_counts_right_is_zero():
    ch = ChannelParams(distance_km=30, e_a=0.0, p_dark=0.0)
    assert effective_rates(WindowClass.BOTH, P, ch)[1] == 0.0


def test_single_sender_closed_form():
    ch = ChannelParams(distance_km=100, e_a=0.3)
    eta = arm_transmittance(ch)
    intensity = eta * P.mu
    expected = (1 - (1 - PD) * math.exp(-intensity / 2)) * (1 - PD) * math.exp(-intensity / 2)
    for cls in (WindowClass.ZTILDE_A, WindowClass.ZTILDE_B):
        for delta in (0.0, 0.7, 2.0):
            d = click_distribution(cls, delta, P, ch)
            assert d.p_l_only == pytest.approx(expected, rel=1e-12)
            assert d.p_r_only == pytest.approx(expected, rel=1e-12)


@given(st.floats(0, 0.5), st.floats(-10, 10))
def test_single_sender_ignores_phase_and_misalignment(e_a, delta):
    ch = ChannelParams(distance_km=40, e_a=e_a)
    ref = click_distribution(WindowClass.ZTILDE_A, 0.0, P, ChannelParams(distance_km=40))
    d = click_distribution(WindowClass.ZTILDE_A, delta, P, ch)
    assert d.p_l_only == pytest.approx(ref.p_l_only, rel=1e-12)
    assert d.p_r_only == pytest.approx(ref.p_r_only, rel=1e-12)


def test_kernel_matches_intensity_formula():
    """The Gaussian-kernel path reproduces the intensity-mixing formulas."""
    rng = np.random.default_rng(3)
    for _ in range(200):
        mu, delta, e_a, L = rng.uniform(0.01, 2), rng.uniform(-4, 4), rng.uniform(0, 0.5), rng.uniform(0, 300)
        ch = ChannelParams(distance_km=L, e_a=e_a, p_dark=1e-6)
        eta = arm_transmittance(ch)
        i_l, i_r = detector_intensities(eta * mu, eta * mu, delta, e_a)
        # explicit swap-mixing of the ideal intensities
        ideal_l, ideal_r = detector_intensities(eta * mu, eta * mu, delta, 0.0)
        assert i_l == pytest.approx((1 - e_a) * ideal_l + e_a * ideal_r, rel=1e-12, abs=1e-300)
        p_l, p_r = click_probabilities(i_l, i_r, ch.p_dark)
        d = click_distribution(WindowClass.BOTH, delta, ProtocolParams(mu=mu, q=0.5), ch)
        assert d.p_l_only == pytest.approx(p_l * (1 - p_r), rel=1e-10, abs=1e-15)
        assert d.p_r_only == pytest.approx(p_r * (1 - p_l), rel=1e-10, abs=1e-15)
        assert d.p_both == pytest.approx(p_l * p_r, rel=1e-10, abs=1e-15)


@given(
    st.sampled_from(list(WindowClass)),
    st.floats(1e-4, 2.0), st.floats(-7, 7), st.floats(0, 400), st.floats(0, 0.5), st.floats(0, 1e-3),
)
def test_click_distribution_normalized(cls, mu, delta, L, e_a, p_dark):
    d = click_distribution(cls, delta, ProtocolParams(mu=mu, q=0.5), ChannelParams(distance_km=L, e_a=e_a, p_dark=p_dark))
    assert abs(d.total - 1) < 1e-12
    for p in (d.p_l_only, d.p_r_only, d.p_both, d.p_none):
        assert -1e-15 <= p <= 1 + 1e-15


def test_click_distribution_normalized_bulk():
    rng = np.random.default_rng(11)
    n = 100_000
    mu, delta = rng.uniform(1e-4, 2, n), rng.uniform(-7, 7, n)
    for cls in WindowClass:
        for eta_a, eta_b, e_a, pd in ((0.5, 0.5, 0.1, 1e-11), (0.01, 0.9, 0.4, 1e-4), (1.0, 1.0, 0.0, 0.0)):
            total = sum(joint_outcomes(cls, mu, delta, eta_a, eta_b, e_a, pd))
            assert np.max(np.abs(total - 1)) < 1e-12


def test_ztilde_symmetric_in_compensation():
    ch = ChannelParams(distance_km=77, e_a=0.2)
    s_l, s_r = effective_rates((WindowClass.ZTILDE_A, WindowClass.ZTILDE_B), P, ch)
    assert s_l == s_r


def test_s_b_r_golden(golden):
    g = golden["s_b_R"]
    ch = ChannelParams(distance_km=g["distance_km"], e_a=g["e_a"])
    s_r = effective_rates(WindowClass.BOTH, ProtocolParams(mu=g["mu"], q=0.5), ch)[1]
    assert s_r == pytest.approx(g["value"], rel=1e-12)


def _rates_over_distance(cls, params, e_a, nodes=32):
    return np.array([
        effective_rates(cls, params, ChannelParams(distance_km=float(L), e_a=e_a), nodes=nodes)
        for L in np.linspace(0, 400, 41)
    ])


def _non_increasing(x):
    return bool(np.all(np.diff(x, axis=0) <= 1e-12 * np.abs(x[:-1])))


@given(st.floats(1e-3, 5.0), st.floats(0, 0.5), st.floats(-4, 4), st.floats(0, 300), st.floats(0.1, 100))
def test_marginal_click_probability_non_increasing(mu, e_a, delta, L, dL):
    def marg(dist):
        eta = arm_transmittance(ChannelParams(distance_km=dist))
        return click_probabilities(*detector_intensities(eta * mu, eta * mu, delta, e_a), PD)

    near, far = marg(L), marg(L + dL)
    assert far[0] <= near[0] + 1e-15 and far[1] <= near[1] + 1e-15


@pytest.mark.parametrize("cls", [WindowClass.ZTILDE_A, WindowClass.ZTILDE_B, WindowClass.NEITHER, WindowClass.XPLUS])
@pytest.mark.parametrize("mode", list(PhaseMode))
def test_unsaturated_class_rates_non_increasing(cls, mode):
    for mu in (0.1, 0.5, 1.0):
        params = ProtocolParams(mu=mu, q=0.5, lambda_ps=0.1, phase_mode=mode)
        for e_a in (0.0, 0.2, 0.5):
            assert _non_increasing(_rates_over_distance(cls, params, e_a))


@pytest.mark.parametrize("cls", list(WindowClass))
@pytest.mark.parametrize("mode", list(PhaseMode))
def test_total_effective_rate_non_increasing(cls, mode):
    for mu in (0.1, 0.5, 0.8):
        params = ProtocolParams(mu=mu, q=0.5, lambda_ps=0.1, phase_mode=mode)
        for e_a in (0.0, 0.2, 0.5):
            assert _non_increasing(_rates_over_distance(cls, params, e_a).sum(axis=1))


def test_dark_detector_rate_rises_with_distance():
    # The dark-lit detector in a both-send window only counts when the bright
    # one stays silent, so its exclusive rate p_dark exp(-2 eta mu) grows with L.
    s = _rates_over_distance(WindowClass.BOTH, ProtocolParams(mu=0.5, q=0.5), 0.0)
    assert np.all(np.diff(s[:, 1]) > 0)
    assert _non_increasing(s[:, 0])


def test_saturation_breaks_monotonicity_at_high_mu():
    # Documented limit of the monotonicity property: a bright pulse at short
    # range makes both detectors fire, so the single-click rate can rise with L.
    params = ProtocolParams(mu=20.0, q=0.5)
    near = effective_rates(WindowClass.ZTILDE_A, params, ChannelParams(distance_km=0))
    far = effective_rates(WindowClass.ZTILDE_A, params, ChannelParams(distance_km=20))
    assert far[0] > near[0]


def test_postselection_matches_scipy_quad():
    lam = 0.1
    ch = ChannelParams(distance_km=60, e_a=0.1)
    params = ProtocolParams(mu=0.4, q=0.5, lambda_ps=lam, phase_mode="postselection")
    theta = math.acos(1 - lam)

    def rate(delta, det):
        d = click_distribution(WindowClass.BOTH, delta, params, ch)
        left, right = d.p_l_only, d.p_r_only
        if math.cos(delta) < 0:
            left, right = right, left
        return left if det == "L" else right

    for i, det in enumerate("LR"):
        lobe0 = integrate.quad(rate, -theta, theta, args=(det,), epsabs=1e-15, epsrel=1e-12)[0]
        lobe1 = integrate.quad(rate, math.pi - theta, math.pi + theta, args=(det,), epsabs=1e-15, epsrel=1e-12)[0]
        expected = (lobe0 + lobe1) / (4 * theta)
        got = effective_rates(WindowClass.BOTH, params, ch)[i]
        assert got == pytest.approx(expected, rel=1e-10)


def test_postselection_without_relabel_mixes_detectors():
    params = ProtocolParams(mu=0.4, q=0.5, lambda_ps=0.1, phase_mode="postselection")
    ch = ChannelParams(distance_km=60)
    s_l, s_r = effective_rates(WindowClass.BOTH, params, ch, relabel=False)
    assert s_l == pytest.approx(s_r, rel=1e-9)


def test_postselection_rejects_zero_lambda():
    params = ProtocolParams(mu=0.4, q=0.5, lambda_ps=0.0, phase_mode="postselection")
    with pytest.raises(ConfigError):
        effective_rates(WindowClass.BOTH, params, ChannelParams(distance_km=10))


def test_acceptance_fraction():
    assert float(acceptance_fraction(1.0)) == 1.0
    assert float(acceptance_fraction(0.0)) == 0.0
    lam = 0.1
    measure = integrate.quad(lambda d: float(accepted(d, lam)), 0, 2 * math.pi, points=[math.acos(0.9), math.pi - math.acos(0.9), math.pi + math.acos(0.9), 2 * math.pi - math.acos(0.9)], limit=200)[0]
    assert float(acceptance_fraction(lam)) == pytest.approx(measure / (2 * math.pi), rel=1e-9)
