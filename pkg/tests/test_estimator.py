import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from snsqkd.estimator import (
    MU_RANGE,
    Q_RANGE,
    analytic_report,
    analytic_yields,
    chi_plus_coefficients,
    coarse_grid,
    entropy,
    estimate_bounds,
    key_rate,
    optimize,
    phase_entropy,
    phase_flip_upper,
    rate_surface,
    s_xplus_bounds,
    yield_bounds_generic,
)
from snsqkd.model import ZTILDE, ChannelParams, PhaseMode, ProtocolParams, UndefinedRateError, YieldSet, window_class_prior
from snsqkd.oracle import brute_force_eph

unit = st.floats(0, 1)
mus = st.floats(1e-6, 5)


def test_entropy_examples():
    assert entropy(0.5) == 1.0
    assert entropy(0.0) == 0.0 and entropy(1.0) == 0.0
    x = mp.mpf("0.2")
    ref = float(-x * mp.log(x, 2) - (1 - x) * mp.log(1 - x, 2))
    assert entropy(0.2) == pytest.approx(ref, rel=1e-15)
    assert entropy(0.2) == pytest.approx(0.721928, abs=1e-6)


@pytest.mark.parametrize("bad", [-0.1, 1.1, math.nan])
def test_entropy_domain(bad):
    with pytest.raises(ValueError):
        entropy(bad)


@given(unit)
def test_entropy_symmetric_and_bounded(x):
    h = entropy(x)
    assert 0 <= h <= 1
    assert h == pytest.approx(entropy(1 - x), abs=1e-12)


def test_entropy_maximum_on_grid():
    x = np.linspace(0, 1, 100_001)
    h = entropy(x)
    assert np.argmax(h) == 50_000 and h.max() == 1.0


def test_phase_entropy_caps_at_half():
    assert phase_entropy(0.7) == 1.0
    assert phase_entropy(1.0) == 1.0
    assert phase_entropy(0.2) == entropy(0.2)


def test_chi_coefficients():
    c = chi_plus_coefficients(1e-9)
    assert c.c2 < 1e-9 and c.n_minus_sq < 1e-8
    for mu in (0.1, 0.5, 1.0, 3.0):
        c = chi_plus_coefficients(mu)
        assert c.n_plus_sq == pytest.approx(2 * (1 + math.exp(-mu)))
        assert c.n_minus_sq == pytest.approx(2 * (1 - math.exp(-mu)))
        assert c.n_plus_sq / 4 + c.n_minus_sq / 4 == 1.0
    with pytest.raises(ValueError):
        chi_plus_coefficients(0.0)


def test_generic_bounds_examples():
    lo, up = yield_bounds_generic(0.3, 0.6, 0.5, 0.0, 0.0)
    assert (lo, up) == (0.0, pytest.approx(0.25))
    s = 0.1
    lo, up = yield_bounds_generic(0.3, 0.6, 0.0, s, s)
    assert up == pytest.approx((0.3 + 0.6) ** 2 * s)
    assert lo == pytest.approx((0.3 - 0.6) ** 2 * s)
    lo, up = yield_bounds_generic(0.3, 0.6, 0.0, 0.4, 0.01)
    assert lo == pytest.approx((0.3 * math.sqrt(0.4) - 0.6 * 0.1) ** 2)
    assert up == pytest.approx((0.3 * math.sqrt(0.4) + 0.6 * 0.1) ** 2)
    # with a c2 term the unclamped lower bound can go negative and clamps to 0
    lo, up = yield_bounds_generic(0.1, 0.6, 0.2, 0.4, 0.01, clamp=False)
    assert lo < 0
    assert yield_bounds_generic(0.1, 0.6, 0.2, 0.4, 0.01)[0] == 0.0


def test_bound_sandwich_bulk():
    rng = np.random.default_rng(0)
    n = 100_000
    c = rng.normal(size=(3, n)) * rng.choice([1e-3, 1, 10], size=(3, n))
    s0, s1 = rng.uniform(size=n) ** 4, rng.uniform(size=n) ** 4
    lo, up = yield_bounds_generic(c[0], c[1], c[2], s0, s1)
    assert np.all(lo <= up)
    lo, up = yield_bounds_generic(c[0], c[1], c[2], s0, s1, clamp=False)
    assert np.all(lo <= up)
    mu = rng.uniform(1e-4, 3, n)
    lo, up = s_xplus_bounds(s0, s1, mu)
    assert np.all((0 <= lo) & (lo <= up) & (up <= 1))


@given(unit, unit, mus)
def test_specialization_equality(s_o, s_b, mu):
    c = chi_plus_coefficients(mu)
    a = s_xplus_bounds(s_o, s_b, mu, clamp=False)
    b = yield_bounds_generic(c.c0, c.c1, c.c2, s_o, s_b, clamp=False)
    scale = max(1.0, abs(b[1]))
    assert abs(a[0] - b[0]) <= 1e-12 * scale
    assert abs(a[1] - b[1]) <= 1e-12 * scale


def test_s_xplus_zero_yields():
    for mu in (0.1, 0.5, 1.0):
        e = math.exp(-mu)
        lo, up = s_xplus_bounds(0.0, 0.0, mu)
        assert lo == 0.0
        assert up == pytest.approx((1 - e) ** 2 / (2 * e * (1 + e)), rel=1e-13)


def test_s_xplus_golden(golden):
    for g in golden["s_xplus_bounds"]:
        lo, up = s_xplus_bounds(g["s_o"], g["s_b"], g["mu"], clamp=False)
        assert lo == pytest.approx(g["lower"], rel=1e-12)
        assert up == pytest.approx(g["upper"], rel=1e-12)


def test_s_xplus_domain():
    with pytest.raises(ValueError):
        s_xplus_bounds(-0.1, 0.1, 0.5)
    with pytest.raises(ValueError):
        s_xplus_bounds(0.1, 0.1, 0.0)


def test_phase_flip_examples():
    assert phase_flip_upper(0.0, 0.2, 0.1, 0.1, 0.5) == 0.0
    assert phase_flip_upper(0.1, 0.1, 0.3, 0.3, 0.5) == 0.5
    with pytest.raises(UndefinedRateError):
        phase_flip_upper(0.0, 0.0, 0.1, 0.0, 0.5)
    a = phase_flip_upper(0.01, 0.01, 0.02, 0.0, 0.5, clamp=False)
    b = phase_flip_upper(0.01, 0.01, 0.02, 0.0, 0.5, prefactor="outline", clamp=False)
    assert a == pytest.approx(((1 + math.exp(-0.5)) * 0.02 + 0.02) / 0.04)
    assert b == pytest.approx(((1 + math.exp(-1.0)) * 0.02 + 0.02) / 0.04)
    with pytest.raises(ValueError):
        phase_flip_upper(0.1, 0.1, 0.1, 0.1, 0.5, prefactor="other")


def test_estimate_bounds_counts_clamps():
    ys = YieldSet(0.01, 0.01, 0.02, 1e-11, 1e-11, 1e-11)
    b = estimate_bounds(ys, 0.5)
    assert b.s_xplus_lower_L == 0.0
    assert b.clamp_events >= 1
    assert 0 <= b.e_ph_upper <= 1


PARAMS = ProtocolParams(mu=0.5, q=0.3)
YS = YieldSet(0.02, 0.02, 0.05, 0.01, 1e-11, 1e-11)


def test_key_rate_examples():
    r = key_rate(YS, 0.1, 0.5, PARAMS)
    assert r.rate_per_window == 0.0 and r.no_key
    r = key_rate(YS, 0.0, 0.0, PARAMS)
    assert r.rate_per_window == pytest.approx(window_class_prior(PARAMS, ZTILDE) * YS.s_ztilde)
    assert not r.no_key
    assert r.n_f == pytest.approx(r.rate_per_window * PARAMS.n_windows)
    half = key_rate(YS, 0.0, 0.0, PARAMS, acceptance=0.5)
    assert half.rate_per_window == pytest.approx(r.rate_per_window / 2)
    sub = key_rate(YS, 0.0, 0.0, PARAMS, subtract_test_windows=True)
    assert sub.rate_per_window == pytest.approx(r.rate_per_window * 0.9)


@given(unit, unit, st.floats(1e-3, 0.999), st.floats(0, 1e-2), st.floats(0, 1e-2))
def test_key_rate_below_sifted(e_z, e_ph, q, s_z, s_b):
    params = ProtocolParams(mu=0.5, q=q)
    ys = YieldSet(s_z, s_z, s_b, s_b / 3, 1e-11, 1e-11)
    r = key_rate(ys, e_z, e_ph, params)
    assert 0 <= r.rate_per_window <= window_class_prior(params, ZTILDE) * ys.s_ztilde * (1 + 1e-12)
    assert r.no_key == (r.rate_per_window == 0)


def test_analytic_bound_is_sound_against_oracle(golden):
    g = golden["e_ph_true"]
    params = ProtocolParams(mu=g["mu"], q=0.5)
    ch = ChannelParams(distance_km=g["distance_km"], e_a=g["e_a"])
    bounds, _ = analytic_report(params, ch)
    assert bounds.e_ph_upper >= g["value"]
    assert brute_force_eph(params, ch) == pytest.approx(g["value"], abs=1e-12)


def test_optimize_positive_at_zero_distance():
    res = optimize(ChannelParams(distance_km=0, eta_det=1.0, p_dark=0.0))
    assert res.report.rate_per_window > 0 and not res.report.no_key


def test_optimize_headline():
    res = optimize(ChannelParams(distance_km=200, e_a=0.2))
    assert res.report.rate_per_window > 0
    assert Q_RANGE[0] <= res.q <= Q_RANGE[1] and MU_RANGE[0] <= res.mu <= MU_RANGE[1]


def test_optimize_beats_every_grid_point():
    ch = ChannelParams(distance_km=120, e_a=0.1)
    res = optimize(ch)
    q, mu, lam = coarse_grid(PhaseMode.COMPENSATION)
    surf = rate_surface(ch, 1.1, PhaseMode.COMPENSATION, q, mu, lam, nodes=256)
    assert res.report.rate_per_window >= surf.max() * (1 - 1e-9)


def test_optimize_agrees_with_report():
    ch = ChannelParams(distance_km=80, e_a=0.05)
    res = optimize(ch)
    params = ProtocolParams(mu=res.mu, q=res.q, f=1.1)
    _, rep = analytic_report(params, ch)
    assert rep.rate_per_window == pytest.approx(res.report.rate_per_window, rel=1e-12)


def test_optimize_deterministic_and_no_key():
    ch = ChannelParams(distance_km=150, e_a=0.3)
    a, b = optimize(ch), optimize(ch)
    assert a == b
    dead = optimize(ChannelParams(distance_km=400, e_a=0.2))
    assert dead.report.no_key and dead.report.rate_per_window == 0.0


def test_optimized_rate_monotone():
    rates = {}
    for e_a in (0.0, 0.1, 0.2):
        rates[e_a] = [optimize(ChannelParams(distance_km=L, e_a=e_a)).report.rate_per_window for L in range(0, 301, 25)]
        r = np.array(rates[e_a])
        assert np.all(np.diff(r) <= 0)
    assert np.all(np.array(rates[0.0]) >= np.array(rates[0.1]))
    assert np.all(np.array(rates[0.1]) >= np.array(rates[0.2]))


def test_postselection_optimize():
    res = optimize(ChannelParams(distance_km=100, e_a=0.05), phase_mode=PhaseMode.POSTSELECTION, points=21, refinements=2)
    assert res.lambda_ps is not None
    assert res.report.rate_per_window > 0
    comp = optimize(ChannelParams(distance_km=100, e_a=0.05))
    assert res.report.rate_per_window < comp.report.rate_per_window


def test_rate_surface_matches_report():
    ch = ChannelParams(distance_km=60, e_a=0.1)
    surf = rate_surface(ch, 1.1, PhaseMode.COMPENSATION, [0.05], [0.01])
    _, rep = analytic_report(ProtocolParams(mu=0.01, q=0.05), ch)
    assert surf[0, 0, 0] == pytest.approx(rep.rate_per_window, rel=1e-10)


def test_analytic_yields_ztilde_symmetric():
    ys = analytic_yields(PARAMS, ChannelParams(distance_km=30, e_a=0.1))
    assert ys.s_ztilde_L == ys.s_ztilde_R
