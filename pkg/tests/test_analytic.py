"""Closed-form layer: frozen values, limits, identities, scaling laws.

Derived expected values were computed with independent high-precision
arithmetic (mpmath) or by independent term-by-term evaluation inside the
test, never copied from the implementation.
"""

import math

import mpmath
import numpy as np
import pytest

from echopair.analytic import (
    AtomFrequencies,
    coincidence_rate,
    cross_correlation,
    depth_factor,
    eta_star_backward,
    eta_star_forward,
    g2_peak,
    intrinsic_noise_rate,
    loss_factor,
    nsinc,
    phase_evolution,
    phase_match_residual,
    readout_efficiency,
    stokes_rate,
)
from echopair.errors import FrequencyInconsistency, InvariantViolation
from echopair.model import (
    Broadening,
    DecayRates,
    GeometryConfig,
    OpticalDepths,
    ProtocolParams,
    WritePulse,
    default_geometry,
    derive_timing,
)

TAU = 5e-6
FIG2_BROADENING = Broadening.from_tilde(2 * math.pi / TAU, 5e3, 2e4)
FIG2_RATES = DecayRates(gamma_opt=1e4, gamma_gs=50.0, gamma_gs_dd=2.5)
FIG2_TIMING = derive_timing(0.0, 50e-6, 50e-6, 100e-6)


def make_params(theta0=0.2, d_ge=1.0, d_se=1.0, dd=False, p_s=None):
    return ProtocolParams(
        depths=OpticalDepths(d_ge, d_se),
        broadening=FIG2_BROADENING,
        rates=DecayRates(1e4, 50.0, 2.5, dd_enabled=dd),
        write=WritePulse(theta0),
        p_s_override=p_s,
    )


# ---------------------------------------------------------------------------
# Phase evolution
# ---------------------------------------------------------------------------

def test_phase_optical_terms_cancel():
    # zero spin frequencies: any optical frequency telescopes away
    atom = AtomFrequencies(omega_ge=3.2e15, omega_gs=0.0, omega_su=3.2e15,
                           omega_ue=0.0, phi0=1.2)
    result = phase_evolution(atom, FIG2_TIMING)
    assert result.telescoped == pytest.approx(1.2, abs=1e-9)
    assert result.five_term == pytest.approx(result.telescoped, abs=1e-9 * 3.2e15 * 1e-4)


def test_phase_five_term_equals_telescoped_on_random_draws():
    rng = np.random.default_rng(3)
    for _ in range(100):
        omega_gs = rng.uniform(0, 2 * math.pi * 1e5)
        omega_ue = rng.uniform(0, 2 * math.pi * 1e5)
        omega_su = rng.uniform(0, 2 * math.pi * 1e7)
        omega_ge = omega_gs + omega_su + omega_ue  # closed level diagram
        atom = AtomFrequencies(omega_ge, omega_gs, omega_su, omega_ue,
                               phi0=rng.uniform(-math.pi, math.pi))
        t_s = rng.uniform(0, 40e-6)
        timing = derive_timing(t_s, 50e-6, 60e-6, 150e-6)
        result = phase_evolution(atom, timing)
        assert result.five_term == pytest.approx(result.telescoped, abs=1e-9)


def test_phase_hand_evaluated_example():
    # omega_ue = 2pi*20 kHz, omega_gs = 2pi*5 kHz, T = 50 us, t_r - t_S = 100 us:
    # phase = -(2pi*20e3*5e-5 + 2pi*5e3*1e-4) = -2pi*1.5 = -3pi
    # (rotating-frame magnitudes: raw optical frequencies times 1e-4 s would
    # exceed double precision at the 1e-9 rad level)
    omega_gs = 2 * math.pi * 5e3
    omega_ue = 2 * math.pi * 20e3
    omega_su = 2 * math.pi * 1e6
    atom = AtomFrequencies(omega_gs + omega_su + omega_ue, omega_gs, omega_su, omega_ue)
    result = phase_evolution(atom, FIG2_TIMING)
    assert result.telescoped == pytest.approx(-3 * math.pi, rel=1e-12)
    assert result.five_term == pytest.approx(-3 * math.pi, abs=1e-9)


def test_phase_rejects_inconsistent_frequencies():
    atom = AtomFrequencies(omega_ge=1e15, omega_gs=1e5, omega_su=9e14, omega_ue=1e5)
    with pytest.raises(FrequencyInconsistency):
        phase_evolution(atom, FIG2_TIMING)


# ---------------------------------------------------------------------------
# Stokes rate
# ---------------------------------------------------------------------------

def test_stokes_rate_frozen_value():
    # (0.2^2/4)(1)(1 - e^-1)/tau; mpmath: p_S tau = 6.32120558828558e-3
    p_s = stokes_rate(0.2, OpticalDepths(1.0, 1.0), TAU)
    expected = float(mpmath.mpf("0.01") * (1 - mpmath.e**-1))
    assert p_s * TAU == pytest.approx(expected, rel=1e-12)


def test_stokes_rate_zero_area_and_depth_limit():
    assert stokes_rate(0.0, OpticalDepths(1.0, 1.0), TAU) == 0.0
    # d_ge -> 0: (1 - e^-d)/d -> 1, p_S tau = (theta^2/4) d_se
    p_s = stokes_rate(0.1, OpticalDepths(0.0, 2.0), TAU)
    assert p_s * TAU == pytest.approx(5.0e-3, rel=1e-12)


def test_depth_factor_continuity_at_zero():
    assert depth_factor(0.0) == 1.0
    assert depth_factor(1e-9) == pytest.approx(1.0, rel=1e-8)


# ---------------------------------------------------------------------------
# Loss factor
# ---------------------------------------------------------------------------

def test_loss_factor_is_one_when_nothing_decays():
    b = Broadening.from_tilde(2 * math.pi / TAU, 0.0, 0.0)
    r = DecayRates(0.0, 0.0, 0.0)
    assert loss_factor(FIG2_TIMING, b, r, dd=False) == 1.0
    assert loss_factor(FIG2_TIMING, b, r, dd=True) == 1.0


def test_loss_factor_fig2_term_by_term():
    # independent evaluation: gs~^2 (t_r-t_S)^2 = (5e3*1e-4)^2 = 0.25,
    # ue~^2 T^2 = (2e4*5e-5)^2 = 1.0, 2 gamma T = 1.0,
    # gamma_gs (t_AS - 2T) = 50*5e-5 = 2.5e-3
    exponent = 0.25 + 1.0 + 1.0 + 2.5e-3
    value = loss_factor(FIG2_TIMING, FIG2_BROADENING, FIG2_RATES, dd=False)
    assert value == pytest.approx(math.exp(-exponent), rel=1e-12)
    assert value == pytest.approx(0.1051360556, rel=1e-9)


def test_loss_factor_fig2_dd_term_by_term():
    # (gs~^2 + ue~^2) T^2 = 4.25e8 * 2.5e-9 = 1.0625, 2 gamma T = 1.0,
    # gamma_gs_dd (t_AS - 2T) = 2.5*5e-5 = 1.25e-4
    exponent = 1.0625 + 1.0 + 1.25e-4
    value = loss_factor(FIG2_TIMING, FIG2_BROADENING, FIG2_RATES, dd=True)
    assert value == pytest.approx(math.exp(-exponent), rel=1e-12)
    assert value == pytest.approx(0.1271198420, rel=1e-9)


def test_loss_factor_bounded_by_one():
    rng = np.random.default_rng(11)
    for _ in range(200):
        t_s = rng.uniform(0, 20e-6)
        timing = derive_timing(t_s, rng.uniform(20e-6, 60e-6), 80e-6, 300e-6)
        value = loss_factor(timing, FIG2_BROADENING, FIG2_RATES, dd=bool(rng.integers(2)))
        assert 0.0 < value <= 1.0


# ---------------------------------------------------------------------------
# Readout efficiency
# ---------------------------------------------------------------------------

def test_forward_ceiling_at_frozen_depth():
    # mpmath: 1.6^2 e^-1.6 / (1 - e^-1.6) = 0.647604098615944
    expected = float(
        mpmath.mpf("2.56") * mpmath.e**-1.6 / (1 - mpmath.e**-1.6)
    )
    result = readout_efficiency(1.6, 1.0, "forward")
    assert result.eta == pytest.approx(expected, rel=1e-12)
    assert result.eta == result.eta_star * result.loss


def test_forward_zero_depth_limit():
    assert readout_efficiency(0.0, 1.0, "forward").eta == 0.0


def test_backward_frozen_value_and_saturation():
    result = readout_efficiency(1.6, 1.0, "backward")
    assert result.eta == pytest.approx(1 - math.exp(-1.6), rel=1e-12)
    assert eta_star_backward(1e3) == pytest.approx(1.0, rel=1e-12)


def test_backward_strictly_increasing_and_approaches_loss():
    loss = 0.37
    d = np.linspace(0.01, 30.0, 500)
    etas = [readout_efficiency(float(x), loss, "backward").eta for x in d]
    assert all(b > a for a, b in zip(etas, etas[1:]))
    assert etas[-1] == pytest.approx(loss, rel=1e-10)


def test_forward_peak_position_scan():
    d = np.arange(0.1, 5.0 + 1e-12, 0.001)
    vals = np.array([eta_star_forward(float(x)) for x in d])
    best = int(np.argmax(vals))
    assert d[best] == pytest.approx(1.594, abs=0.002)
    assert vals[best] == pytest.approx(0.6476102, abs=1e-6)


def test_efficiency_input_validation():
    with pytest.raises(InvariantViolation):
        readout_efficiency(-1.0, 1.0)
    with pytest.raises(InvariantViolation):
        readout_efficiency(1.0, 0.0)


# ---------------------------------------------------------------------------
# Coincidence profile
# ---------------------------------------------------------------------------

def test_coincidence_peak_identity_with_efficiency():
    params = make_params()
    peak = coincidence_rate(FIG2_TIMING.t_as, 0.0, params, FIG2_TIMING)
    loss = loss_factor(FIG2_TIMING, params.broadening, params.rates, False)
    eta = readout_efficiency(1.0, loss, "forward").eta
    p_s_tau = params.stokes_probability_per_mode()
    assert TAU**2 * peak == pytest.approx(p_s_tau * eta, rel=1e-12)


def test_coincidence_sinc_nodes():
    params = make_params()
    for n in (1, 2, 3):
        for sign in (+1, -1):
            value = coincidence_rate(
                FIG2_TIMING.t_as + sign * n * TAU, 0.0, params, FIG2_TIMING
            )
            assert abs(value) < 1e-18 * coincidence_rate(
                FIG2_TIMING.t_as, 0.0, params, FIG2_TIMING
            )


def test_coincidence_fig2_frozen_value():
    # p_S tau = 0.05 via override; tau^2 p = 0.05 * (e^-1/(1-e^-1)) * L
    params = make_params(theta0=0.0, p_s=0.01e6)
    peak = coincidence_rate(FIG2_TIMING.t_as, 0.0, params, FIG2_TIMING)
    expected = float(
        mpmath.mpf("0.05")
        * (mpmath.e**-1 / (1 - mpmath.e**-1))
        * mpmath.e ** mpmath.mpf("-2.2525")
    )
    assert TAU**2 * peak == pytest.approx(expected, rel=1e-12)
    assert TAU**2 * peak == pytest.approx(3.059337e-3, rel=1e-6)


def test_coincidence_time_integral_recovers_efficiency():
    # Int sinc^2[pi (t - t_AS)/tau] dt == tau, so the integrated trace over
    # +-50 tau divided by p_S reproduces the readout efficiency within 0.5%.
    params = make_params()
    times = FIG2_TIMING.t_as + np.linspace(-50, 50, 200_001) * TAU
    rates = np.array([
        coincidence_rate(float(t), 0.0, params, FIG2_TIMING) for t in times[::100]
    ])
    coarse_times = times[::100]
    integral = np.trapezoid(rates, coarse_times)
    p_s = params.stokes_probability_per_mode() / TAU
    loss = loss_factor(FIG2_TIMING, params.broadening, params.rates, False)
    eta = readout_efficiency(1.0, loss, "forward").eta
    assert integral / p_s == pytest.approx(eta, rel=5e-3)


# ---------------------------------------------------------------------------
# Intrinsic noise and cross-correlation
# ---------------------------------------------------------------------------

def test_noise_frozen_value():
    result = intrinsic_noise_rate(0.2, 1.0, TAU)
    expected = float(mpmath.mpf("0.01") * mpmath.e**-1)
    assert result.rate * TAU == pytest.approx(expected, rel=1e-12)
    assert intrinsic_noise_rate(0.0, 1.0, TAU).rate == 0.0


def test_noise_bounded_by_excited_fraction():
    rng = np.random.default_rng(5)
    for _ in range(100):
        theta0 = rng.uniform(0.01, 0.4)
        d = rng.uniform(0.01, 5.0)
        result = intrinsic_noise_rate(theta0, d, TAU)
        excited = (theta0**2 / 4) * depth_factor(d)
        assert result.rate * TAU < excited
        assert result.bound_ratio < 1.0


def test_g2_peak_fig2_value_and_forms():
    params = make_params(theta0=0.0, p_s=0.01e6)
    timing = derive_timing(0.0, 1e-12, 1e-12, 2e-12)  # negligible decay: L ~ 1
    peak = g2_peak(params, timing)
    assert peak == pytest.approx(20.0, rel=1e-6)
    loss = loss_factor(timing, params.broadening, params.rates, False)
    assert peak == pytest.approx(20.0 * loss, rel=1e-12)


def test_g2_scaling_inverse_theta_squared():
    timing = FIG2_TIMING
    g_full = g2_peak(make_params(theta0=0.2), timing)
    g_half = g2_peak(make_params(theta0=0.1), timing)
    assert g_half == pytest.approx(4.0 * g_full, rel=1e-12)


def test_g2_vanishes_with_loss():
    b = Broadening.from_tilde(2 * math.pi / TAU, 5e6, 2e7)  # brutal dephasing
    params = ProtocolParams(
        depths=OpticalDepths(1.0, 1.0), broadening=b,
        rates=DecayRates(1e4, 50.0, 2.5), write=WritePulse(0.2),
    )
    assert g2_peak(params, FIG2_TIMING) < 1e-30


def test_signal_to_noise_identity():
    # g2_0 * (p_n tau) == eta for arbitrary draws
    rng = np.random.default_rng(8)
    for _ in range(200):
        params = make_params(theta0=rng.uniform(0.02, 0.45),
                             d_ge=rng.uniform(0.05, 3.0),
                             d_se=rng.uniform(0.05, 3.0))
        t_s = rng.uniform(0, 40e-6)
        timing = derive_timing(t_s, 50e-6, 60e-6, 160e-6)
        peak = g2_peak(params, timing)
        noise = intrinsic_noise_rate(params.write.theta0, params.depths.d_ge, TAU)
        loss = loss_factor(timing, params.broadening, params.rates, False)
        eta = readout_efficiency(params.depths.d_ge, loss, "forward").eta
        assert peak * noise.rate * TAU == pytest.approx(eta, rel=1e-9)


def test_stokes_rate_consistency_identity():
    # d_se/(p_S tau) == 4 d_ge/(theta0^2 (1 - e^-d_ge)) ties the rate formula
    # to the correlation peak; holds to 1e-12 for any positive area
    rng = np.random.default_rng(13)
    for _ in range(300):
        theta0 = rng.uniform(0.01, 0.5)
        d_ge = rng.uniform(0.05, 4.0)
        d_se = rng.uniform(0.05, 4.0)
        p_s_tau = stokes_rate(theta0, OpticalDepths(d_ge, d_se), TAU) * TAU
        lhs = d_se / p_s_tau
        rhs = 4.0 * d_ge / (theta0**2 * (1.0 - math.exp(-d_ge)))
        assert lhs == pytest.approx(rhs, rel=1e-12)


def test_cross_correlation_trace_structure():
    params = make_params()
    trace = cross_correlation(0.0, params, FIG2_TIMING)
    assert trace.peak_g2 == pytest.approx(float(np.max(trace.g2)), rel=1e-12)
    assert np.all(trace.p_s_as >= 0)
    mid = len(trace.times) // 2
    assert trace.times[mid] == pytest.approx(trace.t_as, rel=1e-12)


# ---------------------------------------------------------------------------
# Phase matching
# ---------------------------------------------------------------------------

def test_phase_match_recommended_geometry():
    geom = default_geometry()
    result = phase_match_residual(geom)
    k = np.linalg.norm(geom.k_w)
    assert result.residual <= 1e-6 * k
    assert result.fle_silenced and result.rase_rejected
    assert result.fle_mismatch > k and result.rase_mismatch > k


def test_phase_match_collinear_not_silenced():
    k = 1.08e7
    z = (0.0, 0.0, k)
    geom = GeometryConfig(k_w=z, k_s=z, k_1=z, k_2=z, k_r=z, k_as=z)
    result = phase_match_residual(geom)
    # |-k_w + k_S + k_1| = |k_w| here: the unwanted echo is NOT silenced
    assert result.fle_mismatch == pytest.approx(k, rel=1e-12)
    assert not result.fle_silenced


def test_nsinc_normalization():
    assert float(nsinc(0.0)) == 1.0
    assert float(nsinc(math.pi)) == pytest.approx(0.0, abs=1e-15)
