"""Closed-form engine: rates, loss factors, efficiencies, coincidence and
cross-correlation profiles, and the phase-matching diagnostics.

Conventions: sinc(x) = sin(x)/x with sinc(0) = 1, so the coincidence envelope
sinc^2[pi (t - t_AS)/tau] has nodes at t_AS +- n tau. The loss factor is
evaluated at the peak time and treated as constant across the profile. Zero
and infinite optical depth go through explicit limits, never raw division.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import FrequencyInconsistency, InvariantViolation
from .model import (
    Broadening,
    DecayRates,
    GeometryConfig,
    OpticalDepths,
    ProtocolParams,
    TimingSequence,
)

Direction = Literal["forward", "backward"]


def nsinc(x):
    """sin(x)/x with the removable singularity filled in."""
    return np.sinc(np.asarray(x) / np.pi)


# ---------------------------------------------------------------------------
# Phase evolution and phase matching
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AtomFrequencies:
    """Transition angular frequencies (rad/s) of one atom plus its spatial phase."""

    omega_ge: float
    omega_gs: float
    omega_su: float
    omega_ue: float
    phi0: float = 0.0


@dataclass(frozen=True)
class PhaseResult:
    five_term: float
    telescoped: float

    @property
    def phase(self) -> float:
        return self.telescoped


def phase_evolution(atom: AtomFrequencies, timing: TimingSequence) -> PhaseResult:
    """Accumulated coherence phase at the anti-Stokes instant.

    Both the interval-by-interval sum and its telescoped form
    phi0 - omega_ue T - omega_gs (t_r - t_S) are returned; they agree
    identically whenever the supplied frequencies close the level diagram
    (omega_ge = omega_gs + omega_su + omega_ue), which is checked first.
    """
    closure = atom.omega_ge - (atom.omega_gs + atom.omega_su + atom.omega_ue)
    scale = max(abs(atom.omega_ge), abs(atom.omega_gs), abs(atom.omega_su),
                abs(atom.omega_ue), 1.0)
    if abs(closure) > 1e-6 * scale:
        raise FrequencyInconsistency(
            f"level diagram does not close: residual {closure:.3e} rad/s "
            f"against scale {scale:.3e} rad/s"
        )
    t = timing
    five = (
        atom.phi0
        - atom.omega_ge * t.t_s
        - atom.omega_gs * (t.t_1 - t.t_s)
        + atom.omega_su * t.window
        - atom.omega_gs * (t.t_r - t.t_2)
        - atom.omega_ge * (t.t_as - t.t_r)
    )
    telescoped = atom.phi0 - atom.omega_ue * t.window - atom.omega_gs * (t.t_r - t.t_s)
    return PhaseResult(five_term=five, telescoped=telescoped)


@dataclass(frozen=True)
class PhaseMatchResult:
    residual: float       # |k_w - k_1 + k_2 + k_r - k_S - k_AS|, rad/m
    fle_mismatch: float   # |-k_w + k_S + k_1|: large => four-level-echo emission silenced
    rase_mismatch: float  # |k_2 + k_r - k_AS|: large => amplified-spontaneous echo rejected
    fle_silenced: bool
    rase_rejected: bool


def phase_match_residual(geometry: GeometryConfig) -> PhaseMatchResult:
    """Wave-vector closure residual plus the two noise-rejection diagnostics.

    A mismatch counts as suppressing its process when it exceeds the optical
    wave number |k_w| (phases then wind many times across the crystal).
    """
    k = {name: np.asarray(getattr(geometry, name), dtype=float)
         for name in ("k_w", "k_s", "k_1", "k_2", "k_r", "k_as")}
    residual = float(np.linalg.norm(
        k["k_w"] - k["k_1"] + k["k_2"] + k["k_r"] - k["k_s"] - k["k_as"]
    ))
    fle = float(np.linalg.norm(-k["k_w"] + k["k_s"] + k["k_1"]))
    rase = float(np.linalg.norm(k["k_2"] + k["k_r"] - k["k_as"]))
    k_scale = float(np.linalg.norm(k["k_w"]))
    return PhaseMatchResult(
        residual=residual,
        fle_mismatch=fle,
        rase_mismatch=rase,
        fle_silenced=fle > k_scale,
        rase_rejected=rase > k_scale,
    )


# ---------------------------------------------------------------------------
# Rates and efficiencies
# ---------------------------------------------------------------------------

def depth_factor(d: float) -> float:
    """(1 - e^-d)/d with the d -> 0 limit of 1."""
    if d == 0.0:
        return 1.0
    return -math.expm1(-d) / d


def stokes_rate(theta0: float, depths: OpticalDepths, tau: float) -> float:
    """Stokes emission probability per unit time,
    p_S = (1/tau)(theta0^2/4)(d_se/d_ge)(1 - e^-d_ge).

    Identical for forward and backward detection.
    """
    if theta0 < 0:
        raise InvariantViolation(f"theta0 must be >= 0, got {theta0}")
    if not tau > 0:
        raise InvariantViolation(f"tau must be positive, got {tau}")
    return (theta0**2 / 4.0) * depths.d_se * depth_factor(depths.d_ge) / tau


def loss_factor(
    timing: TimingSequence,
    broadening: Broadening,
    rates: DecayRates,
    dd: bool,
) -> float:
    """Temporal-decay factor accumulated along the rephasing path.

    Without decoupling:
        L = exp[-gs_tilde^2 (t_r - t_S)^2 - ue_tilde^2 T^2 - 2 gamma T
                - gamma_gs (t_AS - 2T)]
    With ideal decoupling the g-s dephasing is refocused down to a single
    window and the suppressed spin rate applies:
        L_DD = exp[-(gs_tilde^2 + ue_tilde^2) T^2 - 2 gamma T
                   - gamma_gs_dd (t_AS - 2T)]
    """
    t = timing
    if dd:
        exponent = (
            broadening.tilde_sq * t.window**2
            + 2.0 * rates.gamma_opt * t.window
            + rates.gamma_gs_dd * t.spin_storage
        )
    else:
        exponent = (
            broadening.gs_tilde**2 * (t.t_r - t.t_s) ** 2
            + broadening.ue_tilde**2 * t.window**2
            + 2.0 * rates.gamma_opt * t.window
            + rates.gamma_gs * t.spin_storage
        )
    return math.exp(-exponent)


@dataclass(frozen=True)
class EfficiencyResult:
    eta: float
    eta_star: float  # loss-free part
    loss: float
    direction: Direction


def eta_star_forward(d_ge: float) -> float:
    """d^2 e^-d / (1 - e^-d); 0 at d = 0 (limit d e^-d -> 0)."""
    if d_ge == 0.0:
        return 0.0
    if d_ge > 700.0:  # e^-d underflows; d^2 e^-d -> 0
        return 0.0
    return d_ge**2 * math.exp(-d_ge) / -math.expm1(-d_ge)


def eta_star_backward(d_ge: float) -> float:
    return -math.expm1(-d_ge)


def readout_efficiency(d_ge: float, loss: float, direction: Direction = "forward") -> EfficiencyResult:
    """Anti-Stokes readout efficiency conditioned on a Stokes detection."""
    if d_ge < 0:
        raise InvariantViolation(f"d_ge must be >= 0, got {d_ge}")
    if not 0.0 < loss <= 1.0:
        raise InvariantViolation(f"loss must lie in (0, 1], got {loss}")
    star = eta_star_forward(d_ge) if direction == "forward" else eta_star_backward(d_ge)
    return EfficiencyResult(eta=star * loss, eta_star=star, loss=loss, direction=direction)


def coincidence_rate(
    t: float,
    t_s: float,
    params: ProtocolParams,
    timing: TimingSequence,
) -> float:
    """Stokes/anti-Stokes coincidence probability density (s^-2) at detection
    time t given a Stokes emission at t_S:

        p_S,AS = (1/tau) p_S * [d_ge^2 e^-d_ge / (1 - e^-d_ge)]
                 * sinc^2[pi (t - t_AS)/tau] * L
    """
    if t_s != timing.t_s:
        timing = TimingSequence(t_s=t_s, window=timing.window, t_1=timing.t_1, t_r=timing.t_r)
    tau = params.tau
    p_s = params.stokes_probability_per_mode() / tau
    loss = loss_factor(timing, params.broadening, params.rates, params.rates.dd_enabled)
    envelope = float(nsinc(math.pi * (t - timing.t_as) / tau)) ** 2
    return p_s * eta_star_forward(params.depths.d_ge) * envelope * loss / tau


@dataclass(frozen=True)
class NoiseResult:
    rate: float         # p_n, s^-1
    bound_ratio: float  # p_n tau / (N_e/N) == eta*, strictly < 1 for d_ge > 0


def intrinsic_noise_rate(theta0: float, d_ge: float, tau: float) -> NoiseResult:
    """Worst-case intrinsic noise from write-excited atoms dumped into the
    emitting level: p_n = (1/tau)(theta0^2/4) d_ge e^-d_ge."""
    if theta0 < 0 or d_ge < 0 or not tau > 0:
        raise InvariantViolation("theta0, d_ge must be >= 0 and tau > 0")
    rate = (theta0**2 / 4.0) * d_ge * math.exp(-d_ge) / tau
    return NoiseResult(rate=rate, bound_ratio=eta_star_forward(d_ge))


# ---------------------------------------------------------------------------
# Cross-correlation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CorrelationTrace:
    times: np.ndarray    # absolute detection times, s
    p_s_as: np.ndarray   # coincidence density, s^-2
    g2: np.ndarray       # normalized cross-correlation
    t_as: float
    peak_g2: float

    def __post_init__(self):
        if len(self.times) != len(self.p_s_as) or len(self.times) != len(self.g2):
            raise InvariantViolation("trace arrays must share one length")
        if np.any(self.p_s_as < 0):
            raise InvariantViolation("coincidence density must be non-negative")


def g2_peak(params: ProtocolParams, timing: TimingSequence) -> float:
    """Peak cross-correlation g2_0 = d_se/(p_S tau) * L.

    Also evaluated as (4/theta0^2) d_ge/(1 - e^-d_ge) * L; the two forms are
    required to agree to 1e-9 relative (they are one identity through the
    Stokes-rate formula).
    """
    loss = loss_factor(timing, params.broadening, params.rates, params.rates.dd_enabled)
    p_s_tau = params.stokes_probability_per_mode()
    form_rate = params.depths.d_se / p_s_tau * loss
    theta0 = params.effective_theta0()
    if theta0 > 0 and params.depths.d_ge > 0:
        form_area = (4.0 / theta0**2) * params.depths.d_ge / (
            -math.expm1(-params.depths.d_ge)
        ) * loss
    elif theta0 > 0:
        form_area = (4.0 / theta0**2) * loss  # d/(1-e^-d) -> 1
    else:
        form_area = form_rate
    if abs(form_area - form_rate) > 1e-9 * abs(form_rate):
        raise InvariantViolation(
            f"g2 peak forms disagree: {form_area!r} vs {form_rate!r}"
        )
    return form_rate


def cross_correlation(
    t_s: float,
    params: ProtocolParams,
    timing: TimingSequence,
    times: np.ndarray | None = None,
) -> CorrelationTrace:
    """Time-resolved coincidence density and g2 around the anti-Stokes peak.

    g2 is normalized against the worst-case intrinsic noise floor, so the
    reported correlation is a lower bound on the true one.
    """
    if t_s != timing.t_s:
        timing = TimingSequence(t_s=t_s, window=timing.window, t_1=timing.t_1, t_r=timing.t_r)
    tau = params.tau
    if times is None:
        times = timing.t_as + np.linspace(-5.0, 5.0, 401) * tau
    times = np.asarray(times, dtype=float)

    loss = loss_factor(timing, params.broadening, params.rates, params.rates.dd_enabled)
    p_s = params.stokes_probability_per_mode() / tau
    envelope = nsinc(np.pi * (times - timing.t_as) / tau) ** 2
    p_s_as = p_s * eta_star_forward(params.depths.d_ge) * envelope * loss / tau
    peak = g2_peak(params, timing)
    g2 = peak * envelope
    return CorrelationTrace(
        times=times, p_s_as=p_s_as, g2=g2, t_as=timing.t_as, peak_g2=float(peak)
    )
