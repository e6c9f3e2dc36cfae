"""Efficiency comparison against the comb-rephasing pair source and the
low-depth inverted-ensemble scheme.

Two ratio paths are kept deliberately separate:

* ``efficiency_ratio`` is the printed low-depth ratio
  R = (F/K) exp(2 pi K^2 / F^2) exp(-ue~^2 T^2 - gamma T), which assumes the
  shared loss terms of the two schemes cancel;
* ``efficiency_ratio_full`` forms the ratio of the full efficiency formulas,
  so the size of the low-depth approximation stays measurable instead of
  hidden. The full path is what the depth-sweep contour grid uses.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np

from .analytic import eta_star_forward, loss_factor
from .errors import InvariantViolation, LowDepthWarning
from .model import Broadening, DecayRates, ProtocolParams, TimingSequence

COMB_K = math.sqrt(math.pi / (4.0 * math.log(2.0)))  # Gaussian-tooth comb constant

LOW_DEPTH_LIMIT = 1.5
DENSE_REGIME_INVERTED_CEILING = 0.70  # reported numerical ceiling, metadata only


@dataclass(frozen=True)
class AfcParams:
    """Comb memory parameters: finesse and the resulting effective depth."""

    finesse: float
    d_ge: float

    def __post_init__(self):
        if not self.finesse >= 1.0:
            raise InvariantViolation(f"finesse must be >= 1, got {self.finesse}")
        if self.d_ge < 0:
            raise InvariantViolation(f"d_ge must be >= 0, got {self.d_ge}")

    @property
    def d_tilde(self) -> float:
        return COMB_K * self.d_ge / self.finesse

    @property
    def comb_dephasing(self) -> float:
        """exp(-2 pi K^2 / F^2), the comb's intrinsic rephasing loss."""
        return math.exp(-2.0 * math.pi * COMB_K**2 / self.finesse**2)


def afc_efficiency(d_ge: float, finesse: float, loss_prime: float = 1.0) -> float:
    """Comb-rephased readout efficiency
    eta = [d~^2 e^-d~ / (1 - e^-d~)] exp(-2 pi K^2/F^2) L' with d~ = K d/F."""
    if not 0.0 <= loss_prime <= 1.0:
        raise InvariantViolation(f"loss_prime must lie in [0, 1], got {loss_prime}")
    afc = AfcParams(finesse=finesse, d_ge=d_ge)
    return eta_star_forward(afc.d_tilde) * afc.comb_dephasing * loss_prime


def afc_loss_prime(
    timing: TimingSequence,
    broadening: Broadening,
    rates: DecayRates,
    t: float | None = None,
) -> float:
    """Temporal decay of the comb scheme,
    L' = exp[-gs~^2 (t_r - t)^2 - gamma T - gamma_gs (t_AS - T)], with the
    emission time t defaulting to the Stokes instant."""
    if t is None:
        t = timing.t_s
    exponent = (
        broadening.gs_tilde**2 * (timing.t_r - t) ** 2
        + rates.gamma_opt * timing.window
        + rates.gamma_gs * (timing.t_as - timing.window)
    )
    return math.exp(-exponent)


def _warn_low_depth(depths) -> None:
    if depths.d_ge >= LOW_DEPTH_LIMIT or depths.d_se >= LOW_DEPTH_LIMIT:
        warnings.warn(
            f"d_ge = {depths.d_ge}, d_se = {depths.d_se}: the printed ratio is a "
            f"leading-order expansion valid for depths < {LOW_DEPTH_LIMIT}",
            LowDepthWarning,
            stacklevel=3,
        )


def efficiency_ratio(finesse: float, window: float, params: ProtocolParams) -> float:
    """Printed low-depth efficiency ratio,
    R = (F/K) exp(2 pi K^2 / F^2) * exp(-ue~^2 T^2 - gamma T)."""
    if not finesse >= 1.0:
        raise InvariantViolation(f"finesse must be >= 1, got {finesse}")
    _warn_low_depth(params.depths)
    b, r = params.broadening, params.rates
    return (
        (finesse / COMB_K)
        * math.exp(2.0 * math.pi * COMB_K**2 / finesse**2)
        * math.exp(-(b.ue_tilde**2) * window**2 - r.gamma_opt * window)
    )


def efficiency_ratio_full(
    finesse: float, d_ge: float, loss: float = 1.0, loss_prime: float = 1.0
) -> float:
    """Ratio of the full efficiency formulas (no expansion), for measuring
    how far the printed leading-order ratio drifts."""
    eta_nd = eta_star_forward(d_ge) * loss
    eta_ad = afc_efficiency(d_ge, finesse, loss_prime)
    if eta_ad == 0.0:
        return math.inf
    return eta_nd / eta_ad


def afc_g2_peak(
    params: ProtocolParams,
    finesse: float,
    timing: TimingSequence,
    loss: float | None = None,
    loss_prime: float | None = None,
) -> float:
    """Comb-scheme correlation peak
    g'0 = [d_se/(p_S tau)] (K/F) exp(-2 pi K^2/F^2) L'.

    When loss_prime is omitted it is derived from this scheme's loss via the
    shared-term cancellation L' = L exp(+ue~^2 T^2 + gamma T), which makes
    g2_peak / afc_g2_peak == efficiency_ratio an exact identity.
    """
    _warn_low_depth(params.depths)
    b, r = params.broadening, params.rates
    if loss is None:
        loss = loss_factor(timing, b, r, r.dd_enabled)
    if loss_prime is None:
        loss_prime = loss * math.exp(
            b.ue_tilde**2 * timing.window**2 + r.gamma_opt * timing.window
        )
    p_s_tau = params.stokes_probability_per_mode()
    return (
        params.depths.d_se
        / p_s_tau
        * (COMB_K / finesse)
        * math.exp(-2.0 * math.pi * COMB_K**2 / finesse**2)
        * loss_prime
    )


@dataclass(frozen=True)
class RaseResult:
    eta: float
    low_depth_valid: bool
    dense_regime_ceiling: float  # external numerical result, reported as metadata
    nlpe_eta_star: float         # loss-free forward efficiency at the same depth


def rase_efficiency(d_ge: float) -> RaseResult:
    """Low-depth inverted-ensemble readout efficiency, eta ~ d_ge.

    Valid for d_ge < 1.5; outside that a LowDepthWarning is emitted and the
    returned value keeps the (invalid) linear form. The dense-regime ceiling
    (~70%) comes from external numerics and is carried as metadata only.
    """
    if d_ge < 0:
        raise InvariantViolation(f"d_ge must be >= 0, got {d_ge}")
    valid = d_ge < LOW_DEPTH_LIMIT
    if not valid:
        warnings.warn(
            f"d_ge = {d_ge} is outside the low-depth validity range", LowDepthWarning,
            stacklevel=2,
        )
    return RaseResult(
        eta=d_ge,
        low_depth_valid=valid,
        dense_regime_ceiling=DENSE_REGIME_INVERTED_CEILING,
        nlpe_eta_star=eta_star_forward(d_ge),
    )


# ---------------------------------------------------------------------------
# Contour grids
# ---------------------------------------------------------------------------

SweepMode = Literal["depth", "modes"]


@dataclass(frozen=True)
class RatioGrid:
    x_axis: np.ndarray  # finesse
    y_axis: np.ndarray  # d_ge (depth sweep) or temporal mode count (mode sweep)
    ratio: np.ndarray   # shape (len(x), len(y))
    mode: SweepMode

    def __post_init__(self):
        if self.ratio.shape != (len(self.x_axis), len(self.y_axis)):
            raise InvariantViolation("ratio grid shape does not match its axes")
        if not np.all(self.ratio > 0):
            raise InvariantViolation("efficiency ratios must be positive")


def rasterize_ratio(
    mode: SweepMode,
    params: ProtocolParams,
    finesse_axis: np.ndarray,
    y_axis: np.ndarray,
) -> RatioGrid:
    """Contour grid of the efficiency ratio.

    depth sweep: full-formula ratio over (F, d_ge) with the temporal decays
    of the two schemes taken equal. mode sweep: printed low-depth ratio over
    (F, modes) at fixed d_ge = 1, with T = modes * tau.
    """
    finesse_axis = np.asarray(finesse_axis, dtype=float)
    y_axis = np.asarray(y_axis, dtype=float)
    ratio = np.empty((len(finesse_axis), len(y_axis)))
    if mode == "depth":
        for i, f in enumerate(finesse_axis):
            for j, d in enumerate(y_axis):
                ratio[i, j] = efficiency_ratio_full(f, d)
    elif mode == "modes":
        fixed = params
        if params.depths.d_ge != 1.0:
            fixed = replace(params, depths=replace(params.depths, d_ge=1.0))
        tau = fixed.tau
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", LowDepthWarning)
            for i, f in enumerate(finesse_axis):
                for j, m in enumerate(y_axis):
                    ratio[i, j] = efficiency_ratio(f, m * tau, fixed)
    else:
        raise ValueError(f"unknown sweep mode {mode!r}")
    return RatioGrid(x_axis=finesse_axis, y_axis=y_axis, ratio=ratio, mode=mode)


def unity_crossing_modes(params: ProtocolParams, finesse: float) -> float:
    """Mode count at which the printed ratio decays to 1 for a given finesse,
    located by bisection on a log-spaced bracket."""
    tau = params.tau
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LowDepthWarning)
        lo, hi = 0.0, 1.0
        while efficiency_ratio(finesse, hi * tau, params) > 1.0 and hi < 1e6:
            lo, hi = hi, hi * 2.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if efficiency_ratio(finesse, mid * tau, params) > 1.0:
                lo = mid
            else:
                hi = mid
    return 0.5 * (lo + hi)
