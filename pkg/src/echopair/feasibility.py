"""Nonclassicality constraint sets, their closed-form maxima, and the
rasterized feasibility regions.

The pair is nonclassically correlated when g2_0 > 2. Requiring that for
Stokes photons emitted at any instant in the window pins the worst case at
t_S = 0, which turns g2_0 > 2 into a conic inequality in (t_r, T):

    no decoupling:  gs~^2 t_r^2 + gamma_gs t_r + ue~^2 T^2
                    + (2 gamma - gamma_gs) T      < ln(d_se / (2 p_S tau))
    decoupling:     gamma_gs_dd t_r + (gs~^2 + ue~^2) T^2
                    + (2 gamma - gamma_gs_dd) T   < ln(d_se / (2 p_S tau))

plus the sequencing constraints T > 0 and t_r > 2T. Boundaries use strict
inequalities: g2_0 = 2 is the classical limit itself and is classified
outside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .analytic import g2_peak
from .errors import NonpositiveLogArgument
from .model import ProtocolParams, TimingSequence, with_dd


def log_threshold(params: ProtocolParams) -> float:
    """ln(d_se / (2 p_S tau)), the constraint right-hand side."""
    p_s_tau = params.stokes_probability_per_mode()
    ratio = params.depths.d_se / (2.0 * p_s_tau)
    if ratio <= 1.0:
        raise NonpositiveLogArgument(
            f"d_se = {params.depths.d_se} <= 2 p_S tau = {2.0 * p_s_tau}: "
            "no nonclassical region exists"
        )
    return math.log(ratio)


def constraint_lhs(t_r, window, params: ProtocolParams, dd: bool):
    """Left-hand side of the worst-case (t_S = 0) constraint; array-friendly."""
    b, r = params.broadening, params.rates
    t_r = np.asarray(t_r, dtype=float)
    window = np.asarray(window, dtype=float)
    if dd:
        return (
            r.gamma_gs_dd * t_r
            + b.tilde_sq * window**2
            + (2.0 * r.gamma_opt - r.gamma_gs_dd) * window
        )
    return (
        b.gs_tilde**2 * t_r**2
        + r.gamma_gs * t_r
        + b.ue_tilde**2 * window**2
        + (2.0 * r.gamma_opt - r.gamma_gs) * window
    )


@dataclass(frozen=True)
class MembershipResult:
    inside: bool
    margin: float  # RHS - LHS; positive inside the conic
    diagnostic: str = ""


def nonclassical_membership(
    t_r: float, window: float, params: ProtocolParams, dd: bool
) -> MembershipResult:
    """Whether (t_r, T) yields nonclassical pairs for every Stokes instant."""
    try:
        rhs = log_threshold(params)
    except NonpositiveLogArgument as exc:
        return MembershipResult(inside=False, margin=-math.inf, diagnostic=str(exc))
    margin = rhs - float(constraint_lhs(t_r, window, params, dd))
    inside = margin > 0.0 and window > 0.0 and t_r > 2.0 * window
    return MembershipResult(inside=inside, margin=margin)


@dataclass(frozen=True)
class FeasibilityMaxima:
    t_r_max: float      # s
    modes_max: float    # T_max / tau
    dd: bool


def feasibility_maxima(params: ProtocolParams, dd: bool) -> FeasibilityMaxima:
    """Closed-form (approximate: slow spin-decoherence terms dropped) maxima
    of the lifetime t_r and of the temporal mode count T/tau."""
    rhs = log_threshold(params)  # raises NonpositiveLogArgument when empty
    b, r = params.broadening, params.rates
    tau = params.tau
    gamma = r.gamma_opt
    if dd:
        t_r_max = rhs / r.gamma_gs_dd
        a = b.tilde_sq
    else:
        t_r_max = math.sqrt(rhs) / b.gs_tilde
        a = b.ue_tilde**2 + 4.0 * b.gs_tilde**2
    modes_max = (-gamma + math.sqrt(gamma**2 + a * rhs)) / (a * tau)
    return FeasibilityMaxima(t_r_max=t_r_max, modes_max=modes_max, dd=dd)


# ---------------------------------------------------------------------------
# Rasterization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Inclusive axis ranges; axes are n/m evenly spaced points."""

    t_r_min: float
    t_r_max: float
    n: int
    window_min: float
    window_max: float
    m: int

    def __post_init__(self):
        if self.n < 2 or self.m < 2:
            raise ValueError("grid needs at least 2 points per axis")
        if not (0 <= self.t_r_min < self.t_r_max and 0 <= self.window_min < self.window_max):
            raise ValueError("grid ranges must be positive and increasing")

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            np.linspace(self.t_r_min, self.t_r_max, self.n),
            np.linspace(self.window_min, self.window_max, self.m),
        )


@dataclass(frozen=True)
class RegionGrid:
    t_r_axis: np.ndarray      # s
    window_axis: np.ndarray   # s (report as T/tau via `modes_axis`)
    membership: np.ndarray    # bool, shape (n, m)
    g2_worst: np.ndarray      # worst case over t_S in [0, T]
    dd: bool
    tau: float

    @property
    def modes_axis(self) -> np.ndarray:
        return self.window_axis / self.tau

    def scan_maxima(self) -> FeasibilityMaxima:
        """Largest in-region t_r and T/tau on this grid."""
        if not self.membership.any():
            return FeasibilityMaxima(t_r_max=0.0, modes_max=0.0, dd=self.dd)
        i = np.where(self.membership.any(axis=1))[0].max()
        j = np.where(self.membership.any(axis=0))[0].max()
        return FeasibilityMaxima(
            t_r_max=float(self.t_r_axis[i]),
            modes_max=float(self.window_axis[j] / self.tau),
            dd=self.dd,
        )


def rasterize_region(params: ProtocolParams, dd: bool, grid: GridSpec) -> RegionGrid:
    """Evaluate membership and the worst-case g2 peak over a (t_r, T) grid.

    Deterministic and embarrassingly parallel over cells; the whole grid is
    evaluated as one vectorized expression.
    """
    t_r_axis, window_axis = grid.axes()
    rhs = log_threshold(params)
    tr_grid, w_grid = np.meshgrid(t_r_axis, window_axis, indexing="ij")
    lhs = constraint_lhs(tr_grid, w_grid, params, dd)
    p_s_tau = params.stokes_probability_per_mode()
    g2_worst = (params.depths.d_se / p_s_tau) * np.exp(-lhs)
    membership = (lhs < rhs) & (w_grid > 0.0) & (tr_grid > 2.0 * w_grid)
    return RegionGrid(
        t_r_axis=t_r_axis,
        window_axis=window_axis,
        membership=membership,
        g2_worst=g2_worst,
        dd=dd,
        tau=params.tau,
    )


def g2_worst_over_ts(
    t_r: float, window: float, params: ProtocolParams, dd: bool, n_ts: int = 11
) -> float:
    """Explicit Stokes-instant sweep of the g2 peak; the minimum over t_S
    should coincide with the t_S = 0 closed form used by the rasterizer."""
    params = with_dd(params, dd)
    worst = math.inf
    for t_s in np.linspace(0.0, window, n_ts):
        timing = TimingSequence(t_s=float(t_s), window=window, t_1=window, t_r=t_r)
        worst = min(worst, g2_peak(params, timing))
    return worst


def boundary_points(
    params: ProtocolParams,
    dd: bool,
    windows: np.ndarray,
    t_r_hi: float,
    iterations: int = 80,
) -> np.ndarray:
    """Bisection-refined conic boundary: for each window T, the t_r at which
    membership flips from inside to outside. Returns rows of (T, t_r).

    Each starting T must admit an interior point just above t_r = 2T and an
    exterior point at t_r_hi; rows where no interior point exists are
    dropped.
    """
    rhs = log_threshold(params)
    points = []
    for window in np.atleast_1d(np.asarray(windows, dtype=float)):
        lo = 2.0 * window * (1.0 + 1e-12)
        if not (
            float(constraint_lhs(lo, window, params, dd)) < rhs
            and float(constraint_lhs(t_r_hi, window, params, dd)) >= rhs
        ):
            continue
        hi = t_r_hi
        for _ in range(iterations):
            mid = 0.5 * (lo + hi)
            if float(constraint_lhs(mid, window, params, dd)) < rhs:
                lo = mid
            else:
                hi = mid
        points.append((window, 0.5 * (lo + hi)))
    return np.asarray(points, dtype=float)


def average_pair_delay(timing: TimingSequence, n: int = 2001) -> float:
    """Quadrature check of the lifetime identity
    (1/T) Int_0^T (t_AS - t_S) dt_S = t_r."""
    t_s = np.linspace(0.0, timing.window, n)
    delays = (timing.t_r + timing.window - t_s) - t_s
    return float(np.trapezoid(delays, t_s) / timing.window)
