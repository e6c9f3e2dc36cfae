"""Physical parameter and timing types plus configuration ingestion.

Everything downstream works in strict SI: seconds, rad/s for the optical
inhomogeneous width, plain s^-1 for rates and for the tilded spin-dephasing
parameters that appear inside dimensionless exponents. Config documents may
use us/ms/kHz/MHz suffixes; they are converted here, once, so no other module
ever multiplies by 2*pi or 1e-6 again.

A note on the tilded spin widths: the dephasing parameter of a Gaussian
spin line equals the standard deviation of its angular-frequency density,
i.e. tilde = FWHM_rad / sqrt(8 ln 2) (equivalently pi * FWHM_Hz / sqrt(2 ln 2)).
Stored FWHMs here are angular (rad/s), so the first form is used; the
discrete-atom oracle samples Gaussians whose |characteristic function|^2 is
then exactly exp(-tilde^2 t^2).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .errors import (
    InvariantViolation,
    MissingKey,
    NegativeValue,
    OrderingViolation,
    PulseAreaWarning,
    UnitUnknown,
)

SQRT_8LN2 = math.sqrt(8.0 * math.log(2.0))

# ---------------------------------------------------------------------------
# Unit handling
# ---------------------------------------------------------------------------

# Numeric factor applied to the stated number; grouped by dimension so that a
# time key given in kHz (or a rate in us) is rejected instead of silently
# misread. Frequency-like values map to plain 1e3 s^-1 per kHz: the caption
# values 5 kHz, 20 kHz, 10 kHz enter dimensionless exponents directly as
# 5e3, 2e4, 1e4 s^-1.
_TIME_UNITS = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "ns": 1e-9}
_RATE_UNITS = {
    "Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9,
    "/s": 1.0, "1/s": 1.0, "/ms": 1e3, "/us": 1e6, "/µs": 1e6,
    "rad/s": 1.0,
}
_ANGLE_UNITS = {"rad": 1.0, "mrad": 1e-3}
_BARE_UNITS = {"": 1.0}

_UNIT_TABLES = {
    "time": _TIME_UNITS,
    "rate": _RATE_UNITS,
    "angle": {**_ANGLE_UNITS, **_BARE_UNITS},
    "bare": _BARE_UNITS,
    "length": {"m": 1.0, "mm": 1e-3, "cm": 1e-2, "": 1.0},
}


def parse_quantity(name: str, raw: str | float | int, dimension: str) -> float:
    """Convert a ``"number unit"`` string (or bare number) to SI."""
    if isinstance(raw, (int, float)):
        return float(raw)
    text = str(raw).strip()
    parts = text.split(None, 1)
    try:
        value = float(parts[0])
    except (ValueError, IndexError):
        raise UnitUnknown(name, text)
    unit = parts[1].strip() if len(parts) > 1 else ""
    table = _UNIT_TABLES[dimension]
    if unit not in table:
        raise UnitUnknown(name, unit)
    return value * table[unit]


def parse_config(text: str) -> dict[str, str]:
    """Parse flat ``key = value`` (or ``key: value``) lines; '#' starts a comment."""
    doc: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        for sep in ("=", ":"):
            if sep in stripped:
                key, value = stripped.split(sep, 1)
                doc[key.strip()] = value.strip()
                break
        else:
            raise UnitUnknown(f"line {lineno}", stripped)
    return doc


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OpticalDepths:
    """Optical depths d_pq = alpha_pq * l of the two optical transitions."""

    d_ge: float
    d_se: float
    length: float = 0.01  # crystal length l in meters; only the oracle uses it

    def __post_init__(self):
        for name in ("d_ge", "d_se"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise NegativeValue(name, v)
        if not (self.length > 0 and math.isfinite(self.length)):
            raise InvariantViolation(f"crystal length must be positive, got {self.length}")

    @property
    def alpha_ge(self) -> float:
        return self.d_ge / self.length

    @property
    def alpha_se(self) -> float:
        return self.d_se / self.length


@dataclass(frozen=True)
class Broadening:
    """Inhomogeneous linewidths: shared optical FWHM and the two spin FWHMs.

    All three FWHMs are angular (rad/s). Derived quantities:
    tau = 2*pi/gamma_opt (single temporal mode duration) and the tilded
    dephasing parameters gs_tilde/ue_tilde (see module docstring).
    """

    gamma_opt: float  # optical FWHM, rad/s (Gamma_se = Gamma_ge = Gamma)
    gamma_gs: float   # g-s spin FWHM, rad/s
    gamma_ue: float   # u-e spin FWHM, rad/s

    def __post_init__(self):
        if not (self.gamma_opt > 0 and math.isfinite(self.gamma_opt)):
            raise InvariantViolation(f"optical width must be positive, got {self.gamma_opt}")
        for name in ("gamma_gs", "gamma_ue"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise NegativeValue(name, v)

    @classmethod
    def from_tilde(cls, gamma_opt: float, gs_tilde: float, ue_tilde: float) -> "Broadening":
        """Build from already-tilded spin parameters (the Fig.-2-style inputs)."""
        return cls(gamma_opt, gs_tilde * SQRT_8LN2, ue_tilde * SQRT_8LN2)

    @property
    def tau(self) -> float:
        return 2.0 * math.pi / self.gamma_opt

    @property
    def gs_tilde(self) -> float:
        return self.gamma_gs / SQRT_8LN2

    @property
    def ue_tilde(self) -> float:
        return self.gamma_ue / SQRT_8LN2

    @property
    def tilde_sq(self) -> float:
        """Residual dephasing parameter under ideal decoupling, gs^2 + ue^2."""
        return self.gs_tilde**2 + self.ue_tilde**2


@dataclass(frozen=True)
class DecayRates:
    """Decoherence rates: optical gamma (amplitudes decay at gamma/2), spin
    gamma_gs, and the decoupling-suppressed spin rate gamma_gs_dd."""

    gamma_opt: float
    gamma_gs: float
    gamma_gs_dd: float
    dd_enabled: bool = False

    def __post_init__(self):
        for name in ("gamma_opt", "gamma_gs", "gamma_gs_dd"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise NegativeValue(name, v)
        if self.gamma_gs_dd > self.gamma_gs:
            raise InvariantViolation(
                f"gamma_gs_dd ({self.gamma_gs_dd}) exceeds gamma_gs ({self.gamma_gs}); "
                "decoupling never worsens decoherence"
            )


_DEFAULT_KW = (0.0, 0.0, -1.08e7)  # rad/m, counterpropagating with the control beams


@dataclass(frozen=True)
class WritePulse:
    """Weak excitation pulse: area theta0 (radians) and wave vector."""

    theta0: float
    k_w: tuple[float, float, float] = _DEFAULT_KW

    def __post_init__(self):
        if not math.isfinite(self.theta0) or self.theta0 < 0:
            raise NegativeValue("theta0", self.theta0)
        if not self.leading_order_ok:
            warnings.warn(
                f"theta0 = {self.theta0:.3g} > 0.5: leading-order rate formulas degrade",
                PulseAreaWarning,
                stacklevel=2,
            )

    @property
    def leading_order_ok(self) -> bool:
        return self.theta0 <= 0.5


@dataclass(frozen=True)
class TimingSequence:
    """Instants of the pulse sequence, all in seconds.

    t_S: Stokes detection, inside the window [0, T].
    T:   Stokes window length; the rephasing pulses are T apart.
    t_1, t_2 = t_1 + T: rephasing pair.
    t_r: read pulse; the anti-Stokes peak sits at t_AS = t_r - t_S + T.
    """

    t_s: float
    window: float
    t_1: float
    t_r: float
    t_2: float = field(init=False)
    t_as: float = field(init=False)

    def __post_init__(self):
        for name in ("t_s", "window", "t_1", "t_r"):
            if not math.isfinite(getattr(self, name)):
                raise OrderingViolation(f"{name} is not finite")
        if not 0 <= self.t_s:
            raise OrderingViolation("0 <= t_S")
        if not self.t_s <= self.window:
            raise OrderingViolation("t_S <= T")
        if not self.window <= self.t_1:
            raise OrderingViolation("T <= t_1")
        object.__setattr__(self, "t_2", self.t_1 + self.window)
        if not self.t_r >= self.t_2:
            raise OrderingViolation("t_r >= t_2 = t_1 + T")
        object.__setattr__(self, "t_as", self.t_r - self.t_s + self.window)

    @property
    def spin_storage(self) -> float:
        """Total time spent as a g-s spin wave, (t_1-t_S) + (t_r-t_2) = t_AS - 2T."""
        return self.t_as - 2.0 * self.window


def derive_timing(t_s: float, window: float, t_1: float, t_r: float) -> TimingSequence:
    """Complete a pulse sequence from the four free instants."""
    return TimingSequence(t_s=t_s, window=window, t_1=t_1, t_r=t_r)


Vec3 = tuple[float, float, float]


@dataclass(frozen=True)
class GeometryConfig:
    """Wave vectors of all six beams (rad/m)."""

    k_w: Vec3
    k_s: Vec3
    k_1: Vec3
    k_2: Vec3
    k_r: Vec3
    k_as: Vec3

    def __post_init__(self):
        mags = {}
        for name in ("k_w", "k_s", "k_1", "k_2", "k_r", "k_as"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (3,):
                raise InvariantViolation(f"{name} must be a 3-vector")
            mags[name] = float(np.linalg.norm(v))
            if not mags[name] > 0:
                raise InvariantViolation(f"{name} must have positive magnitude")
        if abs(mags["k_1"] - mags["k_2"]) > 1e-9 * mags["k_1"]:
            raise InvariantViolation(
                "rephasing-pair magnitudes differ: the two pulses share one transition"
            )


def default_geometry(k_opt: float = 1.08e7, angle: float = 0.05) -> GeometryConfig:
    """Recommended spatial configuration.

    Rephasing and read beams copropagate along +z, the write beam
    counterpropagates, and the Stokes / anti-Stokes modes counterpropagate
    with each other at a small angle to the beam axis. Optical wave-number
    differences between the transitions are ~1e-8 relative and are ignored,
    which closes the phase-matching condition exactly.
    """
    s_dir = np.array([math.sin(angle), 0.0, math.cos(angle)])
    k_s = tuple(k_opt * s_dir)
    k_as = tuple(-k_opt * s_dir)
    plus_z = (0.0, 0.0, k_opt)
    return GeometryConfig(
        k_w=(0.0, 0.0, -k_opt), k_s=k_s, k_1=plus_z, k_2=plus_z, k_r=plus_z, k_as=k_as
    )


@dataclass(frozen=True)
class ProtocolParams:
    """Full physical configuration of one protocol run."""

    depths: OpticalDepths
    broadening: Broadening
    rates: DecayRates
    write: WritePulse
    geometry: GeometryConfig | None = None
    p_s_override: float | None = None  # s^-1; fixes the Stokes rate directly

    def __post_init__(self):
        if self.p_s_override is not None and not self.p_s_override > 0:
            raise InvariantViolation(f"p_S override must be positive, got {self.p_s_override}")

    @property
    def tau(self) -> float:
        return self.broadening.tau

    def stokes_probability_per_mode(self) -> float:
        """p_S * tau, from the override when present, else from theta0."""
        from .analytic import stokes_rate  # local import: analytic depends on model

        if self.p_s_override is not None:
            return self.p_s_override * self.tau
        return stokes_rate(self.write.theta0, self.depths, self.tau) * self.tau

    def effective_theta0(self) -> float:
        """theta0 as given, or back-solved from the overridden Stokes rate."""
        if self.p_s_override is None:
            return self.write.theta0
        d = self.depths.d_ge
        f = -math.expm1(-d) / d if d > 0 else 1.0
        return math.sqrt(4.0 * self.p_s_override * self.tau / (self.depths.d_se * f))


# ---------------------------------------------------------------------------
# Configuration document -> ProtocolParams
# ---------------------------------------------------------------------------

# (key, dimension) in the order missing-key errors are reported.
_REQUIRED = [
    ("d_se", "bare"),
    ("tau", "time"),          # or "Gamma" (rate)
    ("gamma", "rate"),
    ("gamma_gs", "rate"),
    ("tilde_Gamma_gs", "rate"),  # or "Gamma_gs_fwhm"
    ("tilde_Gamma_ue", "rate"),  # or "Gamma_ue_fwhm"
]

_ALTERNATIVES = {
    "tau": ("Gamma", "rate"),
    "tilde_Gamma_gs": ("Gamma_gs_fwhm", "rate"),
    "tilde_Gamma_ue": ("Gamma_ue_fwhm", "rate"),
}


def _get(doc: Mapping, key: str, dimension: str, default=None):
    if key not in doc:
        return default
    value = parse_quantity(key, doc[key], dimension)
    return value


def build_params(doc: Mapping[str, str | float]) -> ProtocolParams:
    """Validate and normalize a flat configuration document.

    Required keys: d_se, tau (or Gamma), gamma, gamma_gs, tilde_Gamma_gs (or
    Gamma_gs_fwhm), tilde_Gamma_ue (or Gamma_ue_fwhm), and one of theta0 /
    p_S. Optional: d_ge (defaults to d_se), gamma_gs_dd (defaults to
    gamma_gs), crystal_length, dd, overlap_* (consumed elsewhere).
    """
    resolved: dict[str, float] = {}
    for key, dim in _REQUIRED:
        if key in doc:
            resolved[key] = parse_quantity(key, doc[key], dim)
        elif key in _ALTERNATIVES and _ALTERNATIVES[key][0] in doc:
            alt, alt_dim = _ALTERNATIVES[key]
            resolved[key] = parse_quantity(alt, doc[alt], alt_dim)
            resolved[f"_{key}_from_alt"] = 1.0
        else:
            raise MissingKey(key)
    if "theta0" not in doc and "p_S" not in doc:
        raise MissingKey("theta0 (or p_S)")

    for key in ("d_se", "gamma", "gamma_gs"):
        if resolved[key] < 0:
            raise NegativeValue(key, resolved[key])

    d_se = resolved["d_se"]
    d_ge = _get(doc, "d_ge", "bare", default=d_se)
    if d_ge < 0:
        raise NegativeValue("d_ge", d_ge)
    length = _get(doc, "crystal_length", "length", default=0.01)
    depths = OpticalDepths(d_ge=d_ge, d_se=d_se, length=length)

    gamma_opt_inhom = (
        2.0 * math.pi / resolved["tau"]
        if "_tau_from_alt" not in resolved
        else resolved["tau"]
    )
    if "_tilde_Gamma_gs_from_alt" in resolved or "_tilde_Gamma_ue_from_alt" in resolved:
        gs_fwhm = (
            resolved["tilde_Gamma_gs"]
            if "_tilde_Gamma_gs_from_alt" in resolved
            else resolved["tilde_Gamma_gs"] * SQRT_8LN2
        )
        ue_fwhm = (
            resolved["tilde_Gamma_ue"]
            if "_tilde_Gamma_ue_from_alt" in resolved
            else resolved["tilde_Gamma_ue"] * SQRT_8LN2
        )
        broadening = Broadening(gamma_opt_inhom, gs_fwhm, ue_fwhm)
    else:
        broadening = Broadening.from_tilde(
            gamma_opt_inhom, resolved["tilde_Gamma_gs"], resolved["tilde_Gamma_ue"]
        )

    gamma_gs = resolved["gamma_gs"]
    gamma_gs_dd = _get(doc, "gamma_gs_dd", "rate", default=gamma_gs)
    dd_enabled = bool(_get(doc, "dd", "bare", default=0.0))
    rates = DecayRates(
        gamma_opt=resolved["gamma"],
        gamma_gs=gamma_gs,
        gamma_gs_dd=gamma_gs_dd,
        dd_enabled=dd_enabled,
    )

    p_s_override = _get(doc, "p_S", "rate")
    theta0 = _get(doc, "theta0", "angle")
    if theta0 is None:
        # back-solve a representative area so the oracle can sample atoms
        if p_s_override is not None and p_s_override <= 0:
            raise InvariantViolation(f"p_S must be positive, got {p_s_override}")
        f = -math.expm1(-d_ge) / d_ge if d_ge > 0 else 1.0
        theta0 = math.sqrt(4.0 * p_s_override * broadening.tau / (d_se * f)) if d_se > 0 else 0.0
    elif theta0 < 0:
        raise NegativeValue("theta0", theta0)
    write = WritePulse(theta0=theta0)

    return ProtocolParams(
        depths=depths,
        broadening=broadening,
        rates=rates,
        write=write,
        geometry=None,
        p_s_override=p_s_override,
    )


def serialize_params(params: ProtocolParams) -> dict[str, str]:
    """Emit a document (strict SI unit suffixes) that round-trips build_params."""
    doc = {
        "d_ge": repr(params.depths.d_ge),
        "d_se": repr(params.depths.d_se),
        "crystal_length": f"{params.depths.length!r} m",
        "tau": f"{params.broadening.tau!r} s",
        "gamma": f"{params.rates.gamma_opt!r} /s",
        "gamma_gs": f"{params.rates.gamma_gs!r} /s",
        "gamma_gs_dd": f"{params.rates.gamma_gs_dd!r} /s",
        "tilde_Gamma_gs": f"{params.broadening.gs_tilde!r} /s",
        "tilde_Gamma_ue": f"{params.broadening.ue_tilde!r} /s",
        "dd": repr(1 if params.rates.dd_enabled else 0),
        "theta0": f"{params.write.theta0!r} rad",
    }
    if params.p_s_override is not None:
        doc["p_S"] = f"{params.p_s_override!r} /s"
    return doc


def with_dd(params: ProtocolParams, dd: bool) -> ProtocolParams:
    """Copy of params with the decoupling flag set."""
    return replace(params, rates=replace(params.rates, dd_enabled=dd))
