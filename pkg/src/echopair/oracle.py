"""Discrete-atom numerical oracle.

Builds explicit N-atom ensembles, propagates the linearized field solutions
through them, and re-derives every closed-form quantity of the analytic layer
as a Monte-Carlo sum. Nothing here reuses the analytic formulas: rates come
from summing per-atom emission amplitudes, absorption from population
prefix sums, and the temporal/depth factors from direct quadrature of the
line-shape integrals. Agreement with the analytic layer is therefore a real
two-route check.

Line shapes: the optical inhomogeneous profile is a top-hat of full width
Gamma (that rectangle is what Fourier-transforms into the sinc^2 coincidence
envelope); the spin profiles are Gaussians. Decoherence enters as
per-interval amplitude damping, exp(-gamma/2 * t_optical) on optical
coherences and exp(-gamma_gs/2 * t_spin) on spin coherences, which makes the
ensemble expectation reproduce the analytic loss factor exactly.

Determinism: all random variates for an ensemble come from one counter-based
Philox stream keyed by the seed, drawn in a fixed documented order (positions,
optical detunings, g-s detunings, u-e detunings); sums are vectorized numpy
reductions, so results are bit-stable for a fixed seed regardless of worker
count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.integrate import simpson

from .errors import InvariantViolation, QuadratureDivergence
from .model import Broadening, DecayRates, ProtocolParams, TimingSequence

Direction = Literal["forward", "backward"]
Transition = Literal["ge", "se"]


# ---------------------------------------------------------------------------
# Ensemble sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AtomEnsemble:
    """Sampled atoms, z-sorted ascending (propagation sums need z order)."""

    z: np.ndarray          # positions in [0, l], m
    delta_ge: np.ndarray   # optical detunings, rad/s (top-hat of width Gamma)
    delta_gs: np.ndarray   # g-s spin detunings, rad/s (Gaussian)
    delta_ue: np.ndarray   # u-e spin detunings, rad/s (Gaussian)
    g_amp: np.ndarray      # cos(theta_j / 2)
    e_amp: np.ndarray      # i e^{i k_w z_j} sin(theta_j / 2), complex
    phi0: np.ndarray       # spatial write phase k_w z_j, rad
    d_ge: float
    d_se: float
    length: float
    tau: float
    theta0: float
    seed: int

    @property
    def n(self) -> int:
        return len(self.z)

    @property
    def kappa_ge_sq(self) -> float:
        return self.d_ge / (self.n * self.tau)

    @property
    def kappa_se_sq(self) -> float:
        return self.d_se / (self.n * self.tau)

    @property
    def alpha_ge(self) -> float:
        return self.d_ge / self.length

    def excited_fraction(self) -> float:
        """N_e / N, the write-excited atom fraction."""
        return float(np.sum(np.abs(self.e_amp) ** 2) / self.n)


def dump_ensemble_csv(ensemble: AtomEnsemble, path) -> None:
    """Debug dump of the sampled atoms, one row per atom."""
    header = "index,z,delta_ge,delta_gs,delta_ue,re_g,im_g,re_e,im_e"
    columns = np.column_stack([
        np.arange(ensemble.n),
        ensemble.z,
        ensemble.delta_ge,
        ensemble.delta_gs,
        ensemble.delta_ue,
        ensemble.g_amp,
        np.zeros(ensemble.n),
        ensemble.e_amp.real,
        ensemble.e_amp.imag,
    ])
    np.savetxt(path, columns, delimiter=",", header=header, comments="",
               fmt="%.9g")


def sample_ensemble(params: ProtocolParams, n: int, seed: int) -> AtomEnsemble:
    """Draw an ensemble for the given physical configuration.

    E_j = i e^{i k_w z_j} sin(theta_j / 2) with theta_j = theta0 e^{-alpha_ge z_j / 2}
    (write-beam attenuation across the crystal), G_j = cos(theta_j / 2).
    """
    if n < 1:
        raise InvariantViolation(f"need at least one atom, got {n}")
    b = params.broadening
    length = params.depths.length
    rng = np.random.Generator(np.random.Philox(seed))
    z = np.sort(rng.uniform(0.0, length, n))
    delta_ge = rng.uniform(-0.5 * b.gamma_opt, 0.5 * b.gamma_opt, n)
    delta_gs = rng.normal(0.0, b.gs_tilde, n)  # tilde == angular std dev
    delta_ue = rng.normal(0.0, b.ue_tilde, n)

    theta0 = params.effective_theta0()
    theta = theta0 * np.exp(-0.5 * params.depths.alpha_ge * z)
    k_w_z = params.write.k_w[2]
    phi0 = k_w_z * z
    g_amp = np.cos(0.5 * theta)
    e_amp = 1j * np.exp(1j * phi0) * np.sin(0.5 * theta)

    return AtomEnsemble(
        z=z, delta_ge=delta_ge, delta_gs=delta_gs, delta_ue=delta_ue,
        g_amp=g_amp, e_amp=e_amp, phi0=phi0,
        d_ge=params.depths.d_ge, d_se=params.depths.d_se,
        length=length, tau=b.tau, theta0=theta0, seed=seed,
    )


# ---------------------------------------------------------------------------
# Populations and equivalent absorption
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Populations:
    """Per-atom level occupations; each array sums with the others to 1."""

    g: np.ndarray
    s: np.ndarray
    u: np.ndarray
    e: np.ndarray

    @classmethod
    def all_ground(cls, n: int) -> "Populations":
        one, zero = np.ones(n), np.zeros(n)
        return cls(g=one, s=zero.copy(), u=zero.copy(), e=zero.copy())

    @classmethod
    def inverted(cls, n: int, transition: Transition = "ge") -> "Populations":
        one, zero = np.ones(n), np.zeros(n)
        if transition == "ge":
            return cls(g=zero.copy(), s=zero.copy(), u=zero.copy(), e=one)
        return cls(g=zero.copy(), s=one, u=zero.copy(), e=zero.copy())

    @classmethod
    def post_write(cls, ensemble: AtomEnsemble) -> "Populations":
        """Immediately after the write pulse: g and e populated."""
        e = np.abs(ensemble.e_amp) ** 2
        return cls(g=1.0 - e, s=np.zeros(ensemble.n), u=np.zeros(ensemble.n), e=e)

    @classmethod
    def post_sequence(cls, ensemble: AtomEnsemble) -> "Populations":
        """After the rephasing pair and the read pulse: the write-excited
        population sits in s, the rest back in g."""
        e = np.abs(ensemble.e_amp) ** 2
        return cls(g=1.0 - e, s=e, u=np.zeros(ensemble.n), e=np.zeros(ensemble.n))


def _inversion(populations: Populations, transition: Transition) -> np.ndarray:
    """<sigma_upper> - <sigma_lower> per atom (all-ground gives -1 on both)."""
    if transition == "ge":
        return populations.e - populations.g
    return populations.e - populations.s


def _prefix_profile(ensemble: AtomEnsemble, populations: Populations,
                    transition: Transition) -> tuple[np.ndarray, float]:
    """a at each atom (exclusive of the atom itself) and a at z = l."""
    d = ensemble.d_ge if transition == "ge" else ensemble.d_se
    inv = _inversion(populations, transition)
    csum = np.cumsum(inv)
    a_at = d * (csum - inv) / ensemble.n  # exclusive prefix: atoms with z_k < z_j
    return a_at, float(d * csum[-1] / ensemble.n)


def equivalent_absorption(
    ensemble: AtomEnsemble,
    populations: Populations,
    transition: Transition,
    z: float,
) -> float:
    """a_pq(z) = d_pq (1/N) sum_{z_j < z} (<sigma_upper> - <sigma_lower>).

    Negative for absorbing media (all atoms in the lower level gives -d_pq at
    z = l), positive for gain.
    """
    d = ensemble.d_ge if transition == "ge" else ensemble.d_se
    inv = _inversion(populations, transition)
    below = ensemble.z < z
    return float(d * np.sum(inv[below]) / ensemble.n)


def input_attenuation(
    ensemble: AtomEnsemble,
    populations: Populations,
    transition: Transition,
) -> float:
    """Amplitude transmission of an input field across the crystal,
    e^{a(l)/2} in either direction (Beer-Lambert: e^{-d/2} for all-ground)."""
    a_l = equivalent_absorption(ensemble, populations, transition, ensemble.length * (1 + 1e-12))
    return math.exp(0.5 * a_l)


def propagate_field(
    ensemble: AtomEnsemble,
    coherences: np.ndarray,
    direction: Direction,
    t: float,
    z: float,
    populations: Populations | None = None,
    transition: Transition = "ge",
    t0: float = 0.0,
) -> complex:
    """Source term of the propagated field at (t, z) for given per-atom
    coherences (envelope convention: carrier phases absorbed; detunings keep
    evolving). Linear in the coherences; the vacuum input term is dropped.
    """
    coherences = np.asarray(coherences)
    if coherences.shape != ensemble.z.shape:
        raise InvariantViolation("coherences must be indexed like the atoms")
    if populations is None:
        populations = Populations.all_ground(ensemble.n)
    kappa = math.sqrt(ensemble.kappa_ge_sq if transition == "ge" else ensemble.kappa_se_sq)
    delta = ensemble.delta_ge if transition == "ge" else ensemble.delta_ge - ensemble.delta_gs
    a_at, _ = _prefix_profile(ensemble, populations, transition)
    a_z = equivalent_absorption(ensemble, populations, transition, z)
    phases = np.exp(-1j * delta * (t - t0))
    if direction == "forward":
        mask = ensemble.z < z
        damp = np.exp(0.5 * (a_z - a_at[mask]))
        total = np.sum(1j * kappa * coherences[mask] * phases[mask] * damp)
    else:
        mask = ensemble.z > z
        damp = np.exp(-0.5 * (a_z - a_at[mask]))
        total = np.sum(1j * kappa * coherences[mask] * phases[mask] * damp)
    return complex(total)


# ---------------------------------------------------------------------------
# Monte-Carlo rates
# ---------------------------------------------------------------------------

def stokes_weights(ensemble: AtomEnsemble, direction: Direction = "backward") -> np.ndarray:
    """Per-atom contributions to p_S: |xi_j^s E_j|^2."""
    pops = Populations.post_write(ensemble)
    a_at, a_l = _prefix_profile(ensemble, pops, "se")
    e_sq = np.abs(ensemble.e_amp) ** 2
    if direction == "backward":
        return np.exp(a_at) * e_sq
    return np.exp(a_l - a_at) * e_sq


def stokes_rate_mc(ensemble: AtomEnsemble, direction: Direction = "backward") -> float:
    """p_S = kappa_se^2 sum_j |xi_j^s E_j|^2 (amplification through the gain
    the excited atoms themselves provide is included via a_se)."""
    return float(ensemble.kappa_se_sq * np.sum(stokes_weights(ensemble, direction)))


def noise_weights(ensemble: AtomEnsemble) -> np.ndarray:
    """Per-atom contributions to the worst-case intrinsic noise p_n."""
    pops = Populations.post_write(ensemble)  # every excited atom parked in e
    a_at, a_l = _prefix_profile(ensemble, pops, "ge")
    return np.exp(a_l - a_at) * np.abs(ensemble.e_amp) ** 2


def noise_rate_mc(ensemble: AtomEnsemble) -> float:
    """p_n = kappa_ge^2 sum_j |xi_j^n E_j|^2 under the fully-decohered
    worst case (forward detection at z = l)."""
    return float(ensemble.kappa_ge_sq * np.sum(noise_weights(ensemble)))


@dataclass(frozen=True)
class CoincidenceSample:
    value: float          # p_S,AS, s^-2
    dropped_term: float   # incoherent sum_j |...|^2 piece discarded analytically
    dropped_ratio: float  # dropped_term / value; scales as 1/N

    @property
    def total(self) -> float:
        return self.value + self.dropped_term


def coincidence_terms(
    ensemble: AtomEnsemble,
    timing: TimingSequence,
    rates: DecayRates,
    dd: bool = False,
    t: float | None = None,
    phase_mismatch: float = 0.0,
) -> tuple[np.ndarray, float]:
    """Per-atom complex amplitudes c_j and the squared damping factor so that
    p_S,AS = (kappa_ge kappa_se)^2 damp^2 |sum_j c_j|^2.

    Phase bookkeeping per atom (spatially matched terms cancel; a residual
    wave-vector mismatch enters as phase_mismatch * z_j):
        -delta_ge (t - t_AS) - delta_gs (t_r - t_S) - delta_ue T
    With ideal decoupling the g-s dephasing over both storage intervals is
    refocused, leaving -delta_gs T - delta_ue T.
    """
    if t is None:
        t = timing.t_as
    pops_write = Populations.post_write(ensemble)
    a_se_at, _ = _prefix_profile(ensemble, pops_write, "se")
    pops_read = Populations.post_sequence(ensemble)
    a_ge_at, a_ge_l = _prefix_profile(ensemble, pops_read, "ge")

    if dd:
        spin_phase = -(ensemble.delta_gs + ensemble.delta_ue) * timing.window
    else:
        spin_phase = (
            -ensemble.delta_gs * (timing.t_r - timing.t_s)
            - ensemble.delta_ue * timing.window
        )
    phase = (
        -ensemble.delta_ge * (t - timing.t_as)
        + spin_phase
        + phase_mismatch * ensemble.z
    )
    magnitude = (
        np.exp(0.5 * a_se_at)
        * np.exp(0.5 * (a_ge_l - a_ge_at))
        * np.abs(ensemble.e_amp)
        * ensemble.g_amp
    )
    optical_time = timing.t_s + timing.window + (t - timing.t_r)
    spin_rate = rates.gamma_gs_dd if dd else rates.gamma_gs
    damp = math.exp(
        -0.5 * rates.gamma_opt * optical_time - 0.5 * spin_rate * timing.spin_storage
    )
    return magnitude * np.exp(1j * phase), damp**2


def coincidence_mc(
    ensemble: AtomEnsemble,
    timing: TimingSequence,
    rates: DecayRates,
    dd: bool = False,
    t: float | None = None,
    phase_mismatch: float = 0.0,
) -> CoincidenceSample:
    """Coincidence probability density from the explicit double sum,
    (kappa_ge kappa_se)^2 |sum_j xi_j^as xi_j^s E_j G_j|^2, plus the
    incoherent double-excitation term the closed form drops."""
    c, damp_sq = coincidence_terms(ensemble, timing, rates, dd, t, phase_mismatch)
    kk = ensemble.kappa_ge_sq * ensemble.kappa_se_sq
    main = kk * damp_sq * float(np.abs(np.sum(c)) ** 2)
    e_sq = np.abs(ensemble.e_amp) ** 2
    g_sq = ensemble.g_amp**2
    scale = np.where(g_sq > 0, e_sq / np.maximum(g_sq, 1e-300), 0.0)
    dropped = kk * damp_sq * float(np.sum(np.abs(c) ** 2 * scale))
    return CoincidenceSample(
        value=main,
        dropped_term=dropped,
        dropped_ratio=dropped / main if main > 0 else math.inf,
    )


# ---------------------------------------------------------------------------
# Quadratures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralProfiles:
    """Normalized angular-frequency densities of the three transitions."""

    optical_width: float  # top-hat full width, rad/s
    gs_fwhm: float        # Gaussian FWHM, rad/s
    ue_fwhm: float

    @classmethod
    def from_broadening(cls, b: Broadening) -> "SpectralProfiles":
        return cls(optical_width=b.gamma_opt, gs_fwhm=b.gamma_gs, ue_fwhm=b.gamma_ue)

    def validate(self, tol: float = 1e-9) -> None:
        """Each density must integrate to 1 (checked by quadrature)."""
        for name, (fn, lo, hi) in self._integrands().items():
            total = _simpson_doubling(fn, lo, hi, tol=1e-10)
            if abs(total - 1.0) > tol:
                raise InvariantViolation(f"{name} density integrates to {total!r}, not 1")

    def _integrands(self):
        w = self.optical_width
        out = {"optical": (lambda x: np.full_like(x, 1.0 / w), -0.5 * w, 0.5 * w)}
        for name, fwhm in (("spin_gs", self.gs_fwhm), ("spin_ue", self.ue_fwhm)):
            sigma = fwhm / math.sqrt(8.0 * math.log(2.0))
            if sigma == 0.0:
                continue
            out[name] = (
                lambda x, s=sigma: np.exp(-0.5 * (x / s) ** 2) / (s * math.sqrt(2 * math.pi)),
                -10.0 * sigma,
                10.0 * sigma,
            )
        return out


def _simpson_doubling(fn, lo, hi, n0: int = 2048, tol: float = 1e-6,
                      max_doublings: int = 8, floor: float = 1.0):
    """Composite Simpson with node doubling until successive estimates agree,
    |change| <= tol * max(|value|, floor).

    The floor makes convergence absolute at the integrand's natural scale:
    characteristic functions (scale 1) may truly vanish at sinc nodes, where
    a purely relative criterion could never be met.
    """
    prev = None
    n = n0
    for _ in range(max_doublings + 1):
        x = np.linspace(lo, hi, n + 1)
        val = simpson(fn(x), x=x)
        if prev is not None and abs(val - prev) <= tol * max(abs(val), floor):
            return val
        prev = val
        n *= 2
    raise QuadratureDivergence(
        f"no convergence to {tol} after {max_doublings} doublings on [{lo}, {hi}]"
    )


def _char_sq(density_fn, lo, hi, offset: float, n0: int, tol: float) -> float:
    """|integral of rho(delta) e^{-i delta u} d delta|^2 by Simpson doubling."""
    amp = _simpson_doubling(
        lambda x: density_fn(x) * np.exp(-1j * x * offset), lo, hi, n0=n0, tol=tol
    )
    return float(abs(amp) ** 2)


@dataclass(frozen=True)
class TemporalTrace:
    times: np.ndarray
    optical_sq: np.ndarray  # should reproduce sinc^2[pi (t - t_AS)/tau]
    gs_sq: float            # should reproduce exp(-gs~^2 (t_r - t_S)^2)
    ue_sq: float            # should reproduce exp(-ue~^2 T^2)
    damping: np.ndarray     # rate factors, exp(-gamma t_opt - gamma_gs t_spin)
    product: np.ndarray     # full temporal term including decays


def temporal_quadrature(
    timing: TimingSequence,
    profiles: SpectralProfiles,
    rates: DecayRates,
    times: np.ndarray | None = None,
    n0: int = 2048,
    tol: float = 1e-6,
) -> TemporalTrace:
    """Numerically evaluate the three line-shape Fourier factors of the
    coincidence temporal term and combine them with the decay damping.

    The rectangle transforms to sinc^2 and the Gaussians to Gaussians, so at
    t = t_AS the product of the spin factors and the damping reproduces the
    analytic loss factor.
    """
    profiles.validate()
    tau = 2.0 * math.pi / profiles.optical_width
    if times is None:
        times = timing.t_as + np.linspace(-2.0, 2.0, 41) * tau
    times = np.asarray(times, dtype=float)

    integrands = profiles._integrands()
    opt_fn, opt_lo, opt_hi = integrands["optical"]
    optical_sq = np.array(
        [_char_sq(opt_fn, opt_lo, opt_hi, t - timing.t_as, n0, tol) for t in times]
    )

    def spin_factor(name: str, offset: float) -> float:
        if name not in integrands:  # zero-width line: no dephasing
            return 1.0
        fn, lo, hi = integrands[name]
        return _char_sq(fn, lo, hi, offset, n0, tol)

    gs_sq = spin_factor("spin_gs", timing.t_r - timing.t_s)
    ue_sq = spin_factor("spin_ue", timing.window)

    optical_time = timing.t_s + timing.window + (times - timing.t_r)
    damping = np.exp(
        -rates.gamma_opt * optical_time - rates.gamma_gs * timing.spin_storage
    )
    product = optical_sq * gs_sq * ue_sq * damping
    return TemporalTrace(
        times=times, optical_sq=optical_sq, gs_sq=gs_sq, ue_sq=ue_sq,
        damping=damping, product=product,
    )


def depth_quadrature(
    theta0: float,
    depths,
    phase_mismatch: float = 0.0,
    n0: int = 512,
    tol: float = 1e-6,
) -> float:
    """Optical-depth factor of the coincidence probability,

        zeta = alpha_ge alpha_se | Int_0^l e^{i dk z} (1/2)
               e^{[a_se(0+,z) + a_ge(tr+,l) - a_ge(tr+,z)]/2} sin(theta(z)) dz |^2,

    with the absorption profiles taken from the small-area population
    expansions evaluated directly (a_se = (alpha_se/alpha_ge)(theta0^2/4)
    (1 - e^{-alpha z}); a_ge = -alpha z + (theta0^2/4)(1 - e^{-alpha z})).
    At dk = 0 this reduces, to leading order, to (theta0^2/4) d_ge d_se e^{-d_ge}.
    """
    if theta0 == 0.0:
        return 0.0
    length = depths.length
    alpha_ge, alpha_se = depths.alpha_ge, depths.alpha_se

    def a_se(z):
        return (alpha_se / alpha_ge) * (theta0**2 / 4.0) * (1.0 - np.exp(-alpha_ge * z)) \
            if alpha_ge > 0 else (theta0**2 / 4.0) * alpha_se * z

    def a_ge(z):
        return -alpha_ge * z + (theta0**2 / 4.0) * (1.0 - np.exp(-alpha_ge * z))

    a_ge_l = a_ge(length)

    def integrand(z):
        theta = theta0 * np.exp(-0.5 * alpha_ge * z)
        return (
            np.exp(1j * phase_mismatch * z)
            * 0.5
            * np.exp(0.5 * (a_se(z) + a_ge_l - a_ge(z)))
            * np.sin(theta)
        )

    # resolve the oscillation: at least ~64 nodes per mismatch period
    cycles = abs(phase_mismatch) * length / (2.0 * math.pi)
    n_start = max(n0, int(64 * cycles))
    scale = 0.5 * theta0 * length * math.exp(-0.5 * depths.d_ge)
    amp = _simpson_doubling(integrand, 0.0, length, n0=n_start, tol=tol, floor=scale)
    return float(alpha_ge * alpha_se * abs(amp) ** 2)


def photon_count(times: np.ndarray, rate_trace: np.ndarray, tau: float) -> float:
    """Expected photon number in a detection window: the time integral of the
    detection rate. The trace must resolve the mode, >= 16 samples per tau."""
    times = np.asarray(times, dtype=float)
    rate_trace = np.asarray(rate_trace, dtype=float)
    if times.shape != rate_trace.shape or times.ndim != 1 or len(times) < 3:
        raise InvariantViolation("need matching 1-D time and rate arrays, >= 3 points")
    max_step = float(np.max(np.diff(times)))
    if max_step > tau / 16.0:
        raise InvariantViolation(
            f"trace too coarse: step {max_step:.3e} s exceeds tau/16 = {tau / 16:.3e} s"
        )
    return float(simpson(rate_trace, x=times))
