"""Oracle-vs-analytic equivalence suite.

Runs the discrete-atom oracle against every closed-form quantity it shadows
and reports per-quantity relative errors. Pass tolerance is
max(2%, 3 sigma_stat): sigma for the linear sums comes from the per-atom
sample variance, for the coherent coincidence sum from an atom bootstrap.
The Stokes-rate convergence slope across ensemble sizes is reported as an
extra row (expected -1/2 on a log-log scale).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import analytic, oracle
from .model import ProtocolParams, TimingSequence

REL_TOLERANCE = 0.02
SLOPE_TARGET = -0.5
SLOPE_TOLERANCE = 0.15


def worker_count() -> int:
    """Worker cap: ECHOPAIR_THREADS when set, else the CPU count."""
    env = os.environ.get("ECHOPAIR_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


@dataclass(frozen=True)
class CheckRow:
    quantity: str
    analytic: float
    oracle: float
    rel_err: float
    tolerance: float
    passed: bool


@dataclass(frozen=True)
class VerifyReport:
    rows: list[CheckRow]
    n_atoms: int
    seed: int

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows)

    def failing(self) -> list[str]:
        return [row.quantity for row in self.rows if not row.passed]


def _row(name: str, reference: float, measured: float, sigma_rel: float) -> CheckRow:
    rel_err = abs(measured - reference) / abs(reference) if reference != 0 else abs(measured)
    tol = max(REL_TOLERANCE, 3.0 * sigma_rel)
    return CheckRow(
        quantity=name, analytic=reference, oracle=measured,
        rel_err=rel_err, tolerance=tol, passed=rel_err <= tol,
    )


def _sum_sigma_rel(weights: np.ndarray) -> float:
    """Relative standard error of a sum of iid per-atom contributions."""
    total = float(np.sum(weights))
    if total == 0.0:
        return 0.0
    return float(np.std(weights) * math.sqrt(len(weights)) / total)


def _coincidence_bootstrap_sigma(
    terms: np.ndarray, seed: int, resamples: int = 32
) -> float:
    """Bootstrap (over atoms) relative sigma of |sum_j c_j|^2."""
    n = len(terms)
    rng = np.random.Generator(np.random.Philox(seed))
    values = np.empty(resamples)
    for b in range(resamples):
        idx = rng.integers(0, n, n)
        values[b] = np.abs(np.sum(terms[idx])) ** 2
    mean = float(np.mean(values))
    return float(np.std(values) / mean) if mean > 0 else 0.0


def equivalence_report(
    params: ProtocolParams,
    timing: TimingSequence,
    n_atoms: int = 100_000,
    seed: int = 7,
) -> VerifyReport:
    """Compare each Monte-Carlo rate to its closed form on one ensemble."""
    ens = oracle.sample_ensemble(params, n_atoms, seed)
    tau = params.tau
    theta0 = ens.theta0
    d_ge, d_se = params.depths.d_ge, params.depths.d_se
    rows: list[CheckRow] = []

    ne_ref = (theta0**2 / 4.0) * analytic.depth_factor(d_ge)
    rows.append(_row("excited_fraction", ne_ref, ens.excited_fraction(),
                     _sum_sigma_rel(np.abs(ens.e_amp) ** 2)))

    p_s_ref = analytic.stokes_rate(theta0, params.depths, tau)
    for direction in ("backward", "forward"):
        weights = oracle.stokes_weights(ens, direction)
        rows.append(_row(
            f"stokes_rate_{direction}", p_s_ref,
            ens.kappa_se_sq * float(np.sum(weights)),
            _sum_sigma_rel(weights),
        ))

    noise_ref = analytic.intrinsic_noise_rate(theta0, d_ge, tau)
    noise_w = oracle.noise_weights(ens)
    p_n_mc = ens.kappa_ge_sq * float(np.sum(noise_w))
    rows.append(_row("noise_rate", noise_ref.rate, p_n_mc, _sum_sigma_rel(noise_w)))
    rows.append(_row(
        "noise_bound_ratio", noise_ref.bound_ratio,
        p_n_mc * tau / ens.excited_fraction(),
        _sum_sigma_rel(noise_w),
    ))

    terms, damp_sq = oracle.coincidence_terms(ens, timing, params.rates, dd=False)
    kk = ens.kappa_ge_sq * ens.kappa_se_sq
    coin_mc = kk * damp_sq * float(np.abs(np.sum(terms)) ** 2)
    coin_ref = analytic.coincidence_rate(timing.t_as, timing.t_s, params, timing)
    rows.append(_row(
        "coincidence_peak", coin_ref, coin_mc,
        _coincidence_bootstrap_sigma(terms, seed=seed + 1),
    ))

    return VerifyReport(rows=rows, n_atoms=n_atoms, seed=seed)


def convergence_slope(
    params: ProtocolParams,
    sizes: tuple[int, ...] = (1_000, 10_000, 100_000, 1_000_000),
    replicates: int = 16,
    seed: int = 7,
    theta0: float = 0.05,
) -> tuple[float, list[tuple[int, float]]]:
    """Log-log slope of the Stokes-rate deviation from its closed form versus
    ensemble size; RMS over seed replicates at each size. Independent
    ensembles may be sampled in parallel; results combine in a fixed order.

    The write area is pinned small (default 0.05): the estimator's relative
    statistics are area-independent, while the leading-order truncation bias
    grows as theta0^2 and would otherwise floor the curve near 10^6 atoms.
    """
    from dataclasses import replace

    from .model import WritePulse

    params = replace(params, write=WritePulse(theta0), p_s_override=None)
    p_s_ref = analytic.stokes_rate(theta0, params.depths, params.tau)

    def deviation(n: int, sub: int) -> float:
        ens = oracle.sample_ensemble(params, n, seed + 1009 * sub + 7919 * n)
        return (oracle.stokes_rate_mc(ens) - p_s_ref) / p_s_ref

    points: list[tuple[int, float]] = []
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        for n in sizes:
            devs = list(pool.map(lambda s: deviation(n, s), range(replicates)))
            points.append((n, float(np.sqrt(np.mean(np.square(devs))))))
    slope = float(np.polyfit(
        np.log10([n for n, _ in points]), np.log10([r for _, r in points]), 1
    )[0])
    return slope, points


def run_verify(
    params: ProtocolParams,
    timing: TimingSequence,
    n_atoms: int = 100_000,
    seed: int = 7,
    with_slope: bool = True,
) -> VerifyReport:
    """Full suite: equivalence rows plus the convergence-slope row."""
    report = equivalence_report(params, timing, n_atoms, seed)
    rows = list(report.rows)
    if with_slope:
        slope, _ = convergence_slope(params, seed=seed)
        rows.append(CheckRow(
            quantity="convergence_slope",
            analytic=SLOPE_TARGET,
            oracle=slope,
            rel_err=abs(slope - SLOPE_TARGET),
            tolerance=SLOPE_TOLERANCE,
            passed=abs(slope - SLOPE_TARGET) <= SLOPE_TOLERANCE,
        ))
    return VerifyReport(rows=rows, n_atoms=n_atoms, seed=seed)
