"""HTTP service exposing the calculator.

Every endpoint is stateless pure compute: a config document plus options in,
a columnar table out. The CLI is a thin client of this app (in-process by
default, remote with --server), and any dashboard or batch farm can POST the
same payloads.
"""

from __future__ import annotations

import warnings
from typing import Any, Literal

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from . import analytic, compare, feasibility, oracle, selection, verify
from .errors import EchopairError
from .model import ProtocolParams, TimingSequence, build_params

ConfigDoc = dict[str, str | float | int]


class TimingModel(BaseModel):
    """Pulse-sequence instants in seconds."""

    t_s: float = 0.0
    window: float
    t_1: float | None = None  # defaults to the window end
    t_r: float

    def to_timing(self) -> TimingSequence:
        t_1 = self.window if self.t_1 is None else self.t_1
        return TimingSequence(t_s=self.t_s, window=self.window, t_1=t_1, t_r=self.t_r)


class GridModel(BaseModel):
    t_r_min: float
    t_r_max: float
    n: int = Field(default=500, ge=2)
    window_min: float
    window_max: float
    m: int = Field(default=500, ge=2)

    def to_spec(self) -> feasibility.GridSpec:
        return feasibility.GridSpec(
            t_r_min=self.t_r_min, t_r_max=self.t_r_max, n=self.n,
            window_min=self.window_min, window_max=self.window_max, m=self.m,
        )


class StokesRequest(BaseModel):
    config: ConfigDoc
    atoms: int = Field(default=100_000, ge=1)
    seed: int = 7
    with_oracle: bool = True


class EfficiencyRequest(BaseModel):
    config: ConfigDoc
    d_min: float = 0.01
    d_max: float = 5.0
    points: int = Field(default=200, ge=2)
    timing: TimingModel | None = None  # when present, the loss factor applies


class CorrelationRequest(BaseModel):
    config: ConfigDoc
    timing: TimingModel
    span_taus: float = 5.0
    points: int = Field(default=401, ge=3)


class NoiseRequest(BaseModel):
    config: ConfigDoc


class RegionRequest(BaseModel):
    config: ConfigDoc
    dd: bool = False
    grid: GridModel


class CompareRequest(BaseModel):
    config: ConfigDoc | None = None
    mode: Literal["depth", "modes"]
    f_min: float = 1.0
    f_max: float = 10.0
    f_points: int = Field(default=200, ge=2)
    y_min: float | None = None
    y_max: float | None = None
    y_points: int = Field(default=200, ge=2)


class SelectionRequest(BaseModel):
    overlaps: dict[str, float] | None = None
    config: ConfigDoc | None = None  # overlap_su / overlap_ge / ... keys
    eps_forbid: float = selection.DEFAULT_EPS_FORBID
    eps_allow: float = selection.DEFAULT_EPS_ALLOW


class VerifyRequest(BaseModel):
    config: ConfigDoc
    timing: TimingModel
    atoms: int = Field(default=100_000, ge=1)
    seed: int = 7
    with_slope: bool = True


class TableResponse(BaseModel):
    columns: list[str]
    rows: list[list[Any]]
    meta: dict[str, Any] = Field(default_factory=dict)


app = FastAPI(title="echopair", version=__version__)


def _params(config: ConfigDoc) -> ProtocolParams:
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # soft validity flags stay server-side
            return build_params(config)
    except EchopairError as exc:
        raise HTTPException(status_code=422, detail=f"{type(exc).__name__}: {exc}")


def _domain(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except EchopairError as exc:
        raise HTTPException(status_code=422, detail=f"{type(exc).__name__}: {exc}")


@app.get("/health")
def health() -> dict[str, str]:
    return {"status": "ok", "version": __version__}


@app.post("/stokes", response_model=TableResponse)
def stokes(req: StokesRequest) -> TableResponse:
    params = _params(req.config)
    theta0 = _domain(params.effective_theta0)
    p_s = _domain(analytic.stokes_rate, theta0, params.depths, params.tau)
    rows = [
        ["theta0", theta0],
        ["p_s_per_s", p_s],
        ["p_s_tau", p_s * params.tau],
    ]
    meta: dict[str, Any] = {"tau_s": params.tau}
    if req.with_oracle:
        ens = _domain(oracle.sample_ensemble, params, req.atoms, req.seed)
        mc_b = oracle.stokes_rate_mc(ens, "backward")
        mc_f = oracle.stokes_rate_mc(ens, "forward")
        rows += [
            ["oracle_p_s_tau_backward", mc_b * params.tau],
            ["oracle_p_s_tau_forward", mc_f * params.tau],
            ["oracle_rel_err", abs(mc_b - p_s) / p_s if p_s else 0.0],
        ]
        meta.update({"atoms": req.atoms, "seed": req.seed})
    return TableResponse(columns=["quantity", "value"], rows=rows, meta=meta)


@app.post("/efficiency", response_model=TableResponse)
def efficiency(req: EfficiencyRequest) -> TableResponse:
    params = _params(req.config)
    loss = 1.0
    if req.timing is not None:
        timing = _domain(req.timing.to_timing)
        loss = analytic.loss_factor(
            timing, params.broadening, params.rates, params.rates.dd_enabled
        )
    d_axis = np.linspace(req.d_min, req.d_max, req.points)
    rows = [
        [float(d),
         analytic.readout_efficiency(float(d), loss, "forward").eta,
         analytic.readout_efficiency(float(d), loss, "backward").eta]
        for d in d_axis
    ]
    return TableResponse(
        columns=["d_ge", "eta_forward", "eta_backward"],
        rows=rows,
        meta={"loss": loss},
    )


@app.post("/correlation", response_model=TableResponse)
def correlation(req: CorrelationRequest) -> TableResponse:
    params = _params(req.config)
    timing = _domain(req.timing.to_timing)
    tau = params.tau
    times = timing.t_as + np.linspace(-req.span_taus, req.span_taus, req.points) * tau
    trace = _domain(analytic.cross_correlation, timing.t_s, params, timing, times)
    rows = [
        [float(t) * 1e6, float(p), float(g)]
        for t, p, g in zip(trace.times, trace.p_s_as, trace.g2)
    ]
    return TableResponse(
        columns=["t_us", "p_s_as", "g2"],
        rows=rows,
        meta={
            "t_as_us": timing.t_as * 1e6,
            "peak_g2": trace.peak_g2,
            "noise_floor": "worst-case intrinsic noise; reported g2 is a lower bound",
        },
    )


@app.post("/noise", response_model=TableResponse)
def noise(req: NoiseRequest) -> TableResponse:
    params = _params(req.config)
    theta0 = _domain(params.effective_theta0)
    result = _domain(
        analytic.intrinsic_noise_rate, theta0, params.depths.d_ge, params.tau
    )
    excited = (theta0**2 / 4.0) * analytic.depth_factor(params.depths.d_ge)
    rows = [
        ["p_n_per_s", result.rate],
        ["p_n_tau", result.rate * params.tau],
        ["excited_fraction", excited],
        ["bound_ratio_eta_star", result.bound_ratio],
    ]
    return TableResponse(columns=["quantity", "value"], rows=rows, meta={})


@app.post("/region", response_model=TableResponse)
def region(req: RegionRequest) -> TableResponse:
    params = _params(req.config)
    grid = _domain(
        feasibility.rasterize_region, params, req.dd, req.grid.to_spec()
    )
    tau = params.tau
    rows = []
    for i, t_r in enumerate(grid.t_r_axis):
        for j, w in enumerate(grid.window_axis):
            rows.append([
                float(t_r) * 1e6,
                float(w) / tau,
                float(grid.g2_worst[i, j]),
                int(grid.membership[i, j]),
            ])
    maxima = _domain(feasibility.feasibility_maxima, params, req.dd)
    scan = grid.scan_maxima()
    return TableResponse(
        columns=["t_r_us", "T_over_tau", "g2_peak", "nonclassical"],
        rows=rows,
        meta={
            "dd": req.dd,
            "t_r_max_closed_form_us": maxima.t_r_max * 1e6,
            "modes_max_closed_form": maxima.modes_max,
            "t_r_max_scan_us": scan.t_r_max * 1e6,
            "modes_max_scan": scan.modes_max,
        },
    )


@app.post("/compare", response_model=TableResponse)
def compare_grids(req: CompareRequest) -> TableResponse:
    if req.mode == "modes":
        if req.config is None:
            raise HTTPException(
                status_code=422, detail="ConfigError: mode sweep needs a config"
            )
        params = _params(req.config)
        y_min = 0.15 if req.y_min is None else req.y_min
        y_max = 30.0 if req.y_max is None else req.y_max
        columns = ["F", "modes", "ratio"]
    else:
        params = _params(req.config) if req.config is not None else None
        y_min = 0.0125 if req.y_min is None else req.y_min
        y_max = 2.5 if req.y_max is None else req.y_max
        columns = ["F", "d_ge", "ratio"]
    f_axis = np.linspace(req.f_min, req.f_max, req.f_points)
    y_axis = np.linspace(y_min, y_max, req.y_points)
    if req.mode == "depth":
        grid = _domain(compare.rasterize_ratio, "depth", params, f_axis, y_axis)
    else:
        grid = _domain(compare.rasterize_ratio, "modes", params, f_axis, y_axis)
    rows = [
        [float(f), float(y), float(grid.ratio[i, j])]
        for i, f in enumerate(f_axis)
        for j, y in enumerate(y_axis)
    ]
    meta: dict[str, Any] = {
        "mode": req.mode,
        "ratio_min": float(grid.ratio.min()),
        "ratio_max": float(grid.ratio.max()),
    }
    if req.mode == "modes":
        meta["unity_crossing_modes_at_f_min"] = _domain(
            compare.unity_crossing_modes, params, req.f_min
        )
    return TableResponse(columns=columns, rows=rows, meta=meta)


@app.post("/selection", response_model=TableResponse)
def selection_check(req: SelectionRequest) -> TableResponse:
    values = req.overlaps
    if values is None:
        if req.config is None:
            raise HTTPException(
                status_code=422,
                detail="ConfigError: provide overlaps or a config with overlap_* keys",
            )
        try:
            values = {
                key: float(req.config[f"overlap_{key}"])
                for key in ("su", "ge", "gu", "se")
            }
        except KeyError as exc:
            raise HTTPException(
                status_code=422, detail=f"MissingKey: overlap_{exc.args[0]}"
            )
    overlaps = _domain(selection.OverlapSet, **values)
    report = _domain(
        selection.check_forbidding, overlaps, req.eps_forbid, req.eps_allow
    )
    rows = [
        ["su_forbidden", overlaps.su, req.eps_forbid, report.forbid_margin,
         int(report.forbid_margin > 0)],
    ]
    for name in ("ge", "gu", "se"):
        margin = report.allow_margins[name]
        rows.append([
            f"{name}_open", getattr(overlaps, name), req.eps_allow, margin,
            int(margin > 0),
        ])
    return TableResponse(
        columns=["condition", "overlap", "threshold", "margin", "pass"],
        rows=rows,
        meta={"passed": report.passed},
    )


@app.post("/verify", response_model=TableResponse)
def verify_suite(req: VerifyRequest) -> TableResponse:
    params = _params(req.config)
    timing = _domain(req.timing.to_timing)
    report = _domain(
        verify.run_verify, params, timing, req.atoms, req.seed, req.with_slope
    )
    rows = [
        [row.quantity, row.analytic, row.oracle, row.rel_err, int(row.passed)]
        for row in report.rows
    ]
    return TableResponse(
        columns=["quantity", "analytic", "oracle", "rel_err", "pass"],
        rows=rows,
        meta={"passed": report.passed, "atoms": req.atoms, "seed": req.seed,
              "failing": report.failing()},
    )
