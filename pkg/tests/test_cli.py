"""CLI thin client: CSV schemas, manifests, determinism, exit codes."""

import json
import math
from pathlib import Path

import pytest

from echopair.cli import main

FIG2_CFG = """
gamma_gs       = 50 Hz
gamma_gs_dd    = 2.5 Hz
tilde_Gamma_gs = 5 kHz
tilde_Gamma_ue = 20 kHz
gamma          = 10 kHz
tau            = 5 us
d_se           = 1
p_S            = 0.01 /us
"""

VERIFY_CFG = """
d_ge           = 1
d_se           = 1
tau            = 5 us
gamma          = 10 kHz
gamma_gs       = 50 Hz
gamma_gs_dd    = 2.5 Hz
tilde_Gamma_gs = 5 kHz
tilde_Gamma_ue = 20 kHz
theta0         = 0.2 rad
"""


@pytest.fixture
def fig2_cfg(tmp_path):
    path = tmp_path / "fig2.cfg"
    path.write_text(FIG2_CFG)
    return str(path)


@pytest.fixture
def verify_cfg(tmp_path):
    path = tmp_path / "verify.cfg"
    path.write_text(VERIFY_CFG)
    return str(path)


def read_csv(path):
    lines = Path(path).read_text().strip().splitlines()
    header = lines[0].split(",")
    return header, [line.split(",") for line in lines[1:]]


def test_stokes_command_writes_csv_and_manifest(tmp_path, verify_cfg):
    out = tmp_path / "stokes.csv"
    code = main(["stokes", "--config", verify_cfg, "--out", str(out),
                 "--atoms", "5000", "--seed", "3"])
    assert code == 0
    header, rows = read_csv(out)
    assert header == ["quantity", "value"]
    values = {r[0]: float(r[1]) for r in rows}
    assert values["p_s_tau"] == pytest.approx(0.01 * (1 - math.exp(-1)), rel=1e-8)
    manifest = json.loads((tmp_path / "stokes.csv.manifest.json").read_text())
    assert manifest["command"] == "stokes"
    assert manifest["seed"] == 3
    assert "timestamp" in manifest


def test_region_command_schema(tmp_path, fig2_cfg):
    out = tmp_path / "region.csv"
    code = main([
        "region", "--config", fig2_cfg, "--dd", "--grid", "40x40",
        "--out", str(out),
    ])
    assert code == 0
    header, rows = read_csv(out)
    assert header == ["t_r_us", "T_over_tau", "g2_peak", "nonclassical"]
    assert len(rows) == 1600
    assert {r[3] for r in rows} <= {"0", "1"}


def test_compare_modes_csv_has_unity_crossing(tmp_path, fig2_cfg):
    out = tmp_path / "fig3b.csv"
    code = main([
        "compare", "--mode", "modes", "--config", fig2_cfg,
        "--f-points", "10", "--y-min", "0.5", "--y-max", "30",
        "--y-points", "60", "--out", str(out),
    ])
    assert code == 0
    header, rows = read_csv(out)
    assert header == ["F", "modes", "ratio"]
    # in the F = 1 column the ratio crosses 1 between 20 and 30 modes
    column = [(float(r[1]), float(r[2])) for r in rows if float(r[0]) == 1.0]
    crossings = [
        (m1, m2)
        for (m1, v1), (m2, v2) in zip(column, column[1:])
        if (v1 - 1.0) * (v2 - 1.0) < 0
    ]
    assert len(crossings) == 1
    assert 20.0 < crossings[0][0] < 30.0


def test_efficiency_command(tmp_path, fig2_cfg):
    out = tmp_path / "eff.csv"
    assert main(["efficiency", "--config", fig2_cfg, "--points", "50",
                 "--out", str(out)]) == 0
    header, rows = read_csv(out)
    assert header == ["d_ge", "eta_forward", "eta_backward"]
    assert len(rows) == 50


def test_correlation_command(tmp_path, fig2_cfg):
    out = tmp_path / "corr.csv"
    assert main([
        "correlation", "--config", fig2_cfg, "--window", "50 us",
        "--t-r", "100 us", "--points", "101", "--out", str(out),
    ]) == 0
    header, rows = read_csv(out)
    assert header == ["t_us", "p_s_as", "g2"]
    peak = max(rows, key=lambda r: float(r[2]))
    assert float(peak[0]) == pytest.approx(150.0, rel=1e-6)


def test_selection_command_exit_codes(tmp_path):
    out = tmp_path / "sel.csv"
    passing = main(["selection", "--su", "0.01", "--ge", "0.44", "--gu", "0.21",
                    "--se", "0.29", "--out", str(out)])
    assert passing == 0
    failing = main(["selection", "--su", "0.30", "--ge", "0.44", "--gu", "0.21",
                    "--se", "0.29", "--out", str(out)])
    assert failing == 1


def test_missing_config_is_config_error(tmp_path, capsys):
    code = main(["noise", "--out", str(tmp_path / "n.csv")])
    assert code == 2
    assert "error: ConfigError" in capsys.readouterr().err


def test_bad_config_value_is_config_error(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(FIG2_CFG + "\nd_se = -1\n")  # last assignment wins
    code = main(["noise", "--config", str(cfg), "--out", str(tmp_path / "n.csv")])
    assert code == 2
    err = capsys.readouterr().err
    assert err.startswith("error:")


def test_verify_command_determinism(tmp_path, verify_cfg):
    """Same config and seed give byte-identical CSV; manifests differ only
    in their timestamp."""
    out_a, out_b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["verify", "--config", verify_cfg, "--atoms", "20000", "--seed", "11",
            "--no-slope"]
    assert main(args + ["--out", str(out_a)]) == 0
    assert main(args + ["--out", str(out_b)]) == 0
    assert out_a.read_bytes() == out_b.read_bytes()
    man_a = json.loads((tmp_path / "a.csv.manifest.json").read_text())
    man_b = json.loads((tmp_path / "b.csv.manifest.json").read_text())
    for manifest in (man_a, man_b):
        manifest.pop("timestamp")
        manifest.pop("output")
    assert man_a == man_b


def test_worker_count_env_cap(monkeypatch):
    from echopair.verify import worker_count

    monkeypatch.setenv("ECHOPAIR_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("ECHOPAIR_THREADS", "not-a-number")
    assert worker_count() >= 1
    monkeypatch.delenv("ECHOPAIR_THREADS")
    assert worker_count() >= 1


def test_verify_failure_exit_code(tmp_path, verify_cfg, capsys):
    # 50 atoms: statistical scatter far beyond the 2% gate
    out = tmp_path / "v.csv"
    code = main(["verify", "--config", verify_cfg, "--atoms", "50", "--seed", "1",
                 "--no-slope", "--out", str(out)])
    assert code == 4
    assert "error: VerificationFailure" in capsys.readouterr().err
    assert out.exists()  # report still written for inspection
