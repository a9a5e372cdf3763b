import json
from pathlib import Path

import numpy as np
import pytest

from icapm.cli import run

DEMO = Path(__file__).resolve().parents[1] / "demo"
RUN_CFG = DEMO / "run.cfg"
RETURNS = DEMO / "data" / "returns.csv"
INSTRUMENTS = DEMO / "data" / "instruments.csv"


def _estimate(out):
    return run(["estimate", "--config", str(RUN_CFG), "--data", str(RETURNS),
                "--instruments", str(INSTRUMENTS), "--out", str(out)])


@pytest.fixture(scope="module")
def est_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("est")
    assert _estimate(out) == 0
    return out


def test_describe_stdout(tmp_path, capsys):
    assert run(["describe", "--data", str(RETURNS), "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == "statistic\tUS\tFX\tWORLD"
    doc = json.loads((tmp_path / "describe.json").read_text())
    assert doc["cross_correlations_squared"]["market"] == "WORLD"
    assert (tmp_path / "manifest.json").exists()


def test_estimate_outputs(est_dir):
    doc = json.loads((est_dir / "estimate.json").read_text())
    assert doc["schema_version"] == 1
    assert doc["status"] == "converged"
    assert "[roles]" in doc["config"]
    lines = (est_dir / "filtered_H.csv").read_text().splitlines()
    assert lines[0] == "date,i,j,value"
    assert len(lines) == 1 + doc["n_obs"] * 6
    man = json.loads((est_dir / "manifest.json").read_text())
    assert set(man["inputs"]) == {"config", "data", "instruments"}
    assert len(man["inputs"]["data"]["sha256"]) == 64
    assert {"numpy", "scipy", "numba", "python", "icapm"} <= set(man["versions"])
    assert "created_utc" in man


def test_estimate_byte_identical(est_dir, tmp_path):
    assert _estimate(tmp_path) == 0
    for name in ("estimate.json", "filtered_H.csv", "trace.csv"):
        assert (tmp_path / name).read_bytes() == (est_dir / name).read_bytes()


def test_test_subcommand(est_dir, tmp_path, capsys):
    assert run(["test", "--result", str(est_dir / "estimate.json"), "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "tests.json").read_text())
    assert [t["df"] for t in doc["tests"]] == [1, 2, 1, 2, 1]
    assert "hypothesis\tchi2\tdf\tp_value" in capsys.readouterr().out


def test_premia_round_trip(est_dir, tmp_path):
    assert run(["premia", "--result", str(est_dir / "estimate.json"), "--config", str(RUN_CFG),
                "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "premia_summary.json").read_text())
    assert summary["additivity_gap"] <= 1e-14
    rows = [l.split(",") for l in (tmp_path / "premia_long.csv").read_text().splitlines()[1:]]
    vals = {}
    for d, row, comp, v in rows:
        vals.setdefault((d, row), {})[comp] = float(v)
    gaps = [abs(c["PT"] - c["PRM"] - c["PRC"] - c["PRD"]) for c in vals.values()]
    assert max(gaps) <= 1e-14
    # PT equals the fitted mean from the estimation-time filter
    doc = json.loads((est_dir / "estimate.json").read_text())
    from icapm.cli import _dataset_from_sample, _load_result
    from icapm import garch

    _, spec, psi, _, H0 = _load_result(est_dir / "estimate.json")
    data = _dataset_from_sample(doc["sample"])
    mu = garch.filter(spec, psi, data, H0).mu
    first = data.dates[0]
    assert vals[(first, "US")]["PT"] == mu[0, 0]
    header = (tmp_path / "prices.csv").read_text().splitlines()[0]
    assert header == "date,delta_m,delta_m_trend,delta[FX],delta[FX]_trend"


def test_simulate_deterministic(tmp_path):
    cfg = str(DEMO / "simulate.cfg")
    assert run(["simulate", "--config", cfg, "--T", "50", "--out", str(tmp_path / "a")]) == 0
    assert run(["simulate", "--config", cfg, "--T", "50", "--out", str(tmp_path / "b")]) == 0
    for name in ("returns.csv", "instruments.csv", "latent_H.csv", "truth.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["seed"] == 1973


def test_shipped_demo_matches_simulator(tmp_path):
    assert run(["simulate", "--config", str(DEMO / "simulate.cfg"), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "returns.csv").read_bytes() == RETURNS.read_bytes()
    assert (tmp_path / "instruments.csv").read_bytes() == INSTRUMENTS.read_bytes()


def test_mc_subcommand(tmp_path):
    assert run(["mc", "--config", str(DEMO / "mc.cfg"), "--reps", "2", "--T", "200",
                "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "mc.json").read_text())
    assert doc["reps"] == 2 and doc["T"] == 200 and len(doc["mean_bias"]) == 10


def _err(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    return err[0]


def test_usage_errors(capsys, tmp_path):
    assert run([]) == 1
    assert _err(capsys).startswith("error[E_USAGE]:")
    assert run(["describe", "--data", str(RETURNS), "--bogus", "--out", str(tmp_path)]) == 1
    assert "unrecognized arguments" in _err(capsys)
    assert run(["frobnicate"]) == 1
    _err(capsys)


def test_unreadable_file(capsys, tmp_path):
    assert run(["describe", "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == 1
    assert _err(capsys).startswith("error[E_DATA]:")


def test_role_absent_from_data(capsys, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(RUN_CFG.read_text().replace("US = asset", "JP = asset"))
    code = run(["estimate", "--config", str(cfg), "--data", str(RETURNS),
                "--instruments", str(INSTRUMENTS), "--out", str(tmp_path)])
    assert code == 1
    assert "'JP' referenced in [roles] is absent from the data" in _err(capsys)


def test_unknown_config_key(capsys, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(RUN_CFG.read_text().replace("bhhh_max_iter", "bhhh_maxiter"))
    code = run(["estimate", "--config", str(cfg), "--data", str(RETURNS),
                "--instruments", str(INSTRUMENTS), "--out", str(tmp_path)])
    assert code == 1
    assert _err(capsys).startswith("error[E_CONFIG]: unknown key(s) in [optimizer]")


def test_numerical_failure_exit_2(capsys, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text((DEMO / "simulate.cfg").read_text().replace("a = 0.35, 0.35, 0.35", "a = 0.8, 0.8, 0.8"))
    assert run(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    line = _err(capsys)
    assert line.startswith("error[E_NUMERIC]: inadmissible GARCH parameters")
