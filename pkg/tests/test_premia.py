import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icapm import garch
from icapm.data_model import Dataset, month_range
from icapm.errors import DataError
from icapm.model_spec import ModelSpec
from icapm.premia import (
    decompose, hp_banded, hp_filter, premia_table, second_difference_matrix, subperiod_summary,
)
from icapm.simulate import simulate


def _fit_like(spec, psi, data, H0):
    return SimpleNamespace(spec=spec, psi=psi, filtered=garch.filter(spec, psi, data, H0))


def test_additivity_on_estimate(small_fit, small_sim):
    prem = decompose(small_fit, small_sim.dataset)
    assert np.max(np.abs(prem.PT - prem.PRM - prem.PRC - prem.PRD)) <= 1e-14
    assert np.array_equal(prem.PRD, np.zeros_like(prem.PRD))
    assert np.array_equal(prem.PT, small_fit.filtered.mu)


@pytest.mark.parametrize("variant", ["segmented", "augmented"])
def test_additivity_other_variants(variant):
    spec = ModelSpec(2, 1, 2, variant=variant)
    psi = np.zeros(spec.n_params)
    b = spec.blocks()
    psi[b["kappa_w"]] = [1.0, 0.3]
    psi[b["kappa_c"]] = [1.0, -1.0]
    psi[b["delta_d"]] = [2.0, -1.0]
    if spec.has_alpha:
        psi[b["alpha"]] = [0.001, -0.002]
        psi[b["phi"]] = 0.003
    psi[b["a"]] = 0.3
    psi[b["b"]] = 0.9
    H0 = np.diag([0.003, 0.002, 0.001, 0.002]) + 0.0005
    sim = simulate(spec, psi, H0, 200, seed=5)
    prem = decompose(_fit_like(spec, psi, sim.dataset, H0), sim.dataset)
    assert prem.additivity_gap() <= 1e-14
    assert np.any(prem.PRD[:, :2] != 0) and np.all(prem.PRD[:, 2:] == 0)


def test_prc_direct_and_linearity():
    spec = ModelSpec(1, 1, 1, market_price_form="linear")
    psi = np.array([0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
    H0 = np.array([[0.01, 0.005, 0.0], [0.005, 0.02, 0.0], [0.0, 0.0, 0.03]])
    data = Dataset(month_range("2000-01", 3), ("A", "C", "M"), np.zeros((3, 3)), np.ones((3, 1)), ("const",), 1, 1)
    prem = decompose(_fit_like(spec, psi, data, H0), data)
    assert prem.PRC[0, 0] == pytest.approx(0.01, abs=1e-16)
    assert np.array_equal(prem.PRM, np.zeros_like(prem.PRM))
    psi2 = psi.copy()
    psi2[0] = 1.5
    psi4 = psi.copy()
    psi4[0] = 3.0
    p2 = decompose(_fit_like(spec, psi2, data, H0), data)
    p4 = decompose(_fit_like(spec, psi4, data, H0), data)
    assert np.allclose(p4.PRM, 2 * p2.PRM, rtol=1e-15, atol=0)


def test_subperiod_constant_series():
    dates = month_range("1988-01", 48)
    rows = subperiod_summary(dates, np.full(48, 0.005), breakpoints=("1989-12",))
    for row in rows:
        assert row["mean_pct_year"] == pytest.approx(6.0, abs=1e-12)
        assert row["se"] == pytest.approx(0.0, abs=1e-12)
    assert rows[1]["mean_pct_year"] == rows[2]["mean_pct_year"]
    assert rows[1]["n"] == rows[2]["n"] == 24


def test_subperiod_alternating():
    T = 60
    x = np.tile([0.01, -0.01], T // 2)
    row = subperiod_summary(month_range("1990-01", T), x, breakpoints=())[0]
    assert abs(row["mean_pct_year"]) < 1e-12
    expected = 1200 * 0.01 * math.sqrt(T / (T - 1)) / math.sqrt(T)
    assert row["se"] == pytest.approx(expected, rel=1e-12)


def test_subperiod_full_sample_matches_mean():
    x = np.random.default_rng(3).normal(0.004, 0.01, 100)
    row = subperiod_summary(month_range("1995-01", 100), x, breakpoints=())[0]
    assert row["mean_pct_year"] == pytest.approx(1200 * x.mean(), rel=1e-14)


def test_subperiod_errors():
    d = month_range("1990-01", 12)
    with pytest.raises(DataError, match="outside"):
        subperiod_summary(d, np.ones(12), breakpoints=("1985-01",))
    with pytest.raises(DataError):
        subperiod_summary(d, np.ones(12), se_method="bogus")


def test_newey_west_option():
    x = np.random.default_rng(4).normal(0.0, 0.01, 240)
    nw = subperiod_summary(month_range("1980-01", 240), x, (), se_method="newey_west")[0]
    assert nw["se"] > 0


def test_premia_table_labels(small_fit, small_sim):
    prem = decompose(small_fit, small_sim.dataset)
    rows = premia_table(prem, breakpoints=("1995-12",))
    assert {r["component"] for r in rows} == {"PT", "PRM", "PRC", "PRD"}
    assert all(r["se_method"] == "plain" for r in rows)


def test_hp_lambda_zero_identity():
    x = np.random.default_rng(0).normal(size=30)
    assert np.array_equal(hp_filter(x, 0.0)["trend"], x)


@pytest.mark.parametrize("lam", [1.0, 1600.0, 14400.0, 1e6])
def test_hp_linear_reproduced(lam):
    t = np.arange(200, dtype=float)
    x = 0.3 - 0.02 * t
    assert np.max(np.abs(hp_filter(x, lam)["trend"] - x)) < 1e-8


def test_hp_three_point_oracle():
    x = np.array([1.0, 2.0, 4.0])
    tau = hp_filter(x, 1.0)["trend"]
    D = second_difference_matrix(3)
    M = np.eye(3) + D.T @ D
    assert np.max(np.abs(M @ tau - x)) < 1e-12
    assert np.allclose(tau, np.linalg.solve(M, x), atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 400), st.integers(0, 10_000))
def test_hp_residual_equation(T, seed):
    x = np.random.default_rng(seed).normal(size=T)
    res = hp_filter(x, 14400.0)
    D = second_difference_matrix(T)
    M = np.eye(T) + 14400.0 * D.T @ D
    assert np.max(np.abs(M @ res["trend"] - x)) < 1e-10
    assert np.array_equal(res["cycle"], x - res["trend"])


def test_hp_banded_matches_dense():
    for T in (3, 4, 5, 9):
        ab = hp_banded(T, 2.0)
        D = second_difference_matrix(T)
        M = np.eye(T) + 2.0 * D.T @ D
        for k in range(3):
            assert np.allclose(np.diag(M, k), ab[2 - k, k:])


def test_hp_errors():
    with pytest.raises(DataError):
        hp_filter(np.ones(5), -1.0)
    with pytest.raises(DataError):
        hp_filter(np.ones(2), 10.0)
