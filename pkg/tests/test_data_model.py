import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icapm.data_model import (
    InstrumentPanel, RealFXInputs, ReturnsPanel, align, excess_returns, load_instruments,
    load_panel, month_range, real_fx_returns, serialize_panel,
)
from icapm.errors import DataError

ROLES = {"US": "asset", "WORLD": "market"}


def _csv(rows, header="date,US,WORLD"):
    return io.StringIO("\n".join([header, *rows]) + "\n")


def test_load_panel_well_formed():
    p = load_panel(_csv(["1990-01,0.01,0.02", "1990-02,0.03,-0.01", "1990-03,0.0,0.005"]), ROLES)
    assert (p.N, p.T) == (2, 3)
    assert p.values[1, 0] == 0.03


def test_gap_month_rejected():
    with pytest.raises(DataError, match="non-consecutive dates"):
        load_panel(_csv(["1990-01,0.01,0.02", "1990-03,0.03,-0.01"]), ROLES)


def test_duplicate_date_rejected():
    with pytest.raises(DataError, match="duplicate date"):
        load_panel(_csv(["1990-01,0.01,0.02", "1990-01,0.03,-0.01"]), ROLES)


def test_two_markets_rejected():
    with pytest.raises(DataError, match="exactly one market series"):
        load_panel(_csv(["1990-01,0.01,0.02"]), {"US": "market", "WORLD": "market"})


def test_missing_cell_and_bad_number():
    with pytest.raises(DataError, match="missing value"):
        load_panel(_csv(["1990-01,,0.02"]), ROLES)
    with pytest.raises(DataError, match="unparseable"):
        load_panel(_csv(["1990-01,abc,0.02"]), ROLES)


def test_unmapped_column_rejected():
    with pytest.raises(DataError, match="no role"):
        load_panel(_csv(["1990-01,0.01,0.02"]), {"WORLD": "market"})


def test_excess_returns_examples():
    assert excess_returns([0.010], [0.004])[0] == pytest.approx(0.006, abs=1e-15)
    x = np.array([0.1, -0.2, 0.3])
    assert np.array_equal(excess_returns(x, np.zeros(3)), x)
    assert np.array_equal(excess_returns(x, x), np.zeros(3))
    with pytest.raises(DataError, match="length mismatch"):
        excess_returns([1.0, 2.0], [1.0])


@given(st.lists(st.floats(-1, 1), min_size=1, max_size=20), st.floats(-1, 1))
def test_excess_returns_linear(a, b):
    a = np.array(a)
    rf = np.linspace(0, 0.01, a.size)
    lhs = excess_returns(a + b, rf)
    assert np.allclose(lhs, excess_returns(a, rf) + b, atol=1e-12)


def test_real_fx_examples():
    const = RealFXInputs(np.full(4, 1.3), np.full(4, 100.0), np.full(4, 90.0))
    assert np.array_equal(real_fx_returns(const), np.zeros(3))
    ppp = RealFXInputs(np.array([1.0, 1.0]), np.array([100.0, 102.0]), np.array([50.0, 51.0]))
    assert abs(real_fx_returns(ppp)[0]) < 1e-15
    jump = RealFXInputs(np.array([1.0, 2.0]), np.array([100.0, 100.0]), np.array([100.0, 100.0]))
    assert real_fx_returns(jump)[0] == pytest.approx(0.693147, abs=1e-6)
    assert real_fx_returns(jump)[0] == pytest.approx(math.log(2), abs=1e-15)


def test_real_fx_rejects_non_positive():
    with pytest.raises(DataError, match="non-positive"):
        real_fx_returns(RealFXInputs(np.array([1.0, 0.0]), np.ones(2), np.ones(2)))


@settings(max_examples=50)
@given(st.floats(1e-3, 1e3))
def test_real_fx_invariant_to_common_cpi_rescaling(c):
    rng = np.random.default_rng(0)
    s = np.exp(rng.normal(size=12).cumsum() * 0.02)
    il = 100 * np.exp(rng.normal(size=12).cumsum() * 0.003)
    ir = 100 * np.exp(rng.normal(size=12).cumsum() * 0.003)
    base = real_fx_returns(RealFXInputs(s, il, ir))
    scaled = real_fx_returns(RealFXInputs(s, c * il, c * ir))
    assert np.allclose(base, scaled, atol=1e-13, rtol=0)


def _instruments(start, n):
    dates = month_range(start, n)
    return InstrumentPanel(dates, ("const", "z1"), np.column_stack([np.ones(n), np.arange(n, dtype=float)]))


def _returns(start, n):
    return ReturnsPanel(month_range(start, n), ("US", "WORLD"), ("asset", "market"),
                        np.arange(2 * n, dtype=float).reshape(n, 2) / 100)


def test_align_exact_lag_cover():
    d = align(_returns("1990-01", 12), _instruments("1989-12", 12))
    assert d.T == 12
    assert d.Z[0, 1] == 0.0  # instrument dated 1989-12 pairs with 1990-01


def test_align_late_instruments():
    d = align(_returns("1990-01", 12), _instruments("1990-06", 12))
    assert d.T == 6
    assert d.dates[0] == "1990-07" and d.dates[-1] == "1990-12"


def test_align_disjoint():
    with pytest.raises(DataError, match="empty intersection"):
        align(_returns("1990-01", 12), _instruments("2000-01", 12))


def test_align_reorders_into_model_layout():
    p = ReturnsPanel(month_range("1990-01", 3), ("W", "FX", "US"), ("market", "currency", "asset"),
                     np.arange(9, dtype=float).reshape(3, 3))
    d = align(p, _instruments("1989-12", 3))
    assert d.names == ("US", "FX", "W")
    assert np.array_equal(d.r[:, 0], p.values[:, 2])


def test_instrument_constant_first():
    with pytest.raises(DataError):
        InstrumentPanel(month_range("1990-01", 2), ("z",), np.array([[0.5], [1.0]]))
    inst = load_instruments(io.StringIO("date,z1\n1990-01,0.5\n1990-02,0.25\n"))
    assert inst.names == ("const", "z1")
    assert np.array_equal(inst.values[:, 0], [1.0, 1.0])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(-10, 10, allow_subnormal=True), st.floats(-10, 10)),
                min_size=1, max_size=15))
def test_serialize_round_trip_bit_exact(rows):
    values = np.array(rows, dtype=float)
    p = ReturnsPanel(month_range("1999-11", len(rows)), ("US", "WORLD"), ("asset", "market"), values)
    back = load_panel(io.StringIO(serialize_panel(p)), ROLES)
    assert back == p
    assert np.array_equal(back.values.view(np.int64), p.values.view(np.int64))
