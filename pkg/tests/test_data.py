"""CSV ingestion, interpolation, return computation, scenario construction."""
import json
import math

import numpy as np
import pytest

import dro_portfolio as dp
from dro_portfolio import OrderingError, ParseError
from dro_portfolio import data as data_mod


def write_csv(tmp_path, text, name="prices.csv"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


GOOD = """date,AAA,BBB
2024-01-02,100.0,50.0
2024-01-03,101.0,49.5
2024-01-04,99.99,50.5
"""


def test_load_prices_basic(tmp_path):
    series = data_mod.load_prices(write_csv(tmp_path, GOOD))
    assert series.tickers == ("AAA", "BBB")
    assert len(series.dates) == 3
    # prices laid out tickers x dates
    assert series.prices.shape == (2, 3)
    assert series.prices[0, 1] == pytest.approx(101.0)


def test_parse_error_reports_line_number(tmp_path):
    bad = "date,AAA\n2024-01-02,100.0\n2024-01-03,1,2\n"
    with pytest.raises(ParseError) as exc:
        data_mod.load_prices(write_csv(tmp_path, bad))
    assert "3" in str(exc.value)


def test_parse_error_on_bad_float(tmp_path):
    bad = "date,AAA\n2024-01-02,100.0\n2024-01-03,oops\n"
    with pytest.raises(ParseError) as exc:
        data_mod.load_prices(write_csv(tmp_path, bad))
    assert "3" in str(exc.value)


def test_dates_must_increase(tmp_path):
    bad = "date,AAA\n2024-01-03,100.0\n2024-01-02,101.0\n"
    with pytest.raises(OrderingError):
        data_mod.load_prices(write_csv(tmp_path, bad))
    dup = "date,AAA\n2024-01-03,100.0\n2024-01-03,101.0\n"
    with pytest.raises(OrderingError):
        data_mod.load_prices(write_csv(tmp_path, dup))


def test_duplicate_ticker_rejected(tmp_path):
    bad = "date,AAA,AAA\n2024-01-02,100.0,100.0\n"
    with pytest.raises(ParseError):
        data_mod.load_prices(write_csv(tmp_path, bad))


def test_missing_values_interpolated_linearly(tmp_path):
    text = "date,AAA\n2024-01-02,100.0\n2024-01-03,\n2024-01-04,104.0\n"
    series = data_mod.load_prices(write_csv(tmp_path, text))
    assert math.isnan(series.prices[0, 1])
    filled = data_mod.interpolate_missing(series)
    assert filled.prices[0, 1] == pytest.approx(102.0)


def test_boundary_missing_ticker_dropped(tmp_path, caplog):
    text = (
        "date,AAA,BBB\n"
        "2024-01-02,,50.0\n"
        "2024-01-03,101.0,49.5\n"
        "2024-01-04,102.0,50.5\n"
    )
    series = data_mod.load_prices(write_csv(tmp_path, text))
    with caplog.at_level("WARNING"):
        filled = data_mod.interpolate_missing(series)
    assert filled.tickers == ("BBB",)
    assert any("AAA" in rec.message for rec in caplog.records)


def test_compute_returns_oracle(tmp_path):
    series = data_mod.load_prices(write_csv(tmp_path, GOOD))
    rets = data_mod.compute_returns(data_mod.interpolate_missing(series))
    # returns laid out assets x periods
    assert rets.returns.shape == (2, 2)
    assert rets.returns[0, 0] == pytest.approx(101.0 / 100.0 - 1.0, rel=1e-12)
    assert rets.returns[1, 1] == pytest.approx(50.5 / 49.5 - 1.0, rel=1e-12)


def test_nonpositive_price_names_ticker_and_date(tmp_path):
    text = "date,AAA\n2024-01-02,100.0\n2024-01-03,-3.0\n"
    series = data_mod.load_prices(write_csv(tmp_path, text))
    with pytest.raises(ValueError) as exc:
        data_mod.compute_returns(data_mod.interpolate_missing(series))
    msg = str(exc.value)
    assert "AAA" in msg and "2024-01-03" in msg


def test_append_risk_free_geometric(tmp_path):
    series = data_mod.load_prices(write_csv(tmp_path, GOOD))
    rets = data_mod.compute_returns(data_mod.interpolate_missing(series))
    out = data_mod.append_risk_free(rets, 0.02, 252)
    assert out.tickers[-1] == "RF"
    assert out.risk_free_index == 2
    per = 1.02 ** (1.0 / 252) - 1.0
    np.testing.assert_allclose(out.returns[2, :], per, rtol=1e-12)
    # risky rows unchanged
    np.testing.assert_allclose(out.returns[:2, :], rets.returns)


def test_build_scenario_set_window(tmp_path):
    rng = np.random.default_rng(0)
    returns = rng.uniform(-0.05, 0.06, size=(2, 10))
    rets = data_mod.ReturnMatrix(returns=returns, tickers=("A", "B"))
    scen = data_mod.build_scenario_set(rets, (3, 8))
    assert scen.m == 5 and scen.n == 2
    np.testing.assert_allclose(scen.probabilities, 0.2)
    np.testing.assert_allclose(scen.scenarios, returns[:, 3:8].T)
    np.testing.assert_allclose(scen.x_min, returns[:, 3:8].min(axis=1))
    np.testing.assert_allclose(scen.x_max, returns[:, 3:8].max(axis=1))


def test_scenario_set_round_trips_through_json():
    X = np.array([[0.01, -0.02], [0.03, 0.005]])
    scen = dp.ScenarioSet(
        scenarios=X,
        probabilities=np.array([0.5, 0.5]),
        x_min=X.min(axis=0),
        x_max=X.max(axis=0),
        tickers=("A", "B"),
    )
    blob = json.loads(scen.to_json())
    np.testing.assert_allclose(np.array(blob["scenarios"]), X)
    assert blob["tickers"] == ["A", "B"]


def test_return_matrix_validation():
    with pytest.raises(ValueError):
        data_mod.ReturnMatrix(
            returns=np.array([[0.1, -1.5]]), tickers=("A",)
        )
    with pytest.raises(ValueError):
        data_mod.ReturnMatrix(
            returns=np.array([[0.1, np.nan]]), tickers=("A",)
        )


def test_bundled_market_loads():
    import os

    csv_path = os.path.join(os.path.dirname(__file__), "data", "two_regime.csv")
    series = data_mod.load_prices(csv_path)
    assert series.tickers == ("ALPHA", "BRAVO", "CHARLIE")
    assert len(series.dates) == 421
    rets = data_mod.compute_returns(series)
    assert rets.returns.shape == (3, 420)
    assert float(np.abs(rets.returns).max()) < 0.03
