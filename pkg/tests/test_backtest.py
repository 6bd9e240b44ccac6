"""Backtest engine: account recursion, metrics, cost accounting, benchmarks."""
import numpy as np
import pytest

from dro_portfolio import backtest, data as data_mod


def constant_market(r=0.002, n=2, T=120):
    returns = np.full((n, T), r)
    return data_mod.ReturnMatrix(returns=returns, tickers=("A", "B"))


def test_account_step_formula():
    v = backtest.account_step(
        2.0,
        np.array([0.5, -0.2]),
        np.array([0.1, 0.0]),
        np.array([0.04, -0.02]),
        np.array([0.001, 0.001]),
    )
    growth = 1.0 + 0.5 * 0.04 + (-0.2) * (-0.02)
    haircut = 1.0 - (0.4 * 0.001 + 0.2 * 0.001)
    assert v == pytest.approx(2.0 * growth * haircut, rel=1e-14)


def test_account_step_rejects_negative_wealth():
    with pytest.raises(RuntimeError):
        backtest.account_step(
            1.0,
            np.array([2.0]),
            np.array([0.0]),
            np.array([-0.9]),
            np.array([0.0]),
        )


def test_constant_market_matches_closed_form(log_utility):
    # constant returns, zero cost, no ambiguity: V(T)/V(0) = (1+K'r)^T
    rets = constant_market(r=0.002, T=100)
    cfg = backtest.BacktestConfig(
        train_window=30,
        rebalance_every=10,
        leverage=1.5,
        cost_rate=0.0,
        turnover_cost_limit=0.0,
        gamma=0.0,
        eps_x=1e-6,
        eps_c=1e-6,
        utility=log_utility,
    )
    path, rep = backtest.run(cfg, rets)
    k0 = path.weights[0]
    per = float(k0 @ rets.returns[:, 0])
    T_live = rets.returns.shape[1] - cfg.train_window
    assert path.values[-1] == pytest.approx((1.0 + per) ** T_live, rel=1e-10)
    assert rep.cumulative_return == pytest.approx(
        (1.0 + per) ** T_live - 1.0, rel=1e-10
    )


def test_deterministic_repeat_runs(two_regime_returns, log_utility):
    cfg = backtest.BacktestConfig(
        train_window=60,
        rebalance_every=40,
        leverage=1.5,
        cost_rate=0.001,
        turnover_cost_limit=0.01,
        gamma=0.25,
        eps_x=1e-5,
        eps_c=1e-5,
        utility=log_utility,
    )
    p1, _ = backtest.run(cfg, two_regime_returns)
    p2, _ = backtest.run(cfg, two_regime_returns)
    np.testing.assert_array_equal(p1.values, p2.values)
    for w1, w2 in zip(p1.weights, p2.weights):
        np.testing.assert_array_equal(w1, w2)


def test_replay_reproduces_run(two_regime_returns, log_utility):
    cfg = backtest.BacktestConfig(
        train_window=60,
        rebalance_every=40,
        leverage=1.5,
        cost_rate=0.002,
        turnover_cost_limit=0.02,
        gamma=0.5,
        eps_x=1e-5,
        eps_c=1e-5,
        utility=log_utility,
    )
    path, _ = backtest.run(cfg, two_regime_returns)
    n = two_regime_returns.returns.shape[0]
    values = backtest.replay_weights(
        two_regime_returns,
        path.weights,
        path.rebalance_periods,
        np.full(n, cfg.cost_rate),
        path.start_period,
    )
    np.testing.assert_allclose(values, path.values, atol=1e-14)


def test_cost_charged_once_per_block(log_utility):
    # two rebalance blocks; charge appears in the first period of each block
    rets = constant_market(r=0.001, n=1, T=40)
    cfg = backtest.BacktestConfig(
        train_window=20,
        rebalance_every=10,
        leverage=1.5,
        cost_rate=0.01,
        turnover_cost_limit=0.03,
        gamma=0.0,
        eps_x=1e-6,
        eps_c=1e-6,
        utility=log_utility,
    )
    path, _ = backtest.run(cfg, rets)
    assert len(path.rebalance_periods) == 2
    k0 = path.weights[0]
    k1 = path.weights[1]
    growth = 1.0 + float(k0 @ rets.returns[:, 20])
    fee0 = 1.0 - 0.01 * float(np.abs(k0).sum())
    # first period of block 1 carries the fee, later periods only growth
    assert path.values[1] == pytest.approx(growth * fee0, rel=1e-12)
    assert path.values[2] == pytest.approx(path.values[1] * growth, rel=1e-12)
    # second block: fee on the weight change only
    fee1 = 1.0 - 0.01 * float(np.abs(k1 - k0).sum())
    assert path.values[11] == pytest.approx(
        path.values[10] * (1.0 + float(k1 @ rets.returns[:, 30])) * fee1,
        rel=1e-12,
    )
    assert path.costs_paid[0] == pytest.approx(
        0.01 * float(np.abs(k0).sum()) * 1.0, rel=1e-12
    )


def test_max_drawdown_oracle():
    path = backtest.AccountPath(
        values=np.array([1.0, 100.0, 50.0, 75.0]),
        start_period=0,
        rebalance_periods=(0,),
        weights=(np.array([0.0]),),
        turnover=(0.0,),
        costs_paid=(0.0,),
        objectives=(0.0,),
        solve_times=(0.0,),
        invested_weights=(0.0,),
    )
    rep = backtest.metrics(path, 252, 0.0)
    assert rep.max_drawdown == pytest.approx(0.5, abs=1e-12)


def test_sharpe_matches_hand_computation():
    values = np.array([1.0, 1.01, 1.005, 1.02, 1.015])
    path = backtest.AccountPath(
        values=values,
        start_period=0,
        rebalance_periods=(0,),
        weights=(np.array([0.0]),),
        turnover=(0.0,),
        costs_paid=(0.0,),
        objectives=(0.0,),
        solve_times=(0.0,),
        invested_weights=(0.0,),
    )
    ppy, rf = 252, 0.02
    rep = backtest.metrics(path, ppy, rf)
    rets = np.diff(values) / values[:-1]
    excess = rets - ((1.0 + rf) ** (1.0 / ppy) - 1.0)
    manual = excess.mean() / excess.std(ddof=1) * np.sqrt(ppy)
    assert rep.annualized_sharpe == pytest.approx(manual, rel=1e-12)


def test_sharpe_none_when_flat():
    values = np.ones(10)
    path = backtest.AccountPath(
        values=values,
        start_period=0,
        rebalance_periods=(0,),
        weights=(np.array([0.0]),),
        turnover=(0.0,),
        costs_paid=(0.0,),
        objectives=(0.0,),
        solve_times=(0.0,),
        invested_weights=(0.0,),
    )
    rep = backtest.metrics(path, 252, 0.0)
    assert rep.annualized_sharpe is None


def test_benchmark_buy_and_hold(two_regime_returns):
    bench, rep = backtest.benchmark_buy_and_hold(
        two_regime_returns, start_period=60
    )
    R = two_regime_returns.returns
    n = R.shape[0]
    w = np.full(n, 1.0 / n)
    drift = np.cumprod(1.0 + R[:, 60:].T @ np.ones(n) * 0 + R[:, 60:].T @ w)
    # equal-weight portfolio without intermediate rebalancing compounds each
    # asset separately
    growth = (1.0 + R[:, 60:]).cumprod(axis=1)
    manual = (w[:, None] * growth).sum(axis=0)
    np.testing.assert_allclose(bench.values[1:], manual, rtol=1e-12)
    assert rep.cumulative_return == pytest.approx(manual[-1] - 1.0, rel=1e-12)


def test_benchmark_single_asset_with_entry_cost(two_regime_returns):
    bench, _ = backtest.benchmark_buy_and_hold(
        two_regime_returns, asset=0, initial_cost_rate=0.01, start_period=60
    )
    R = two_regime_returns.returns
    manual = 0.99 * (1.0 + R[0, 60:]).cumprod()
    np.testing.assert_allclose(bench.values[1:], manual, rtol=1e-12)


def test_config_parsing(log_utility):
    cfg = backtest.BacktestConfig.from_config(
        {
            "backtest": {
                "train_window": 50,
                "rebalance_every": 10,
                "risk_free_annual": 0.03,
                "periods_per_year": 252,
            },
            "constraints": {
                "leverage": 2.0,
                "cost_rate": 0.002,
                "turnover_cost_limit": 0.01,
                "allow_short": False,
            },
            "budget": {"eps_x": 1e-4, "eps_c": 1e-5},
            "ambiguity": {"gamma": 0.3},
            "utility": {"kind": "power", "delta": 0.4},
        }
    )
    assert cfg.train_window == 50
    assert cfg.leverage == 2.0
    assert cfg.gamma == 0.3
    assert cfg.utility.kind == "power"
    assert not cfg.allow_short


def test_config_rejects_bad_utility():
    with pytest.raises(ValueError):
        backtest.BacktestConfig.from_config(
            {
                "backtest": {"train_window": 50, "rebalance_every": 10},
                "constraints": {
                    "leverage": 1.5,
                    "cost_rate": 0.0,
                    "turnover_cost_limit": 0.0,
                },
                "budget": {"eps_x": 1e-5, "eps_c": 1e-5},
                "ambiguity": {"gamma": 0.0},
                "utility": {"kind": "cubic"},
            }
        )


def test_forced_decomposition_changes_nothing(two_regime_returns, log_utility):
    base = dict(
        train_window=60,
        rebalance_every=60,
        leverage=1.5,
        cost_rate=0.001,
        turnover_cost_limit=0.01,
        gamma=0.25,
        eps_x=1e-5,
        eps_c=1e-5,
        utility=log_utility,
    )
    p_prod, _ = backtest.run(
        backtest.BacktestConfig(**base, decomposed=False), two_regime_returns
    )
    p_dec, _ = backtest.run(
        backtest.BacktestConfig(**base, decomposed=True), two_regime_returns
    )
    np.testing.assert_allclose(p_dec.values, p_prod.values, atol=1e-9)


def test_short_history_rejected(log_utility):
    # train window longer than history: precondition error before any solve
    rets = constant_market(T=20)
    cfg = backtest.BacktestConfig(
        train_window=50,
        rebalance_every=10,
        leverage=1.5,
        cost_rate=0.0,
        turnover_cost_limit=0.0,
        gamma=0.0,
        eps_x=1e-6,
        eps_c=1e-6,
        utility=log_utility,
    )
    with pytest.raises(ValueError):
        backtest.run(cfg, rets)
