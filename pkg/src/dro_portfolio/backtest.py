"""Sliding-window backtests with turnover costs and benchmark strategies.

Each rebalance re-solves the worst-case LP on the trailing training
window, then the account compounds through realized returns with the
proportional cost charged once per weight change.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import robust_lp
from .ambiguity import from_gamma
from .data import ReturnMatrix, build_scenario_set
from .partition import ErrorBudget, build_family
from .robust_lp import TradingConstraintSet
from .utility import SeparableUtility

# switch to the shared cost-leg epigraph when the cut block would get huge
_DECOMPOSE_CUT_THRESHOLD = 200_000


class BacktestError(RuntimeError):
    """A rebalance could not be solved; carries the failing period."""


@dataclass(frozen=True)
class BacktestConfig:
    """Protocol parameters for one sliding-window run."""

    train_window: int
    rebalance_every: int
    leverage: float
    cost_rate: float
    turnover_cost_limit: float
    gamma: float
    eps_x: float
    eps_c: float
    utility: SeparableUtility
    risk_free_annual: float = 0.0
    periods_per_year: int = 252
    holding_caps: np.ndarray | None = None
    allow_short: bool = True
    decomposed: bool | None = None

    def __post_init__(self):
        if self.train_window < 1 or self.rebalance_every < 1:
            raise ValueError("window lengths must be at least 1")

    @classmethod
    def from_config(cls, cfg: dict) -> "BacktestConfig":
        bt = cfg.get("backtest", {})
        cons = cfg.get("constraints", {})
        budget = cfg.get("budget", {})
        amb = cfg.get("ambiguity", {})
        data = cfg.get("data", {})
        return cls(
            train_window=int(bt.get("train_window", 126)),
            rebalance_every=int(bt.get("rebalance_every", 63)),
            leverage=float(cons.get("leverage", 1.5)),
            cost_rate=float(cons.get("cost_rate", 0.0)),
            turnover_cost_limit=float(cons.get("c_max", 0.0)),
            gamma=float(amb.get("gamma", 0.0)),
            eps_x=float(budget.get("eps_x", 1e-3)),
            eps_c=float(budget.get("eps_c", 1e-5)),
            utility=SeparableUtility.from_config(cfg.get("utility", {"kind": "log"})),
            risk_free_annual=float(data.get("risk_free_annual", 0.0)),
            periods_per_year=int(data.get("periods_per_year", 252)),
            allow_short=bool(cons.get("allow_short", True)),
        )


@dataclass(frozen=True)
class AccountPath:
    """Account values per period plus per-rebalance records."""

    values: np.ndarray
    start_period: int
    rebalance_periods: tuple
    weights: tuple
    turnover: tuple
    costs_paid: tuple
    objectives: tuple
    solve_times: tuple
    invested_weights: tuple

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if np.any(values < 0):
            raise ValueError("account values must stay nonnegative")


@dataclass(frozen=True)
class PerformanceReport:
    """Summary metrics; sharpe is None when volatility is zero."""

    cumulative_return: float
    max_drawdown: float
    annualized_sharpe: float | None
    avg_turnover_rate: float
    avg_invested_weight: float
    avg_optimal_value: float | None
    avg_solve_time: float | None

    def to_dict(self) -> dict:
        return {
            "cumulative_return": self.cumulative_return,
            "max_drawdown": self.max_drawdown,
            "annualized_sharpe": self.annualized_sharpe,
            "avg_turnover_rate": self.avg_turnover_rate,
            "avg_invested_weight": self.avg_invested_weight,
            "avg_optimal_value": self.avg_optimal_value,
            "avg_solve_time": self.avg_solve_time,
        }


def account_step(v_prev: float, k, k_prev, x, cost_vector) -> float:
    """One period of the cost-adjusted account recursion."""
    if v_prev < 0:
        raise ValueError("previous account value must be nonnegative")
    k = np.asarray(k, dtype=float)
    k_prev = np.asarray(k_prev, dtype=float)
    growth = 1.0 + float(k @ np.asarray(x, dtype=float))
    cost = float(np.abs(k - k_prev) @ np.asarray(cost_vector, dtype=float))
    v = growth * (1.0 - cost) * v_prev
    if v < 0.0:
        raise RuntimeError(
            "account went negative despite the constraint set; "
            "the survival bound was not enforced"
        )
    return v


def solve_rebalance(
    config: BacktestConfig, data: ReturnMatrix, t: int, k_prev: np.ndarray
):
    """Build scenarios ending right before period t and solve that LP."""
    scen = build_scenario_set(data, (t - config.train_window, t))
    n = scen.n
    con = TradingConstraintSet.uniform(
        n,
        leverage=config.leverage,
        cost_rate=config.cost_rate,
        turnover_cost_limit=config.turnover_cost_limit,
        holding_caps=config.holding_caps,
        allow_short=config.allow_short,
    )
    maxabs = float(np.abs(scen.scenarios).max())
    x_hi = config.leverage * maxabs
    x_lo = max(-1.0 + 1e-6, -x_hi)
    c_hi = config.turnover_cost_limit if config.cost_rate > 0 else 0.0
    budget = ErrorBudget(config.eps_x, config.eps_c)
    fam = build_family(config.utility, x_lo, x_hi, 0.0, c_hi, budget)
    L, R = fam.a.size, fam.b.size
    decomposed = config.decomposed
    if decomposed is None:
        decomposed = scen.m * L * R > _DECOMPOSE_CUT_THRESHOLD
    model = robust_lp.assemble(scen, fam, amb_from(config, scen), con, k_prev,
                               decomposed=decomposed)
    sol = robust_lp.solve(model)
    return sol, model, scen


def amb_from(config: BacktestConfig, scen):
    return from_gamma(scen.probabilities, config.gamma)


def run(config: BacktestConfig, data: ReturnMatrix):
    """Walk the sliding-window protocol over the whole return history."""
    T = data.returns.shape[1]
    n = data.returns.shape[0]
    t0 = config.train_window
    if T <= t0:
        raise ValueError("history too short for one training window plus a trade")
    cost_vector = np.full(n, config.cost_rate)
    rf = data.risk_free_index
    risky = np.ones(n, dtype=bool)
    if rf is not None:
        risky[rf] = False

    values = [1.0]
    k_prev = np.zeros(n)
    rebalances, weights, turnover, costs_paid = [], [], [], []
    objectives, solve_times, invested = [], [], []
    t = t0
    while t < T:
        sol, model, scen = solve_rebalance(config, data, t, k_prev)
        if sol.status != "optimal":
            raise BacktestError(
                f"rebalance at period {t} failed with status {sol.status}"
            )
        k, diag = robust_lp.extract_weights(sol, model.layout)
        rebalances.append(t)
        weights.append(k.copy())
        turnover.append(float(np.abs(k - k_prev).sum()))
        costs_paid.append(float(np.abs(k - k_prev) @ cost_vector) * values[-1])
        objectives.append(sol.objective)
        solve_times.append(sol.solve_time)
        invested.append(float(k[risky].sum()))
        block_end = min(t + config.rebalance_every, T)
        for s in range(t, block_end):
            values.append(
                account_step(values[-1], k, k_prev, data.returns[:, s], cost_vector)
            )
            k_prev = k  # cost charged only on the first period of the block
        t = block_end
    path = AccountPath(
        values=np.array(values),
        start_period=t0,
        rebalance_periods=tuple(rebalances),
        weights=tuple(weights),
        turnover=tuple(turnover),
        costs_paid=tuple(costs_paid),
        objectives=tuple(objectives),
        solve_times=tuple(solve_times),
        invested_weights=tuple(invested),
    )
    report = metrics(path, config.periods_per_year, config.risk_free_annual)
    return path, report


def replay_weights(
    data: ReturnMatrix,
    weights,
    rebalance_periods,
    cost_vector,
    start_period: int,
) -> np.ndarray:
    """Account path for a fixed weight schedule under a given cost vector."""
    values = [1.0]
    k_prev = np.zeros(data.returns.shape[0])
    T = data.returns.shape[1]
    schedule = dict(zip(rebalance_periods, weights))
    k = None
    for s in range(start_period, T):
        if s in schedule:
            k = np.asarray(schedule[s], dtype=float)
        values.append(
            account_step(values[-1], k, k_prev, data.returns[:, s], cost_vector)
        )
        k_prev = k
    return np.array(values)


def metrics(
    path: AccountPath, periods_per_year: int, risk_free_annual: float
) -> PerformanceReport:
    """Summary statistics of one account path."""
    v = path.values
    if v.size < 2:
        raise ValueError("path too short for metrics")
    rets = v[1:] / v[:-1] - 1.0
    rf_per = (1.0 + risk_free_annual) ** (1.0 / periods_per_year) - 1.0
    vol = float(np.std(rets, ddof=1)) if rets.size > 1 else 0.0
    if vol > 0.0:
        sharpe = float(np.mean(rets - rf_per) / vol * math.sqrt(periods_per_year))
    else:
        sharpe = None
    running_max = np.maximum.accumulate(v)
    mdd = float(np.max(1.0 - v / running_max))
    return PerformanceReport(
        cumulative_return=float(v[-1] / v[0] - 1.0),
        max_drawdown=mdd,
        annualized_sharpe=sharpe,
        avg_turnover_rate=float(np.mean(path.turnover)) if path.turnover else 0.0,
        avg_invested_weight=(
            float(np.mean(path.invested_weights)) if path.invested_weights else 0.0
        ),
        avg_optimal_value=(
            float(np.mean(path.objectives)) if path.objectives else None
        ),
        avg_solve_time=(
            float(np.mean(path.solve_times)) if path.solve_times else None
        ),
    )


def benchmark_buy_and_hold(
    data: ReturnMatrix,
    asset: int | None = None,
    initial_cost_rate: float = 0.0,
    start_period: int = 0,
):
    """Hold-forever benchmark; cost charged once on the initial buy.

    With asset=None the portfolio starts equal-weighted over all assets;
    afterwards weights drift with prices and nothing is traded.
    """
    n, T = data.returns.shape
    if T <= start_period:
        raise ValueError("no periods to trade")
    if asset is None:
        k0 = np.full(n, 1.0 / n)
    else:
        k0 = np.zeros(n)
        k0[asset] = 1.0
    v0 = 1.0 * (1.0 - initial_cost_rate * np.abs(k0).sum())
    growth = np.cumprod(1.0 + data.returns[:, start_period:], axis=1)
    values = np.concatenate([[v0], v0 * (k0 @ growth)])
    rf = data.risk_free_index
    risky = np.ones(n, dtype=bool)
    if rf is not None:
        risky[rf] = False
    path = AccountPath(
        values=values,
        start_period=start_period,
        rebalance_periods=(start_period,),
        weights=(k0,),
        turnover=(float(np.abs(k0).sum()),),
        costs_paid=(float(initial_cost_rate * np.abs(k0).sum()),),
        objectives=(),
        solve_times=(),
        invested_weights=(float(k0[risky].sum()),),
    )
    report = metrics(path, 252, 0.0)
    return path, report
