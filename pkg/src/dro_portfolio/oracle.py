"""Brute-force references for the worst-case portfolio machinery.

Everything here recomputes quantities by a second, independent route:
worst-case expectations by direct LP over the probability polytope,
small portfolio problems by dense grid search, curvature and account
positivity by randomized sampling.  The CLI verify command packages the
suites; the test suite leans on the same functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from . import robust_lp
from .ambiguity import PolyhedralAmbiguitySet, from_gamma
from .data import ScenarioSet
from .partition import ErrorBudget, build_family
from .robust_lp import TradingConstraintSet
from .utility import SeparableUtility


class ComplexityError(ValueError):
    """Instance too large for the brute-force path."""


_GRID_POINT_CAP = 40_000_000
_LP_POINT_CAP = 20_000


def exact_q(u: SeparableUtility, scen: ScenarioSet, k, k_prev, cost_vector):
    """Per-scenario utility q_j at weights k; -inf flags a domain violation."""
    k = np.asarray(k, dtype=float)
    x = scen.scenarios @ k
    c = float(np.abs(k - np.asarray(k_prev, dtype=float)) @ cost_vector)
    q = np.full(scen.m, -np.inf)
    if not 0.0 <= c < 1.0:
        return q
    ok = x > -1.0
    if np.any(ok):
        q[ok] = u.alpha * u.phi1(x[ok]) + u.beta * u.phi2(c)
    return q


def contamination_worst_case(p_hat, gamma: float, q):
    """Closed-form min of p'q over {p in simplex : p >= (1-gamma) p_hat}."""
    q = np.asarray(q, dtype=float)
    p_hat = np.asarray(p_hat, dtype=float)
    return (1.0 - gamma) * float(p_hat @ q) + gamma * float(q.min())


def inner_worst_case(
    k, k_prev, scen: ScenarioSet, amb: PolyhedralAmbiguitySet, u: SeparableUtility,
    cost_vector=None,
):
    """Worst-case expected utility of k over the polytope, by direct LP.

    Returns (value, minimizing distribution).  A scenario outside the
    utility domain sends the value to -inf whenever the polytope can put
    mass on it.
    """
    if cost_vector is None:
        cost_vector = np.zeros(scen.n)
    q = exact_q(u, scen, k, k_prev, cost_vector)
    bad = ~np.isfinite(q)
    if np.any(bad):
        j = int(np.flatnonzero(bad)[0])
        # can the polytope weight scenario j at all?
        c_probe = np.zeros(scen.m)
        c_probe[j] = -1.0
        res = _polytope_lp(amb, c_probe)
        if res.x is not None and res.x[j] > 1e-12:
            return -math.inf, res.x
        q = q.copy()
        q[bad] = 0.0  # forced-zero-mass scenarios cannot matter
    res = _polytope_lp(amb, q)
    if res.status != 0:
        raise RuntimeError("inner worst-case LP failed on a certified-nonempty set")
    return float(res.fun), res.x


def _polytope_lp(amb: PolyhedralAmbiguitySet, objective):
    a_eq = np.vstack([amb.A0, np.ones((1, amb.m))])
    b_eq = np.concatenate([amb.d0, [1.0]])
    return linprog(
        c=objective,
        A_ub=amb.A1 if amb.n_ineq else None,
        b_ub=amb.d1 if amb.n_ineq else None,
        A_eq=a_eq,
        b_eq=b_eq,
        bounds=(0.0, None),
        method="highs",
    )


def contamination_vertices(p_hat, gamma: float) -> np.ndarray:
    """All vertices of the contamination polytope: (1-gamma) p_hat + gamma e_j."""
    p_hat = np.asarray(p_hat, dtype=float)
    m = p_hat.size
    return (1.0 - gamma) * p_hat[None, :] + gamma * np.eye(m)


def duality_gap(
    k, sol: robust_lp.LpSolution, scen: ScenarioSet,
    amb: PolyhedralAmbiguitySet, u: SeparableUtility,
) -> float:
    """Distance between the direct worst case at k and the dual value.

    The dual value plugs the solved multipliers into
    min_j (q + A0'nu + A1'lam)_j - d0'nu - d1'lam with the exact q.
    """
    if sol.status != "optimal":
        raise robust_lp.SolutionStatusError("need an optimal solution")
    k_prev = sol.provenance["k_prev"]
    cost_vector = sol.provenance["cost_vector"]
    q = exact_q(u, scen, k, k_prev, cost_vector)
    inner, _ = inner_worst_case(k, k_prev, scen, amb, u, cost_vector)
    shifted = q.copy()
    if amb.n_eq:
        shifted = shifted + amb.A0.T @ sol.nu
    if amb.n_ineq:
        shifted = shifted + amb.A1.T @ sol.lam
    dual_val = float(shifted.min())
    if amb.n_eq:
        dual_val -= float(amb.d0 @ sol.nu)
    if amb.n_ineq:
        dual_val -= float(amb.d1 @ sol.lam)
    return abs(inner - dual_val)


# ---------------------------------------------------------------------------
# exact small-instance solve by grid search
# ---------------------------------------------------------------------------


def _axis_values(lo: float, hi: float, step: float) -> np.ndarray:
    # integer-indexed grid so that 0 is always on it
    lo_i = math.ceil(round(lo / step, 9))
    hi_i = math.floor(round(hi / step, 9))
    return np.arange(lo_i, hi_i + 1) * step


def exact_small_solve(
    scen: ScenarioSet,
    amb: PolyhedralAmbiguitySet,
    con: TradingConstraintSet,
    k_prev,
    u: SeparableUtility,
    grid_step: float = 1e-3,
):
    """Maximize the exact worst-case objective by dense grid search.

    Only for n <= 3; refuses outright when the grid would be too large.
    The returned value is recomputed at the winning point through the
    worst-case LP, so the scan and the LP route must agree.
    """
    n = scen.n
    if n > 3:
        raise ComplexityError("exact solve is limited to n <= 3 assets")
    if grid_step > 1e-3:
        raise ValueError("grid step must be at most 1e-3")
    k_prev = np.asarray(k_prev, dtype=float)
    lev = con.leverage
    axes = []
    for i in range(n):
        lo = -lev if con.allow_short else 0.0
        hi = lev
        if con.holding_caps is not None:
            lo = max(lo, -float(con.holding_caps[i]) if con.allow_short else 0.0)
            hi = min(hi, float(con.holding_caps[i]))
        axes.append(_axis_values(lo, hi, grid_step))
    total = int(np.prod([ax.size for ax in axes], dtype=np.int64))
    if total > _GRID_POINT_CAP:
        raise ComplexityError(f"grid of {total} points exceeds the cap")
    if amb.gamma is None and total > _LP_POINT_CAP:
        raise ComplexityError(
            "general polytopes need one LP per grid point; grid too large"
        )

    mesh = np.meshgrid(*axes, indexing="ij")
    K = np.stack([g.ravel() for g in mesh], axis=1)
    feas = np.abs(K).sum(axis=1) <= lev + 1e-12
    down = np.abs(np.minimum(0.0, scen.x_min))
    up = np.maximum(0.0, scen.x_max)
    feas &= (
        np.maximum(K, 0.0) @ down + np.maximum(-K, 0.0) @ up
    ) <= 1.0 + 1e-12
    costs = np.abs(K - k_prev[None, :]) @ con.cost_vector
    feas &= costs <= con.turnover_cost_limit + 1e-12
    K = K[feas]
    costs = costs[feas]
    if K.shape[0] == 0:
        raise ValueError("no feasible grid point")

    best_val = -math.inf
    best_k = None
    Xt = scen.scenarios.T
    chunk = max(1, int(2_000_000 // max(1, scen.m)))
    for s in range(0, K.shape[0], chunk):
        Kc = K[s : s + chunk]
        cc = costs[s : s + chunk]
        rets = Kc @ Xt
        valid = (rets > -1.0).all(axis=1) & (cc < 1.0)
        if not np.any(valid):
            continue
        vals = np.full(Kc.shape[0], -np.inf)
        rv = rets[valid]
        q = u.alpha * u.phi1(rv) + u.beta * u.phi2(cc[valid])[:, None]
        if amb.gamma is not None:
            inner = (1.0 - amb.gamma) * (q @ amb.p_hat) + amb.gamma * q.min(axis=1)
        else:
            inner = np.array(
                [
                    _polytope_lp(amb, q[t]).fun
                    for t in range(q.shape[0])
                ]
            )
        vals[valid] = inner
        t = int(np.argmax(vals))
        if vals[t] > best_val:
            best_val = float(vals[t])
            best_k = Kc[t].copy()
    if best_k is None:
        raise ValueError("every feasible grid point left the utility domain")
    value, _ = inner_worst_case(best_k, k_prev, scen, amb, u, con.cost_vector)
    return best_k, value


# ---------------------------------------------------------------------------
# randomized probes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProbeReport:
    name: str
    trials: int
    violations: tuple
    passed: bool

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "trials": self.trials,
            "violations": [repr(v) for v in self.violations[:5]],
            "violation_count": len(self.violations),
            "passed": self.passed,
        }


def _sample_feasible_weights(rng, scen: ScenarioSet, con: TradingConstraintSet):
    n = scen.n
    down = np.abs(np.minimum(0.0, scen.x_min))
    up = np.maximum(0.0, scen.x_max)
    for _ in range(1000):
        direction = rng.standard_normal(n)
        if not con.allow_short:
            direction = np.abs(direction)
        norm = np.abs(direction).sum()
        if norm == 0:
            continue
        k = direction / norm * con.leverage * rng.uniform(0.0, 1.0)
        if con.holding_caps is not None:
            k = np.clip(k, -con.holding_caps, con.holding_caps)
        exposure = np.maximum(k, 0.0) @ down + np.maximum(-k, 0.0) @ up
        if exposure <= 0.99:
            return k
    raise RuntimeError("could not sample a feasible portfolio")


def concavity_probe(
    u: SeparableUtility,
    scen: ScenarioSet,
    trials: int,
    seed: int = 0,
    con: TradingConstraintSet | None = None,
    slack: float = 1e-9,
) -> ProbeReport:
    """Randomized check that the empirical objective is jointly concave.

    Samples feasible pairs (k, k_prev) twice, mixes them, and compares the
    objective at the mixture with the mixed objective values.
    """
    if trials < 100:
        raise ValueError("need at least 100 trials")
    if con is None:
        con = TradingConstraintSet.uniform(
            scen.n, leverage=1.5, cost_rate=0.001, turnover_cost_limit=0.5
        )
    rng = np.random.default_rng(seed)
    p_hat = scen.probabilities

    def j_value(k, k_prev):
        q = exact_q(u, scen, k, k_prev, con.cost_vector)
        if not np.all(np.isfinite(q)):
            return None
        return float(p_hat @ q)

    violations = []
    done = 0
    while done < trials:
        ka, kpa = (
            _sample_feasible_weights(rng, scen, con),
            _sample_feasible_weights(rng, scen, con),
        )
        kb, kpb = (
            _sample_feasible_weights(rng, scen, con),
            _sample_feasible_weights(rng, scen, con),
        )
        lam = rng.uniform(0.05, 0.95)
        va, vb = j_value(ka, kpa), j_value(kb, kpb)
        km, kpm = lam * ka + (1 - lam) * kb, lam * kpa + (1 - lam) * kpb
        vm = j_value(km, kpm)
        if va is None or vb is None or vm is None:
            continue
        done += 1
        if vm < lam * va + (1 - lam) * vb - slack:
            violations.append((ka, kpa, kb, kpb, lam, vm, lam * va + (1 - lam) * vb))
    return ProbeReport(
        name="joint_concavity",
        trials=trials,
        violations=tuple(violations),
        passed=not violations,
    )


def survival_probe(
    scen: ScenarioSet,
    con: TradingConstraintSet,
    trials: int,
    seed: int = 0,
) -> ProbeReport:
    """Account growth factors stay nonnegative for constraint-abiding weights."""
    rng = np.random.default_rng(seed)
    violations = []
    for _ in range(trials):
        k = _sample_feasible_weights(rng, scen, con)
        k_prev = _sample_feasible_weights(rng, scen, con)
        j = int(rng.integers(scen.m))
        cost = float(np.abs(k - k_prev) @ con.cost_vector)
        factor = (1.0 + float(k @ scen.scenarios[j])) * (1.0 - cost)
        if factor < 0.0:
            violations.append((k, k_prev, j, factor))
    return ProbeReport(
        name="survivability",
        trials=trials,
        violations=tuple(violations),
        passed=not violations,
    )


# ---------------------------------------------------------------------------
# packaged verification suites
# ---------------------------------------------------------------------------


def random_small_instance(
    rng,
    n_max: int = 5,
    m_max: int = 20,
    gamma_choices=(0.0, 0.3, 1.0),
    cost_rate: float = 0.0,
    allow_short: bool = True,
):
    """One random scenario set, contamination polytope, and constraint set."""
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(2, m_max + 1))
    X = rng.uniform(-0.15, 0.18, size=(m, n))
    scen = ScenarioSet(
        scenarios=X,
        probabilities=np.full(m, 1.0 / m),
        x_min=X.min(axis=0),
        x_max=X.max(axis=0),
    )
    gamma = float(rng.choice(gamma_choices))
    amb = from_gamma(scen.probabilities, gamma)
    con = TradingConstraintSet.uniform(
        n,
        leverage=1.5,
        cost_rate=cost_rate,
        turnover_cost_limit=0.5 if cost_rate else 0.0,
        allow_short=allow_short,
    )
    return scen, amb, con


def _solve_robust(scen, amb, con, u, budget_total, k_prev=None, decomposed=False):
    k_prev = np.zeros(scen.n) if k_prev is None else k_prev
    maxabs = float(np.abs(scen.scenarios).max())
    x_hi = con.leverage * maxabs
    x_lo = max(-1.0 + 1e-6, -x_hi)
    if x_hi == 0.0:
        x_hi = x_lo = 0.0
    has_cost = float(con.cost_vector.max(initial=0.0)) > 0.0
    c_hi = con.turnover_cost_limit if has_cost else 0.0
    eps_c = min(budget_total * 0.5, 1e-5) if c_hi > 0 else budget_total * 0.5
    budget = ErrorBudget(eps_x=budget_total - eps_c, eps_c=eps_c)
    fam = build_family(u, x_lo, x_hi, 0.0, c_hi, budget)
    model = robust_lp.assemble(scen, fam, amb, con, k_prev, decomposed=decomposed)
    sol = robust_lp.solve(model)
    return sol, fam, model


def verify_duality(seed: int = 0, instances: int = 12, budget: float = 1e-8):
    """Dual value from the solved multipliers meets the direct worst case."""
    rng = np.random.default_rng(seed)
    u = SeparableUtility("log")
    worst = 0.0
    failures = []
    for t in range(instances):
        scen, amb, con = random_small_instance(rng)
        sol, _, _ = _solve_robust(scen, amb, con, u, budget)
        if sol.status != "optimal":
            failures.append((t, sol.status))
            continue
        gap = duality_gap(sol.weights, sol, scen, amb, u)
        worst = max(worst, gap)
        if gap > 1e-6 + budget:
            failures.append((t, gap))
    return {
        "passed": not failures,
        "instances": instances,
        "worst_gap": worst,
        "failures": failures,
    }


def verify_inner(seed: int = 0, trials: int = 100):
    """Closed-form and vertex views of the contamination worst case match the LP."""
    rng = np.random.default_rng(seed)
    failures = []
    for t in range(trials):
        m = int(rng.integers(2, 8))
        q = rng.normal(0.0, 0.2, size=m)
        p_hat = rng.dirichlet(np.ones(m))
        gamma = float(rng.choice([0.0, 0.25, 0.5, 1.0]))
        amb = from_gamma(p_hat, gamma)
        res = _polytope_lp(amb, q)
        lp_val = float(res.fun)
        closed = contamination_worst_case(p_hat, gamma, q)
        vertex = float(min(contamination_vertices(p_hat, gamma) @ q))
        if abs(lp_val - closed) > 1e-9 or abs(lp_val - vertex) > 1e-9:
            failures.append((t, lp_val, closed, vertex))
    return {"passed": not failures, "trials": trials, "failures": failures}


def verify_approximation(seed: int = 0, instances: int = 6, fault: bool = False):
    """Small-instance sandwich: exact value <= cut-model value <= exact + budget."""
    rng = np.random.default_rng(seed)
    u = SeparableUtility("log")
    budget = 1e-5
    failures = []
    for t in range(instances):
        scen, amb, con = random_small_instance(rng, n_max=2, m_max=8)
        sol, fam, model = _solve_robust(scen, amb, con, u, budget)
        if fault:
            fam = type(fam)(
                a=fam.a,
                b=fam.b,
                gamma=-fam.gamma,
                x_points=fam.x_points,
                c_points=fam.c_points,
                counts=fam.counts,
                budget=fam.budget,
            )
        # tangency: every plane touches f at its anchor
        for l, xl in enumerate(fam.x_points):
            for r, cr in enumerate(fam.c_points):
                h = fam.a[l] * xl + fam.b[r] * cr + fam.gamma[l, r]
                if abs(h - u.eval_f(xl, cr)) > 1e-12:
                    failures.append(
                        (t, "hyperplane tangency broken", float(h))
                    )
                    break
            else:
                continue
            break
        if sol.status != "optimal":
            failures.append((t, "solve status", sol.status))
            continue
        k_star, exact_val = exact_small_solve(
            scen, amb, con, np.zeros(scen.n), u, grid_step=1e-3
        )
        slack = 2e-3 * (1.0 + con.leverage)  # grid-step times Lipschitz bound
        if not (exact_val - 1e-9 <= sol.objective <= exact_val + budget + slack):
            failures.append((t, "sandwich", exact_val, sol.objective))
    return {"passed": not failures, "instances": instances, "failures": failures}


def run_all(seed: int = 0, fault: bool = False, suites=None) -> dict:
    """Run the named verification suites; default runs everything."""
    registry = {
        "duality": lambda: verify_duality(seed),
        "inner": lambda: verify_inner(seed),
        "approximation": lambda: verify_approximation(seed, fault=fault),
        "concavity": lambda: _concavity_suite(seed),
        "survivability": lambda: _survival_suite(seed),
    }
    if suites is None:
        suites = list(registry)
    unknown = [s for s in suites if s not in registry]
    if unknown:
        raise ValueError(f"unknown suites: {unknown}")
    results = {name: registry[name]() for name in suites}
    for name, rep in results.items():
        if isinstance(rep, ProbeReport):
            results[name] = rep.to_dict()
    passed = all(r["passed"] for r in results.values())
    return {"passed": passed, "suites": results}


def _make_probe_scenarios(seed: int, n: int = 3, m: int = 12) -> ScenarioSet:
    rng = np.random.default_rng(seed)
    X = rng.uniform(-0.12, 0.15, size=(m, n))
    return ScenarioSet(
        scenarios=X,
        probabilities=np.full(m, 1.0 / m),
        x_min=X.min(axis=0),
        x_max=X.max(axis=0),
    )


def _concavity_suite(seed: int) -> dict:
    scen = _make_probe_scenarios(seed)
    rep_log = concavity_probe(SeparableUtility("log"), scen, 300, seed=seed)
    rep_pow = concavity_probe(
        SeparableUtility("power", delta=0.5), scen, 300, seed=seed + 1
    )
    return {
        "passed": rep_log.passed and rep_pow.passed,
        "log": rep_log.to_dict(),
        "power": rep_pow.to_dict(),
    }


def _survival_suite(seed: int) -> dict:
    scen = _make_probe_scenarios(seed + 7)
    con = TradingConstraintSet.uniform(
        scen.n, leverage=1.5, cost_rate=0.005, turnover_cost_limit=0.5
    )
    rep = survival_probe(scen, con, 1000, seed=seed)
    return rep.to_dict()
