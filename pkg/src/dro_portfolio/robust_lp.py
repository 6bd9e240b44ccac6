"""Assembly and solution of the worst-case rebalance linear program.

One rebalance solves

    max over (K, u, Z, W, nu, lam) of  W - d0'nu - d1'lam

subject to trading constraints on K = K+ - K-, turnover magnitudes u,
tangent-plane cuts linking Z to the approximated utility at each
scenario, and the link rows W <= Z_j + (A0'nu + A1'lam)_j with lam >= 0.
The maximizing K is the robust portfolio for the polyhedral family of
scenario probabilities.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .ambiguity import PolyhedralAmbiguitySet
from .data import ScenarioSet
from .partition import HyperplaneFamily


class AssemblyError(ValueError):
    """Inconsistent dimensions or an infeasible previous portfolio."""


class SolutionStatusError(RuntimeError):
    """An operation that needs an optimal solution got something else."""


@dataclass(frozen=True)
class TradingConstraintSet:
    """Leverage, holding caps, turnover cost limit, and cost rates."""

    leverage: float
    cost_vector: np.ndarray
    turnover_cost_limit: float
    holding_caps: np.ndarray | None = None
    allow_short: bool = True

    def __post_init__(self):
        object.__setattr__(
            self, "cost_vector", np.asarray(self.cost_vector, dtype=float)
        )
        if self.holding_caps is not None:
            object.__setattr__(
                self, "holding_caps", np.asarray(self.holding_caps, dtype=float)
            )
        if self.leverage < 1.0:
            raise ValueError("leverage must be at least 1")
        if not 0.0 <= self.turnover_cost_limit < 1.0:
            raise ValueError("turnover cost limit must lie in [0, 1)")
        if np.any(self.cost_vector < 0) or np.any(self.cost_vector >= 1):
            raise ValueError("cost rates must lie in [0, 1)")
        if self.holding_caps is not None and np.any(self.holding_caps < 0):
            raise ValueError("holding caps must be nonnegative")

    @classmethod
    def uniform(
        cls,
        n: int,
        leverage: float,
        cost_rate: float,
        turnover_cost_limit: float,
        holding_caps=None,
        allow_short: bool = True,
    ) -> "TradingConstraintSet":
        return cls(
            leverage=leverage,
            cost_vector=np.full(n, cost_rate),
            turnover_cost_limit=turnover_cost_limit,
            holding_caps=holding_caps,
            allow_short=allow_short,
        )


@dataclass(frozen=True)
class DecisionLayout:
    """Index ranges of each variable group inside the LP vector."""

    kp: slice
    km: slice
    u: slice
    z: slice
    w: int
    nu: slice
    lam: slice
    s: int | None
    nv: int

    @classmethod
    def build(cls, n: int, m: int, m0: int, m1: int, with_s: bool) -> "DecisionLayout":
        o = 0
        kp = slice(o, o + n); o += n
        km = slice(o, o + n); o += n
        u = slice(o, o + n); o += n
        z = slice(o, o + m); o += m
        w = o; o += 1
        nu = slice(o, o + m0); o += m0
        lam = slice(o, o + m1); o += m1
        s = None
        if with_s:
            s = o; o += 1
        return cls(kp=kp, km=km, u=u, z=z, w=w, nu=nu, lam=lam, s=s, nv=o)


@dataclass(frozen=True)
class RobustLpModel:
    """Sparse inequality system, bounds, and maximization objective."""

    A_ub: sp.csr_matrix
    b_ub: np.ndarray
    bounds: tuple
    c_max_objective: np.ndarray
    layout: DecisionLayout
    row_sections: dict
    provenance: dict

    @property
    def n_rows(self) -> int:
        return int(self.A_ub.shape[0])


@dataclass(frozen=True)
class LpSolution:
    """Solved rebalance: weights, objective, dual multipliers, diagnostics."""

    status: str
    weights: np.ndarray | None
    objective: float | None
    nu: np.ndarray | None
    lam: np.ndarray | None
    iterations: int
    solve_time: float
    x: np.ndarray | None
    residual: float | None
    certificate_row: int | None
    provenance: dict


def _check_prev_feasible(con: TradingConstraintSet, scen: ScenarioSet, k_prev):
    tol = 1e-9
    k_prev = np.asarray(k_prev, dtype=float)
    if np.abs(k_prev).sum() > con.leverage + tol:
        raise AssemblyError("previous weights violate the leverage bound")
    if not con.allow_short and np.any(k_prev < -tol):
        raise AssemblyError("previous weights are short but shorting is off")
    if con.holding_caps is not None and np.any(
        np.abs(k_prev) > con.holding_caps + tol
    ):
        raise AssemblyError("previous weights violate a holding cap")
    down = np.abs(np.minimum(0.0, scen.x_min))
    up = np.maximum(0.0, scen.x_max)
    exposure = np.maximum(k_prev, 0.0) @ down + np.maximum(-k_prev, 0.0) @ up
    if exposure > 1.0 + tol:
        raise AssemblyError("previous weights violate the survival bound")


def assemble(
    scen: ScenarioSet,
    fam: HyperplaneFamily,
    amb: PolyhedralAmbiguitySet,
    con: TradingConstraintSet,
    k_prev,
    decomposed: bool = False,
) -> RobustLpModel:
    """Build the rebalance LP.

    The default formulation enumerates one cut per (scenario, x-anchor,
    c-anchor) triple.  With decomposed=True the cost leg gets a single
    shared epigraph scalar, which shrinks the cut count from m*L*R to
    m*L + R; both formulations have identical optima because the plane
    intercepts split additively across the two legs.
    """
    X = scen.scenarios
    m, n = X.shape
    if amb.m != m:
        raise AssemblyError("ambiguity set and scenario set disagree on m")
    if con.cost_vector.shape != (n,):
        raise AssemblyError("cost vector length does not match asset count")
    k_prev = np.asarray(k_prev, dtype=float)
    if k_prev.shape != (n,):
        raise AssemblyError("previous weights length does not match asset count")
    _check_prev_feasible(con, scen, k_prev)

    a = fam.a
    b = fam.b
    gamma = fam.gamma
    L, R = a.size, b.size
    m0, m1 = amb.n_eq, amb.n_ineq
    layout = DecisionLayout.build(n, m, m0, m1, with_s=decomposed)
    nv = layout.nv
    C = con.cost_vector

    blocks = []
    rhs = []
    sections = {}
    row_at = 0

    def push(block, rvec, name):
        nonlocal row_at
        blocks.append(block)
        rhs.append(rvec)
        sections[name] = (row_at, row_at + block.shape[0])
        row_at += block.shape[0]

    if not decomposed:
        # cut rows (j, l, r): z_j - a_l K'x^j - b_r C'u <= gamma_{l,r}
        rows_h = m * L * R
        A_h = np.zeros((rows_h, nv))
        k_coef = (a[None, :, None] * X[:, None, :]).reshape(m * L, 1, n)
        k_coef = np.broadcast_to(k_coef, (m * L, R, n)).reshape(rows_h, n)
        A_h[:, layout.kp] = -k_coef
        A_h[:, layout.km] = k_coef
        u_coef = np.broadcast_to(
            (b[:, None] * C[None, :])[None, :, :], (m * L, R, n)
        ).reshape(rows_h, n)
        A_h[:, layout.u] = -u_coef
        z_rows = np.repeat(np.arange(m), L * R)
        A_h[np.arange(rows_h), layout.z.start + z_rows] = 1.0
        push(A_h, np.broadcast_to(gamma[None], (m, L, R)).reshape(rows_h), "cuts")
    else:
        # the intercept matrix splits as gamma_{l,r} = A_l + B_r; pick the
        # split anchored at gamma[0, 0]
        A_l = gamma[:, 0].copy()
        B_c = gamma[0, :] - gamma[0, 0]
        # return-leg cuts (j, l): z_j - s - a_l K'x^j <= A_l
        rows_x = m * L
        A_hx = np.zeros((rows_x, nv))
        k_coef = (a[None, :, None] * X[:, None, :]).reshape(rows_x, n)
        A_hx[:, layout.kp] = -k_coef
        A_hx[:, layout.km] = k_coef
        z_rows = np.repeat(np.arange(m), L)
        A_hx[np.arange(rows_x), layout.z.start + z_rows] = 1.0
        A_hx[:, layout.s] = -1.0
        push(A_hx, np.tile(A_l, m), "cuts_x")
        # cost-leg cuts (r): s - b_r C'u <= B_r
        A_hc = np.zeros((R, nv))
        A_hc[:, layout.u] = -(b[:, None] * C[None, :])
        A_hc[:, layout.s] = 1.0
        push(A_hc, B_c.copy(), "cuts_c")

    # link rows: w - z_j - (A0'nu + A1'lam)_j <= 0
    A_link = np.zeros((m, nv))
    A_link[:, layout.w] = 1.0
    A_link[np.arange(m), layout.z.start + np.arange(m)] = -1.0
    if m0:
        A_link[:, layout.nu] = -amb.A0.T
    if m1:
        A_link[:, layout.lam] = -amb.A1.T
    push(A_link, np.zeros(m), "link")

    # leverage: sum(kp + km) <= L
    A_lev = np.zeros((1, nv))
    A_lev[0, layout.kp] = 1.0
    A_lev[0, layout.km] = 1.0
    push(A_lev, np.array([con.leverage]), "leverage")

    if con.holding_caps is not None:
        A_cap = np.zeros((n, nv))
        A_cap[np.arange(n), layout.kp.start + np.arange(n)] = 1.0
        A_cap[np.arange(n), layout.km.start + np.arange(n)] = 1.0
        push(A_cap, con.holding_caps.astype(float), "holding")

    # survival: worst joint drawdown cannot wipe the account
    A_srv = np.zeros((1, nv))
    A_srv[0, layout.kp] = np.abs(np.minimum(0.0, scen.x_min))
    A_srv[0, layout.km] = np.maximum(0.0, scen.x_max)
    push(A_srv, np.array([1.0]), "survival")

    # turnover epigraph: +-(K - K_prev) <= u
    A_tp = np.zeros((n, nv))
    A_tp[np.arange(n), layout.kp.start + np.arange(n)] = 1.0
    A_tp[np.arange(n), layout.km.start + np.arange(n)] = -1.0
    A_tp[np.arange(n), layout.u.start + np.arange(n)] = -1.0
    push(A_tp, k_prev.astype(float), "turnover_pos")
    A_tn = np.zeros((n, nv))
    A_tn[np.arange(n), layout.kp.start + np.arange(n)] = -1.0
    A_tn[np.arange(n), layout.km.start + np.arange(n)] = 1.0
    A_tn[np.arange(n), layout.u.start + np.arange(n)] = -1.0
    push(A_tn, -k_prev.astype(float), "turnover_neg")

    # cost limit: C'u <= c_max
    A_cl = np.zeros((1, nv))
    A_cl[0, layout.u] = C
    push(A_cl, np.array([con.turnover_cost_limit]), "cost_limit")

    A_ub = sp.csr_matrix(np.vstack(blocks))
    b_ub = np.concatenate(rhs)

    c_obj = np.zeros(nv)
    c_obj[layout.w] = 1.0
    if m0:
        c_obj[layout.nu] = -amb.d0
    if m1:
        c_obj[layout.lam] = -amb.d1

    bounds = (
        [(0.0, None)] * n
        + ([(0.0, None)] * n if con.allow_short else [(0.0, 0.0)] * n)
        + [(0.0, None)] * n
        + [(None, None)] * m
        + [(None, None)]
        + [(None, None)] * m0
        + [(0.0, None)] * m1
        + ([(None, None)] if decomposed else [])
    )

    provenance = {
        "formulation": "decomposed" if decomposed else "product",
        "counts": (L - 1, R - 1),
        "n": n,
        "m": m,
        "cost_vector": C.copy(),
        "k_prev": k_prev.copy(),
        "leverage": con.leverage,
        "risk_free_index": scen.risk_free_index,
        "d0": amb.d0.copy(),
        "d1": amb.d1.copy(),
    }
    return RobustLpModel(
        A_ub=A_ub,
        b_ub=b_ub,
        bounds=tuple(bounds),
        c_max_objective=c_obj,
        layout=layout,
        row_sections=sections,
        provenance=provenance,
    )


def expected_row_count(
    m: int, n: int, counts: tuple, holding: bool, decomposed: bool = False
) -> int:
    """Closed-form row total for the assembled system."""
    L, R = counts[0] + 1, counts[1] + 1
    cuts = m * L + R if decomposed else m * L * R
    return cuts + m + 1 + (n if holding else 0) + 1 + 2 * n + 1


def solve(model: RobustLpModel) -> LpSolution:
    """Solve the assembled LP; deterministic for a fixed model."""
    t0 = time.perf_counter()
    res = linprog(
        c=-model.c_max_objective,
        A_ub=model.A_ub,
        b_ub=model.b_ub,
        bounds=list(model.bounds),
        method="highs",
    )
    elapsed = time.perf_counter() - t0
    iterations = int(getattr(res, "nit", 0) or 0)
    if res.status == 2:
        return LpSolution(
            status="infeasible",
            weights=None,
            objective=None,
            nu=None,
            lam=None,
            iterations=iterations,
            solve_time=elapsed,
            x=None,
            residual=None,
            certificate_row=_diagnose_infeasible(model),
            provenance=model.provenance,
        )
    if res.status == 3:
        return LpSolution(
            status="unbounded",
            weights=None,
            objective=None,
            nu=None,
            lam=None,
            iterations=iterations,
            solve_time=elapsed,
            x=None,
            residual=None,
            certificate_row=None,
            provenance=model.provenance,
        )
    if res.status != 0:
        return LpSolution(
            status="numerical",
            weights=None,
            objective=None,
            nu=None,
            lam=None,
            iterations=iterations,
            solve_time=elapsed,
            x=None,
            residual=None,
            certificate_row=None,
            provenance=model.provenance,
        )
    x = res.x
    lay = model.layout
    residual = float(max(0.0, np.max(model.A_ub @ x - model.b_ub, initial=0.0)))
    weights = x[lay.kp] - x[lay.km]
    return LpSolution(
        status="optimal",
        weights=weights,
        objective=float(model.c_max_objective @ x),
        nu=x[lay.nu].copy(),
        lam=x[lay.lam].copy(),
        iterations=iterations,
        solve_time=elapsed,
        x=x,
        residual=residual,
        certificate_row=None,
        provenance=model.provenance,
    )


def _diagnose_infeasible(model: RobustLpModel) -> int | None:
    """Elastic relaxation; the first row needing slack indexes the conflict."""
    n_rows = model.n_rows
    nv = model.layout.nv
    A = sp.hstack([model.A_ub, -sp.eye(n_rows, format="csr")], format="csr")
    c = np.concatenate([np.zeros(nv), np.ones(n_rows)])
    bounds = list(model.bounds) + [(0.0, None)] * n_rows
    res = linprog(
        c=c, A_ub=A, b_ub=model.b_ub, bounds=bounds, method="highs"
    )
    if res.status != 0:
        return None
    slack = res.x[nv:]
    hot = np.flatnonzero(slack > 1e-9)
    return int(hot[0]) if hot.size else None


def extract_weights(sol: LpSolution, layout: DecisionLayout):
    """Portfolio weights plus turnover, leverage, and investment diagnostics."""
    if sol.status != "optimal":
        raise SolutionStatusError(f"solution status is {sol.status}, not optimal")
    x = sol.x
    k = x[layout.kp] - x[layout.km]
    C = sol.provenance["cost_vector"]
    k_prev = sol.provenance["k_prev"]
    rf = sol.provenance.get("risk_free_index")
    risky = np.ones(k.size, dtype=bool)
    if rf is not None:
        risky[rf] = False
    diagnostics = {
        "turnover_cost": float(x[layout.u] @ C),
        "turnover_l1": float(np.abs(k - k_prev).sum()),
        "realized_cost": float(np.abs(k - k_prev) @ C),
        "leverage_usage": float(
            (x[layout.kp].sum() + x[layout.km].sum())
            / sol.provenance["leverage"]
        ),
        "invested_weight": float(k[risky].sum()),
    }
    return k, diagnostics


def recompute_objective(sol: LpSolution, layout: DecisionLayout) -> float:
    """W - d0'nu - d1'lam straight from the solution vector."""
    if sol.status != "optimal":
        raise SolutionStatusError("need an optimal solution")
    x = sol.x
    val = x[layout.w]
    d0 = sol.provenance["d0"]
    d1 = sol.provenance["d1"]
    if d0.size:
        val -= d0 @ x[layout.nu]
    if d1.size:
        val -= d1 @ x[layout.lam]
    return float(val)


def to_lp_text(model: RobustLpModel) -> str:
    """Plain LP-format dump for cross-checking with external solvers."""
    lay = model.layout
    names = np.empty(lay.nv, dtype=object)
    for i in range(lay.kp.start, lay.kp.stop):
        names[i] = f"kp{i - lay.kp.start}"
    for i in range(lay.km.start, lay.km.stop):
        names[i] = f"km{i - lay.km.start}"
    for i in range(lay.u.start, lay.u.stop):
        names[i] = f"u{i - lay.u.start}"
    for i in range(lay.z.start, lay.z.stop):
        names[i] = f"z{i - lay.z.start}"
    names[lay.w] = "w"
    for i in range(lay.nu.start, lay.nu.stop):
        names[i] = f"nu{i - lay.nu.start}"
    for i in range(lay.lam.start, lay.lam.stop):
        names[i] = f"lam{i - lay.lam.start}"
    if lay.s is not None:
        names[lay.s] = "s"

    def terms(coefs, idx):
        parts = []
        for j, v in zip(idx, coefs):
            if v == 0:
                continue
            sign = "+" if v >= 0 else "-"
            parts.append(f"{sign} {abs(v):.17g} {names[j]}")
        return " ".join(parts) if parts else "+ 0 w"

    lines = ["Maximize", " obj: " + terms(model.c_max_objective, range(lay.nv))]
    lines.append("Subject To")
    A = model.A_ub.tocsr()
    for r in range(model.n_rows):
        row = A.getrow(r)
        lines.append(
            f" r{r}: " + terms(row.data, row.indices) + f" <= {model.b_ub[r]:.17g}"
        )
    lines.append("Bounds")
    for i, (lo, hi) in enumerate(model.bounds):
        lo_s = "-inf" if lo is None else f"{lo:.17g}"
        hi_s = "+inf" if hi is None else f"{hi:.17g}"
        lines.append(f" {lo_s} <= {names[i]} <= {hi_s}")
    lines.append("End")
    return "\n".join(lines)
