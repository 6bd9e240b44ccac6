"""Equal-error partitions and supporting-hyperplane families.

A concave separable utility f(x, c) = alpha * phi1(x) + beta * phi2(c) is
approximated from above by tangent planes anchored at partition points of
the x and c axes.  Partition points are spaced so that the approximation
error on every interval equals the per-axis budget, which makes the
partition minimal for that budget.  The module also certifies error on
dense grids and reproduces the effect of removing a single tangent plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .utility import SeparableUtility

_MAX_POINTS = 1_000_000


class BracketError(RuntimeError):
    """A scalar root bracket could not be established or has no sign change."""


class NumericalError(RuntimeError):
    """A formula produced a non-finite intermediate."""


@dataclass(frozen=True)
class ErrorBudget:
    """Per-axis approximation error tolerances; total budget is their sum."""

    eps_x: float
    eps_c: float

    def __post_init__(self):
        if not (self.eps_x > 0 and self.eps_c > 0):
            raise ValueError("error budgets must be positive")

    @property
    def total(self) -> float:
        return self.eps_x + self.eps_c


@dataclass(frozen=True)
class Partition:
    """Ordered anchor points on one axis, endpoints pinned to the box."""

    points: np.ndarray
    axis: str

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        object.__setattr__(self, "points", pts)
        if self.axis not in ("x", "c"):
            raise ValueError("axis must be 'x' or 'c'")
        if pts.ndim != 1 or pts.size < 1:
            raise ValueError("partition needs at least one point")
        if pts.size > 1 and not np.all(np.diff(pts) > 0):
            raise ValueError("partition points must be strictly increasing")
        if self.axis == "x" and pts[0] <= -1.0:
            raise ValueError("x-axis points must exceed -1")
        if self.axis == "c" and (pts[0] < 0.0 or pts[-1] >= 1.0):
            raise ValueError("c-axis points must lie in [0, 1)")

    @property
    def M(self) -> int:
        """Point count."""
        return int(self.points.size)


@dataclass(frozen=True)
class HyperplaneFamily:
    """Tangent planes h_{l,r}(x, c) = a_l x + b_r c + gamma_{l,r}."""

    a: np.ndarray
    b: np.ndarray
    gamma: np.ndarray
    x_points: np.ndarray
    c_points: np.ndarray
    counts: tuple
    budget: ErrorBudget | None = None

    def plane_min(self, x: float, c: float) -> float:
        """min over (l, r) of a_l x + b_r c + gamma_{l,r} at one point."""
        vals = self.a[:, None] * x + self.b[None, :] * c + self.gamma
        return float(vals.min())


# ---------------------------------------------------------------------------
# scalar root finding
# ---------------------------------------------------------------------------


def _bisect(fn, lo, hi, tol=1e-14, max_iter=200):
    """Plain bisection on [lo, hi]; fn(lo) and fn(hi) must differ in sign."""
    flo = fn(lo)
    fhi = fn(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise BracketError(f"no sign change on [{lo}, {hi}]")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fmid = fn(mid)
        if fmid == 0.0 or (hi - lo) <= tol:
            return mid
        if (fmid > 0) == (flo > 0):
            lo, flo = mid, fmid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _grow_bracket(fn, hi0, cap=None, want_positive=True):
    """Double hi0 until fn changes to the wanted sign; respect an upper cap."""
    hi = hi0
    for _ in range(200):
        if cap is not None and hi > cap:
            hi = cap
        v = fn(hi)
        if (v > 0) == want_positive and v != 0.0:
            return hi
        if cap is not None and hi >= cap:
            raise BracketError("no sign change inside the domain cap")
        hi *= 2.0
    raise BracketError("bracket growth did not terminate")


# ---------------------------------------------------------------------------
# pointwise error functions and crossing points
# ---------------------------------------------------------------------------


def error_x(u: SeparableUtility, x_l: float, x) -> float | np.ndarray:
    """Gap between the tangent at x_l and alpha*phi1 at x; >= 0 by concavity."""
    a_l = u.alpha * u.phi1_prime(x_l)
    return a_l * (np.asarray(x, dtype=float) - x_l) + u.alpha * (
        u.phi1(x_l) - u.phi1(x)
    )


def error_c(u: SeparableUtility, c_r: float, c) -> float | np.ndarray:
    """Gap between the tangent at c_r and beta*phi2 at c; >= 0 by concavity."""
    b_r = u.beta * u.phi2_prime(c_r)
    return b_r * (np.asarray(c, dtype=float) - c_r) + u.beta * (
        u.phi2(c_r) - u.phi2(c)
    )


def crossing_point_x(u: SeparableUtility, x_p: float, x_next: float) -> float:
    """Point in (x_p, x_next) where the two tangent errors are equal."""
    if not x_p < x_next:
        raise ValueError("need x_p < x_next")
    g_p = u.phi1_prime(x_p)
    g_n = u.phi1_prime(x_next)
    num = g_p * x_p - g_n * x_next + u.phi1(x_next) - u.phi1(x_p)
    den = g_p - g_n
    x_star = num / den
    if not math.isfinite(x_star):
        raise NumericalError("degenerate slope difference in crossing point")
    return float(x_star)


def crossing_point_c(u: SeparableUtility, c_q: float, c_next: float) -> float:
    """c-axis analogue of crossing_point_x."""
    if not c_q < c_next:
        raise ValueError("need c_q < c_next")
    g_q = u.phi2_prime(c_q)
    g_n = u.phi2_prime(c_next)
    num = g_q * c_q - g_n * c_next + u.phi2(c_next) - u.phi2(c_q)
    den = g_q - g_n
    c_star = num / den
    if not math.isfinite(c_star):
        raise NumericalError("degenerate slope difference in crossing point")
    return float(c_star)


# ---------------------------------------------------------------------------
# successive partition points
# ---------------------------------------------------------------------------


def next_point_general(u: SeparableUtility, p: float, eps: float, axis: str = "x") -> float:
    """Next equal-error anchor after p for an arbitrary concave family.

    The step splits into a left part (error of the tangent at p reaches
    eps at p + left) and a right part (the tangent at the new point has
    the same error at the split).  Both parts solve monotone scalar
    equations by bisection.

    Parameters
    ----------
    u : SeparableUtility
    p : float
        Current anchor point.
    eps : float
        Per-axis error budget, in utility units.
    axis : str
        "x" for the return leg, "c" for the cost leg.

    Returns
    -------
    float
        The next anchor; may overshoot the caller's box, in which case the
        caller clamps.  On the c axis the value is capped below 1.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if axis == "x":
        phi, dphi, scale = u.phi1, u.phi1_prime, u.alpha
        cap = None
    elif axis == "c":
        phi, dphi, scale = u.phi2, u.phi2_prime, u.beta
        cap = (1.0 - p) - 1e-12
    else:
        raise ValueError("axis must be 'x' or 'c'")
    target = eps / scale
    slope_p = dphi(p)
    val_p = phi(p)

    def g(step):
        # tangent-at-p error at p + step, in phi units
        return slope_p * step - (phi(p + step) - val_p) - target

    try:
        hi = _grow_bracket(g, math.sqrt(target), cap=cap)
    except BracketError:
        # tangent at p stays within budget through the whole domain
        return p + cap if cap is not None else math.inf
    left = _bisect(g, 1e-300, hi)
    split = p + left

    def h(step):
        # budget minus the new tangent's error back at the split point
        q = split + step
        return step * dphi(q) - (phi(q) - val_p - left * slope_p)

    cap_h = None if cap is None else cap - left - 1e-12
    try:
        hi = _grow_bracket(h, math.sqrt(target), cap=cap_h, want_positive=False)
    except BracketError:
        return p + cap if cap is not None else math.inf
    right = _bisect(h, 1e-300, hi)
    return split + right


@lru_cache(maxsize=64)
def _log_step_x(eps_x: float) -> float:
    """Multiplicative step a with x_next = (1+a)x + a for the log family."""
    theta = lambda t: t - math.log(t) - 1.0
    hi = 1.0 + 10.0 * math.sqrt(2.0 * eps_x)
    if theta(hi) < eps_x:
        hi = _grow_bracket(lambda t: theta(t) - eps_x, hi)
    b_x = _bisect(lambda t: theta(t) - eps_x, 1.0 + 1e-300, hi)
    g = lambda a: (1.0 + a) / a * math.log1p(a) - b_x
    hi = _grow_bracket(g, 10.0 * math.sqrt(2.0 * eps_x))
    return _bisect(g, 1e-300, hi)


@lru_cache(maxsize=64)
def _log_step_c(eps_c: float) -> float:
    """Contraction step d with c_next = (1-d)c + d for the log family."""
    theta = lambda t: t - math.log(t) - 1.0
    # lower root of theta(t) = eps_c, strictly inside (0, 1)
    lo = 1.0 - 10.0 * math.sqrt(2.0 * eps_c)
    if lo <= 0 or theta(lo) < eps_c:
        lo = 1e-16
        while theta(lo) < eps_c:
            lo /= 2.0
    theta_c = _bisect(lambda t: theta(t) - eps_c, lo, 1.0 - 1e-300)
    # (1-d)/d * log(1/(1-d)) falls from 1 to 0 as d goes 0 to 1; the log1p
    # form survives tiny d without cancellation
    h = lambda d: (1.0 - d) / d * (-math.log1p(-d)) - theta_c
    return _bisect(h, 1e-300, 1.0 - 1e-12)


def next_point_log(x_p: float, eps_x: float) -> float:
    """Next anchor for the log return leg: (1 + a) x_p + a, a from the budget."""
    if eps_x <= 0:
        raise ValueError("eps_x must be positive")
    if x_p <= -1.0:
        raise ValueError("x_p must exceed -1")
    a = _log_step_x(float(eps_x))
    return (1.0 + a) * x_p + a


def next_point_log_c(c_q: float, eps_c: float) -> float:
    """Next anchor for the log cost leg: (1 - d) c_q + d, d from the budget."""
    if eps_c <= 0:
        raise ValueError("eps_c must be positive")
    if not 0.0 <= c_q < 1.0:
        raise ValueError("c_q must lie in [0, 1)")
    d = _log_step_c(float(eps_c))
    return (1.0 - d) * c_q + d


def build_partition(
    u: SeparableUtility, lo: float, hi: float, eps: float, axis: str
) -> Partition:
    """Anchor points from lo to hi with every interval at the error budget.

    Iterates the successive-point recursion from lo; the first generated
    point at or past hi is replaced by hi, so the last interval's error is
    at most the budget.  A degenerate box lo == hi yields a single point.
    """
    if lo > hi:
        raise ValueError("need lo <= hi")
    if lo == hi:
        return Partition(np.array([lo], dtype=float), axis)
    pts = [float(lo)]
    is_log = u.kind == "log"
    while pts[-1] < hi:
        if len(pts) >= _MAX_POINTS:
            raise NumericalError("partition exceeds the point cap; budget too small")
        if is_log:
            nxt = (
                next_point_log(pts[-1], eps)
                if axis == "x"
                else next_point_log_c(pts[-1], eps)
            )
        else:
            nxt = next_point_general(u, pts[-1], eps, axis)
        if nxt <= pts[-1]:
            raise NumericalError("partition step did not advance")
        if nxt >= hi:
            pts.append(float(hi))
            break
        pts.append(float(nxt))
    return Partition(np.array(pts), axis)


# ---------------------------------------------------------------------------
# hyperplane families
# ---------------------------------------------------------------------------


def build_hyperplanes(
    u: SeparableUtility,
    px: Partition,
    pc: Partition,
    budget: ErrorBudget | None = None,
) -> HyperplaneFamily:
    """Tangent-plane coefficients for the partition pair.

    a_l = alpha * phi1'(x_l), b_r = beta * phi2'(c_r), and gamma_{l,r}
    makes each plane touch f at (x_l, c_r).
    """
    if px.axis != "x" or pc.axis != "c":
        raise ValueError("expected an x partition and a c partition")
    xs = px.points
    cs = pc.points
    a = u.alpha * u.phi1_prime(xs)
    b = u.beta * u.phi2_prime(cs)
    ax_part = u.alpha * u.phi1(xs) - a * xs
    bc_part = u.beta * u.phi2(cs) - b * cs
    gamma = ax_part[:, None] + bc_part[None, :]
    return HyperplaneFamily(
        a=np.atleast_1d(a),
        b=np.atleast_1d(b),
        gamma=gamma,
        x_points=xs,
        c_points=cs,
        counts=(px.M - 1, pc.M - 1),
        budget=budget,
    )


def build_family(
    u: SeparableUtility,
    x_lo: float,
    x_hi: float,
    c_lo: float,
    c_hi: float,
    budget: ErrorBudget,
) -> HyperplaneFamily:
    """Partition both axes for the budget and emit the tangent planes."""
    px = build_partition(u, x_lo, x_hi, budget.eps_x, "x")
    pc = build_partition(u, c_lo, c_hi, budget.eps_c, "c")
    return build_hyperplanes(u, px, pc, budget)


def certify_error(
    u: SeparableUtility, fam: HyperplaneFamily, grid: int = 1000
) -> tuple:
    """Measured sup errors (per x axis, per c axis, joint 2-D).

    The joint sup scans the full 2-D grid against the pointwise minimum of
    every stored plane, without assuming the intercept matrix is separable,
    so corrupted coefficients are caught.
    """
    if grid < 1000:
        raise ValueError("grid must be at least 1000 points per axis")
    xs = np.linspace(fam.x_points[0], fam.x_points[-1], grid)
    cs = np.linspace(fam.c_points[0], fam.c_points[-1], grid)
    ax_lines = fam.a[:, None] * xs[None, :] + (
        u.alpha * u.phi1(fam.x_points) - fam.a * fam.x_points
    )[:, None]
    sup_x = float(np.max(ax_lines.min(axis=0) - u.alpha * u.phi1(xs)))
    bc_lines = fam.b[:, None] * cs[None, :] + (
        u.beta * u.phi2(fam.c_points) - fam.b * fam.c_points
    )[:, None]
    sup_c = float(np.max(bc_lines.min(axis=0) - u.beta * u.phi2(cs)))

    f_grid = u.alpha * u.phi1(xs)[:, None] + u.beta * u.phi2(cs)[None, :]
    min_h = np.full((grid, grid), np.inf)
    tmp = np.empty_like(min_h)
    for l in range(fam.a.size):
        ax = fam.a[l] * xs
        for r in range(fam.b.size):
            np.add(ax[:, None], fam.b[r] * cs[None, :] + fam.gamma[l, r], out=tmp)
            np.minimum(min_h, tmp, out=min_h)
    sup_joint = float(np.max(np.abs(f_grid - min_h)))
    return sup_x, sup_c, sup_joint


def removal_experiment(
    u: SeparableUtility, fam: HyperplaneFamily, which: int, axis: str
) -> float:
    """Per-axis sup error after deleting one interior anchor point.

    The new sup is the largest equal-error crossing value over the
    surviving consecutive anchor pairs; the pair that brackets the removed
    point contributes the enlarged value.
    """
    if axis == "x":
        pts = fam.x_points
        err, cross = error_x, crossing_point_x
    elif axis == "c":
        pts = fam.c_points
        err, cross = error_c, crossing_point_c
    else:
        raise ValueError("axis must be 'x' or 'c'")
    if not 0 < which < pts.size - 1:
        raise ValueError("only interior points can be removed")
    kept = np.delete(pts, which)
    sup = 0.0
    for left, right in zip(kept[:-1], kept[1:]):
        star = cross(u, float(left), float(right))
        sup = max(sup, float(err(u, float(left), star)))
    return sup
