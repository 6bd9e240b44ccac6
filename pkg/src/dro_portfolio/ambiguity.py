"""Polyhedral families of scenario probabilities.

An ambiguity set is a polyhedron inside the probability simplex,
described by equality rows A0 p = d0 and inequality rows A1 p <= d1.
The contamination family used throughout the experiments keeps every
scenario probability at least (1 - gamma) times its empirical value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog


class InfeasibleAmbiguityError(ValueError):
    """The polyhedron has no intersection with the probability simplex."""


@dataclass(frozen=True)
class PolyhedralAmbiguitySet:
    """Probability polytope {p in simplex : A0 p = d0, A1 p <= d1}.

    gamma and p_hat are recorded when the set was built by from_gamma;
    they enable closed-form worst-case evaluation in the oracles.
    """

    A0: np.ndarray
    d0: np.ndarray
    A1: np.ndarray
    d1: np.ndarray
    m: int
    gamma: float | None = None
    p_hat: np.ndarray | None = None

    def __post_init__(self):
        A0 = np.atleast_2d(np.asarray(self.A0, dtype=float)).reshape(-1, self.m)
        A1 = np.atleast_2d(np.asarray(self.A1, dtype=float)).reshape(-1, self.m)
        d0 = np.asarray(self.d0, dtype=float).reshape(-1)
        d1 = np.asarray(self.d1, dtype=float).reshape(-1)
        if A0.shape[0] != d0.size or A1.shape[0] != d1.size:
            raise ValueError("row counts of A and d do not match")
        object.__setattr__(self, "A0", A0)
        object.__setattr__(self, "A1", A1)
        object.__setattr__(self, "d0", d0)
        object.__setattr__(self, "d1", d1)
        self._certify_nonempty()

    def _certify_nonempty(self):
        # phase-1 LP: any feasible p on the simplex will do
        a_eq = np.vstack([self.A0, np.ones((1, self.m))])
        b_eq = np.concatenate([self.d0, [1.0]])
        res = linprog(
            c=np.zeros(self.m),
            A_ub=self.A1 if self.A1.size else None,
            b_ub=self.d1 if self.d1.size else None,
            A_eq=a_eq,
            b_eq=b_eq,
            bounds=(0.0, 1.0),
            method="highs",
        )
        if res.status != 0:
            raise InfeasibleAmbiguityError(
                "ambiguity polyhedron does not meet the simplex"
            )

    @property
    def n_eq(self) -> int:
        return self.A0.shape[0]

    @property
    def n_ineq(self) -> int:
        return self.A1.shape[0]


def from_gamma(p_hat, gamma: float) -> PolyhedralAmbiguitySet:
    """Contamination polytope {p in simplex : p >= (1 - gamma) p_hat}.

    gamma = 0 pins the set to the empirical distribution; gamma = 1
    releases it to the whole simplex.
    """
    p_hat = np.asarray(p_hat, dtype=float)
    if p_hat.ndim != 1 or p_hat.size == 0:
        raise ValueError("p_hat must be a nonempty vector")
    if np.any(p_hat < 0) or abs(p_hat.sum() - 1.0) > 1e-12:
        raise ValueError("p_hat must lie on the probability simplex")
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    m = p_hat.size
    return PolyhedralAmbiguitySet(
        A0=np.zeros((0, m)),
        d0=np.zeros(0),
        A1=-np.eye(m),
        d1=-(1.0 - gamma) * p_hat,
        m=m,
        gamma=float(gamma),
        p_hat=p_hat.copy(),
    )


def contains(amb: PolyhedralAmbiguitySet, p, tol: float = 1e-9) -> bool:
    """Membership test with componentwise tolerance."""
    p = np.asarray(p, dtype=float)
    if p.shape != (amb.m,):
        raise ValueError(f"p must have length {amb.m}")
    if np.any(p < -tol):
        return False
    if abs(p.sum() - 1.0) > tol:
        return False
    if amb.n_eq and np.max(np.abs(amb.A0 @ p - amb.d0)) > tol:
        return False
    if amb.n_ineq and np.any(amb.A1 @ p > amb.d1 + tol):
        return False
    return True


def from_config(cfg: dict, p_hat=None) -> PolyhedralAmbiguitySet:
    """Build from a JSON fragment: either {"gamma": g} or explicit matrices."""
    if "gamma" in cfg:
        if p_hat is None:
            raise ValueError("gamma form needs the empirical distribution")
        return from_gamma(p_hat, float(cfg["gamma"]))
    A0 = np.asarray(cfg.get("A0", []), dtype=float)
    A1 = np.asarray(cfg.get("A1", []), dtype=float)
    m = A0.shape[1] if A0.size else A1.shape[1]
    return PolyhedralAmbiguitySet(
        A0=A0 if A0.size else np.zeros((0, m)),
        d0=np.asarray(cfg.get("d0", []), dtype=float),
        A1=A1 if A1.size else np.zeros((0, m)),
        d1=np.asarray(cfg.get("d1", []), dtype=float),
        m=m,
    )
