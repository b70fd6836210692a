"""Dense linear-program kernel.

Every numeric decision in the package funnels through ``solve``/``feasible``:
fixed-sequence MPC, branch-and-bound relaxations, polytope emptiness and
redundancy checks. The backend is HiGHS via scipy, which is deterministic for
a fixed input; the wrapper adds the status vocabulary and iteration cap that
the rest of the package relies on.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

TOL_LP = 1e-9


class NumericalFailure(RuntimeError):
    """Solver gave up (iteration cap or internal error) without a verdict."""


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class LinearProgram:
    """min c.x  s.t.  G x <= h,  A_eq x = b_eq,  lb <= x <= ub.

    ``G``/``A_eq`` may be dense arrays or scipy sparse matrices; ``lb``/``ub``
    are per-variable arrays or None for free variables.
    """

    c: np.ndarray
    G: object = None
    h: np.ndarray | None = None
    A_eq: object = None
    b_eq: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.c)
        if self.G is not None and self.G.shape[1] != n:
            raise ValueError(f"G has {self.G.shape[1]} columns, objective has {n}")
        if self.A_eq is not None and self.A_eq.shape[1] != n:
            raise ValueError(f"A_eq has {self.A_eq.shape[1]} columns, objective has {n}")

    @property
    def n_vars(self) -> int:
        return len(self.c)

    @property
    def n_rows(self) -> int:
        m = 0
        if self.G is not None:
            m += self.G.shape[0]
        if self.A_eq is not None:
            m += self.A_eq.shape[0]
        return m


@dataclass(frozen=True)
class LpResult:
    status: LpStatus
    x: np.ndarray | None = None
    value: float | None = None


def _bounds_of(lp: LinearProgram):
    if lp.lb is None and lp.ub is None:
        return (None, None)
    lb = lp.lb if lp.lb is not None else np.full(lp.n_vars, -np.inf)
    ub = lp.ub if lp.ub is not None else np.full(lp.n_vars, np.inf)
    return np.column_stack([lb, ub])


def _run(lp: LinearProgram, c: np.ndarray) -> "linprog.OptimizeResult":
    G = sp.csc_matrix(lp.G) if lp.G is not None and not sp.issparse(lp.G) else lp.G
    A = sp.csc_matrix(lp.A_eq) if lp.A_eq is not None and not sp.issparse(lp.A_eq) else lp.A_eq
    maxiter = 50 * (lp.n_rows + lp.n_vars) + 200
    return linprog(
        c,
        A_ub=G,
        b_ub=lp.h,
        A_eq=A,
        b_eq=lp.b_eq,
        bounds=_bounds_of(lp),
        method="highs",
        options={"maxiter": maxiter},
    )


def solve(lp: LinearProgram) -> LpResult:
    """Solve to optimality. Deterministic for identical input.

    Raises NumericalFailure if HiGHS stops without a definite status
    (iteration cap per the 50*(m+n) budget, or numerical trouble).
    """
    res = _run(lp, np.asarray(lp.c, dtype=float))
    if res.status == 0:
        x = np.asarray(res.x)
        value = float(res.fun)
        cx = float(np.dot(lp.c, x))
        if abs(value - cx) > TOL_LP * (1.0 + abs(cx)) + 1e-12:
            raise NumericalFailure(
                f"objective mismatch: solver reported {value}, c.x = {cx}"
            )
        return LpResult(LpStatus.OPTIMAL, x=x, value=value)
    if res.status == 2:
        return LpResult(LpStatus.INFEASIBLE)
    if res.status == 3:
        return LpResult(LpStatus.UNBOUNDED)
    raise NumericalFailure(f"LP solver failed: {res.message}")


def feasible(lp: LinearProgram) -> bool:
    """Phase-1 only: report whether the constraint set is nonempty.

    Solves with a zero objective so no optimality work is done beyond
    finding (or refuting) a feasible point.
    """
    res = _run(lp, np.zeros(lp.n_vars))
    if res.status == 0:
        return True
    if res.status in (2,):
        return False
    if res.status == 3:
        # cannot happen with a zero objective unless the model is broken
        return True
    raise NumericalFailure(f"LP feasibility check failed: {res.message}")
