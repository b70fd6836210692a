"""Horizon optimization over PWA dynamics.

Three solvers share one LP assembly path:

* ``solve_fixed`` pins the switching sequence, making the problem a single LP
  (linear time-varying dynamics, polytopic constraints, 1/inf-norm stage
  costs via epigraph variables).
* ``solve_hybrid_exhaustive`` scans every admissible sequence; it is the
  oracle the branch-and-bound solver is tested against.
* ``solve_hybrid_bnb`` searches over partial sequences best-first, guided by
  an initial depth-first dive. A node's bound comes from the LP with region
  membership and dynamics imposed only on the fixed steps; dropping both on
  the tail keeps the bound sound (any completion only adds constraints and
  nonnegative stage costs).

Costs can optionally be tightened: state and terminal sets are eroded by the
inf-norm ball of ``cfg.tightening_radius``, which is how the training loop
separates feasible and infeasible boundary vertices.
"""

from __future__ import annotations

import enum
import heapq
import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import lp as lpmod
from .geometry import TOL_GEOM
from .pwa import OutsideDomain, PwaSystem

TIE_TOL = 1e-9
SEQUENCE_CAP = 2**16
_CONST_TOL = 1e-7  # matches the solver's primal feasibility tolerance


class TooManySequences(Exception):
    """Exhaustive enumeration asked for more sequences than the cap allows."""


class SolveStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class SwitchingSequence:
    """Region indices delta(0..N), 1-based, one per horizon step."""

    indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(idx) < 1:
            raise ValueError("switching sequence must have length >= 1")
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return len(self.indices)

    def __getitem__(self, k):
        return self.indices[k]

    def shifted(self, last: int) -> "SwitchingSequence":
        return SwitchingSequence(self.indices[1:] + (int(last),))


@dataclass
class MpcConfig:
    """Horizon, cost weights, norms and the tightening ball radius."""

    N: int
    Q: np.ndarray
    R: np.ndarray
    P: np.ndarray
    p1: float = 1
    p2: float = 1
    p3: float = 1
    tightening_radius: float = 0.0

    def __post_init__(self):
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        self.R = np.atleast_2d(np.asarray(self.R, dtype=float))
        self.P = np.atleast_2d(np.asarray(self.P, dtype=float))
        if self.N < 1:
            raise ValueError("horizon must be positive")
        for p in (self.p1, self.p2, self.p3):
            if p not in (1, math.inf):
                raise ValueError("norms must be 1 or inf")
        if self.tightening_radius < 0:
            raise ValueError("tightening radius must be nonnegative")
        for name, M, want in (("Q", self.Q, self.Q.shape[1]), ("R", self.R, self.R.shape[1]), ("P", self.P, self.P.shape[1])):
            if np.linalg.matrix_rank(M, tol=1e-10) < want:
                raise ValueError(f"{name} must have full column rank")


@dataclass
class SolveStats:
    lp_count: int = 0
    wall_ms: float = 0.0


@dataclass
class MpcSolution:
    status: SolveStatus
    cost: float = math.inf
    states: np.ndarray | None = None
    inputs: np.ndarray | None = None
    sequence: SwitchingSequence | None = None
    stats: SolveStats = field(default_factory=SolveStats)


def vector_norm(v: np.ndarray, p) -> float:
    v = np.atleast_1d(v)
    return float(np.max(np.abs(v))) if p == math.inf else float(np.sum(np.abs(v)))


def trajectory_cost(cfg: MpcConfig, states: np.ndarray, inputs: np.ndarray) -> float:
    """Stage-cost sum along a trajectory; used to cross-check LP objectives."""
    c = 0.0
    for k in range(cfg.N):
        c += vector_norm(cfg.Q @ states[k], cfg.p1)
        c += vector_norm(cfg.R @ inputs[k], cfg.p2)
    c += vector_norm(cfg.P @ states[cfg.N], cfg.p3)
    return c


# -- LP assembly -----------------------------------------------------------------


@dataclass
class _BuildMeta:
    n_u: int
    n_x: int
    n_vars: int
    const_cost: float
    const_feasible: bool


def _tight_sets(sys: PwaSystem, cfg: MpcConfig, tightened: bool):
    if tightened and cfg.tightening_radius > 0:
        X = sys.state_set.erode(cfg.tightening_radius)
        Xf = sys.terminal_set.erode(cfg.tightening_radius) if sys.terminal_set is not None else None
        return X, Xf
    return sys.state_set, sys.terminal_set


def _build_horizon_lp(
    sys: PwaSystem,
    cfg: MpcConfig,
    x0: np.ndarray,
    prefix: tuple,
    tightened: bool = False,
    with_cost: bool = True,
):
    """Assemble the LP for a (possibly partial) switching sequence.

    ``prefix`` fixes delta(0..L-1). Region membership and dynamics are imposed
    for the fixed steps only; every materialized state keeps its X (or
    terminal-set) rows and every input its U rows. With L = N+1 this is the
    complete fixed-sequence problem.

    Variables: u(0..n_u-1), x(1..n_x), then epigraph variables. x(0) = x0 is
    substituted; constraints that involve only x0 become constant rows, which
    are checked here and reported via the returned metadata.
    """
    N, n, m = cfg.N, sys.n, sys.m
    L = len(prefix)
    if not 1 <= L <= N + 1:
        raise ValueError("sequence length must be in 1..N+1")
    if x0.shape != (n,):
        raise ValueError(f"initial state has shape {x0.shape}, expected ({n},)")
    for r in prefix:
        if not 1 <= r <= sys.n_regions:
            raise ValueError(f"region index {r} out of range 1..{sys.n_regions}")

    X, Xf = _tight_sets(sys, cfg, tightened)
    n_u = min(L, N)
    n_x = min(L, N)
    ucol = lambda k: k * m
    xcol = lambda k: n_u * m + (k - 1) * n  # k >= 1

    # epigraph layout (cost mode)
    blocks = []  # (matrix, norm, col_offset or None for const, step)
    if with_cost:
        for k in range(1, min(n_x, N - 1) + 1):
            blocks.append((cfg.Q, cfg.p1, xcol(k)))
        for k in range(n_u):
            blocks.append((cfg.R, cfg.p2, ucol(k)))
        if n_x == N:
            blocks.append((cfg.P, cfg.p3, xcol(N)))
    n_t = sum(1 if p == math.inf else M.shape[0] for M, p, _ in blocks)
    n_vars = n_u * m + n_x * n + n_t

    const_cost = vector_norm(cfg.Q @ x0, cfg.p1) if with_cost else 0.0

    # -- equalities: dynamics over the fixed steps
    Aeq = np.zeros((n_u * n, n_vars))
    beq = np.zeros(n_u * n)
    for j in range(n_u):
        reg = sys.regions[prefix[j] - 1]
        r0 = j * n
        Aeq[r0 : r0 + n, xcol(j + 1) : xcol(j + 1) + n] = -np.eye(n)
        Aeq[r0 : r0 + n, ucol(j) : ucol(j) + m] = reg.B
        if j == 0:
            beq[r0 : r0 + n] = -(reg.A @ x0 + reg.c)
        else:
            Aeq[r0 : r0 + n, xcol(j) : xcol(j) + n] = reg.A
            beq[r0 : r0 + n] = -reg.c

    # -- inequalities
    rows, rhs = [], []
    const_ok = True

    def add_const(Ac, bc):
        nonlocal const_ok
        resid = Ac @ x0 - bc
        if np.any(resid > _CONST_TOL):
            const_ok = False
        rows.append(np.zeros((len(bc), n_vars)))
        rhs.append(bc - Ac @ x0)

    def add_state(Ac, bc, k):
        blk = np.zeros((Ac.shape[0], n_vars))
        blk[:, xcol(k) : xcol(k) + n] = Ac
        rows.append(blk)
        rhs.append(bc)

    for j in range(L):
        poly = sys.regions[prefix[j] - 1].polytope
        if j == 0:
            add_const(poly.A, poly.b)
        else:
            add_state(poly.A, poly.b, j)
    add_const(X.A, X.b)
    for k in range(1, min(n_x, N - 1) + 1):
        add_state(X.A, X.b, k)
    for j in range(n_u):
        blk = np.zeros((sys.input_set.A.shape[0], n_vars))
        blk[:, ucol(j) : ucol(j) + m] = sys.input_set.A
        rows.append(blk)
        rhs.append(sys.input_set.b)
    if n_x == N:
        if Xf is None:
            raise ValueError("system has no terminal set")
        add_state(Xf.A, Xf.b, N)

    # -- epigraph rows and objective
    c_obj = np.zeros(n_vars)
    t_at = n_u * m + n_x * n
    for M, p, col in blocks:
        q = M.shape[0]
        t_count = 1 if p == math.inf else q
        width = M.shape[1]
        up = np.zeros((q, n_vars))
        dn = np.zeros((q, n_vars))
        up[:, col : col + width] = M
        dn[:, col : col + width] = -M
        if p == math.inf:
            up[:, t_at] = -1.0
            dn[:, t_at] = -1.0
            c_obj[t_at] = 1.0
        else:
            up[:, t_at : t_at + q] = -np.eye(q)
            dn[:, t_at : t_at + q] = -np.eye(q)
            c_obj[t_at : t_at + q] = 1.0
        rows.append(up)
        rhs.append(np.zeros(q))
        rows.append(dn)
        rhs.append(np.zeros(q))
        t_at += t_count

    G = np.vstack(rows)
    h = np.concatenate(rhs)
    prog = lpmod.LinearProgram(c=c_obj, G=G, h=h, A_eq=Aeq, b_eq=beq)
    meta = _BuildMeta(n_u=n_u, n_x=n_x, n_vars=n_vars, const_cost=const_cost, const_feasible=const_ok)
    return prog, meta


def build_fixed_sequence_lp(
    sys: PwaSystem,
    cfg: MpcConfig,
    x0,
    seq: SwitchingSequence,
    tightened: bool = False,
) -> lpmod.LinearProgram:
    """The complete fixed-sequence LP (constant rows included as zero rows)."""
    x0 = np.asarray(x0, dtype=float)
    if len(seq) != cfg.N + 1:
        raise ValueError(f"sequence length {len(seq)} != N+1 = {cfg.N + 1}")
    prog, _ = _build_horizon_lp(sys, cfg, x0, seq.indices, tightened=tightened)
    return prog


def _extract_trajectory(sys, cfg, meta, x, x0):
    n, m, N = sys.n, sys.m, cfg.N
    us = x[: meta.n_u * m].reshape(meta.n_u, m)
    xs = np.vstack([x0[None, :], x[meta.n_u * m : meta.n_u * m + meta.n_x * n].reshape(meta.n_x, n)])
    return xs, us


def solve_fixed(
    sys: PwaSystem,
    cfg: MpcConfig,
    x0,
    seq: SwitchingSequence,
    tightened: bool = False,
) -> MpcSolution:
    """Optimal trajectories for a pinned sequence; Infeasible encodes J = inf."""
    t0 = time.perf_counter()
    x0 = np.asarray(x0, dtype=float)
    if len(seq) != cfg.N + 1:
        raise ValueError(f"sequence length {len(seq)} != N+1 = {cfg.N + 1}")
    prog, meta = _build_horizon_lp(sys, cfg, x0, seq.indices, tightened=tightened)
    stats = SolveStats(lp_count=0)
    if not meta.const_feasible:
        stats.wall_ms = (time.perf_counter() - t0) * 1e3
        return MpcSolution(SolveStatus.INFEASIBLE, sequence=seq, stats=stats)
    res = lpmod.solve(prog)
    stats.lp_count = 1
    if res.status != lpmod.LpStatus.OPTIMAL:
        stats.wall_ms = (time.perf_counter() - t0) * 1e3
        return MpcSolution(SolveStatus.INFEASIBLE, sequence=seq, stats=stats)
    xs, us = _extract_trajectory(sys, cfg, meta, res.x, x0)
    cost = res.value + meta.const_cost
    recomputed = trajectory_cost(cfg, xs, us)
    if abs(recomputed - cost) > 1e-6 * (1.0 + abs(cost)):
        raise lpmod.NumericalFailure(
            f"objective {cost} disagrees with recomputed stage costs {recomputed}"
        )
    stats.wall_ms = (time.perf_counter() - t0) * 1e3
    return MpcSolution(
        SolveStatus.OPTIMAL, cost=cost, states=xs, inputs=us, sequence=seq, stats=stats
    )


def feasible_fixed(
    sys: PwaSystem,
    cfg: MpcConfig,
    x0,
    seq: SwitchingSequence,
    tightened: bool = False,
) -> bool:
    """Phase-1 only: whether the pinned sequence admits any trajectory."""
    x0 = np.asarray(x0, dtype=float)
    if len(seq) != cfg.N + 1:
        raise ValueError(f"sequence length {len(seq)} != N+1 = {cfg.N + 1}")
    prog, meta = _build_horizon_lp(sys, cfg, x0, seq.indices, tightened=tightened, with_cost=False)
    if not meta.const_feasible:
        return False
    return lpmod.feasible(prog)


# -- hybrid solvers ----------------------------------------------------------------


def _initial_regions(sys: PwaSystem, x0) -> list:
    """Regions whose closure contains x0, ascending; boundary states get all."""
    return [
        i
        for i, reg in enumerate(sys.regions, start=1)
        if reg.polytope.contains(x0, tol=TOL_GEOM)
    ]


def _better(cost, seq, best_cost, best_seq) -> bool:
    if cost < best_cost - TIE_TOL:
        return True
    return abs(cost - best_cost) <= TIE_TOL and (
        best_seq is None or seq.indices < best_seq.indices
    )


def solve_hybrid_exhaustive(
    sys: PwaSystem,
    cfg: MpcConfig,
    x0,
    tightened: bool = False,
    cap: int = SEQUENCE_CAP,
) -> MpcSolution:
    """Minimum over every sequence starting in a region containing x0.

    Lexicographically smallest sequence wins ties. This is the reference the
    branch-and-bound solver must reproduce.
    """
    t0 = time.perf_counter()
    x0 = np.asarray(x0, dtype=float)
    l, N = sys.n_regions, cfg.N
    if l ** (N + 1) > cap:
        raise TooManySequences(f"{l}^{N + 1} sequences exceeds cap {cap}")
    stats = SolveStats()
    best: MpcSolution | None = None
    for first in _initial_regions(sys, x0):
        for tail in itertools.product(range(1, l + 1), repeat=N):
            seq = SwitchingSequence((first,) + tail)
            sol = solve_fixed(sys, cfg, x0, seq, tightened=tightened)
            stats.lp_count += sol.stats.lp_count
            if sol.status == SolveStatus.OPTIMAL and _better(
                sol.cost, seq, best.cost if best else math.inf, best.sequence if best else None
            ):
                best = sol
    stats.wall_ms = (time.perf_counter() - t0) * 1e3
    if best is None:
        return MpcSolution(SolveStatus.INFEASIBLE, stats=stats)
    best.stats = stats
    return best


def solve_hybrid_bnb(
    sys: PwaSystem,
    cfg: MpcConfig,
    x0,
    tightened: bool = False,
) -> MpcSolution:
    """Branch-and-bound over switching sequences.

    An initial depth-first dive follows the relaxed trajectory's regions to
    find an incumbent quickly; the remaining frontier is processed best-first
    on node bounds. Nodes are pruned when infeasible or when their bound
    cannot beat (or tie) the incumbent, so the returned cost matches the
    exhaustive solver and ties still resolve to the lexicographically
    smallest sequence.
    """
    t0 = time.perf_counter()
    x0 = np.asarray(x0, dtype=float)
    N, l = cfg.N, sys.n_regions
    stats = SolveStats()
    best_cost = math.inf
    best_sol: MpcSolution | None = None

    def consider(sol: MpcSolution):
        nonlocal best_cost, best_sol
        if sol.status == SolveStatus.OPTIMAL and _better(
            sol.cost, sol.sequence, best_cost, best_sol.sequence if best_sol else None
        ):
            best_cost = sol.cost
            best_sol = sol

    def eval_node(prefix):
        """One LP. ('leaf', solution) | ('open', (lb, xs)) | ('dead', None)."""
        if len(prefix) == N + 1:
            sol = solve_fixed(sys, cfg, x0, SwitchingSequence(prefix), tightened=tightened)
            stats.lp_count += sol.stats.lp_count
            return "leaf", sol
        prog, meta = _build_horizon_lp(sys, cfg, x0, prefix, tightened=tightened)
        if not meta.const_feasible:
            return "dead", None
        res = lpmod.solve(prog)
        stats.lp_count += 1
        if res.status != lpmod.LpStatus.OPTIMAL:
            return "dead", None
        xs, _ = _extract_trajectory(sys, cfg, meta, res.x, x0)
        return "open", (res.value + meta.const_cost, xs)

    def child_order(xs):
        """Guided child first: the region of the relaxed trajectory's last state."""
        order = list(range(1, l + 1))
        if xs is not None:
            try:
                hint = sys.region_of(xs[-1])
            except OutsideDomain:
                return order
            order.remove(hint)
            order.insert(0, hint)
        return order

    heap: list = []
    counter = itertools.count()

    # seed the roots; dive from the most promising one for a quick incumbent
    open_roots = []
    for i in _initial_regions(sys, x0):
        kind, payload = eval_node((i,))
        if kind == "leaf":
            consider(payload)
        elif kind == "open":
            open_roots.append((payload[0], (i,), payload[1]))
    open_roots.sort(key=lambda t: t[0])
    dive_node = open_roots[0] if open_roots else None
    for lb, prefix, _ in open_roots[1:]:
        heapq.heappush(heap, (lb, next(counter), prefix))

    while dive_node is not None:
        lb, prefix, xs = dive_node
        dive_node = None
        handled = False
        for r in child_order(xs):
            child = prefix + (r,)
            if handled:
                heapq.heappush(heap, (lb, next(counter), child))
                continue
            kind, payload = eval_node(child)
            if kind == "dead":
                continue
            if kind == "leaf":
                consider(payload)
                handled = True
            else:
                dive_node = (payload[0], child, payload[1])
                handled = True

    while heap:
        key, _, prefix = heapq.heappop(heap)
        if key > best_cost + TIE_TOL:
            break
        kind, payload = eval_node(prefix)
        if kind == "dead":
            continue
        if kind == "leaf":
            consider(payload)
            continue
        lb, xs = payload
        if lb > best_cost + TIE_TOL:
            continue
        for r in child_order(xs):
            heapq.heappush(heap, (lb, next(counter), prefix + (r,)))

    stats.wall_ms = (time.perf_counter() - t0) * 1e3
    if best_sol is None:
        return MpcSolution(SolveStatus.INFEASIBLE, stats=stats)
    best_sol.stats = stats
    return best_sol


def hybrid_feasible(
    sys: PwaSystem,
    cfg: MpcConfig,
    x0,
    tightened: bool = False,
) -> bool:
    """Whether any sequence is feasible; exits on the first feasible leaf.

    Depth-first with the same region-guided child ordering as the
    branch-and-bound solver; every node costs one phase-1 LP.
    """
    x0 = np.asarray(x0, dtype=float)
    N, l = cfg.N, sys.n_regions

    def node_feasible(prefix):
        prog, meta = _build_horizon_lp(
            sys, cfg, x0, prefix, tightened=tightened, with_cost=False
        )
        if not meta.const_feasible:
            return False
        return lpmod.feasible(prog)

    stack = [(i,) for i in reversed(_initial_regions(sys, x0))]
    while stack:
        prefix = stack.pop()
        if not node_feasible(prefix):
            continue
        if len(prefix) == N + 1:
            return True
        for r in reversed(range(1, l + 1)):
            stack.append(prefix + (r,))
    return False
