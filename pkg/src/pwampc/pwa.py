"""Piecewise-affine system model: regions, affine laws, constraint sets.

A system is x(k+1) = A_i x(k) + B u(k) + c_i while x(k) is in region P_i,
with the regions partitioning the state constraint set X. The input matrix B
is shared across regions; the file format stores one per region for forward
compatibility and validation requires them equal.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .geometry import TOL_GEOM, ConvexPartition, Polytope


class OutsideDomain(Exception):
    """State not contained in any region closure."""


@dataclass(frozen=True)
class Region:
    polytope: Polytope
    A: np.ndarray
    B: np.ndarray
    c: np.ndarray


@dataclass
class PwaSystem:
    n: int
    m: int
    regions: list
    state_set: Polytope
    input_set: Polytope
    terminal_set: Polytope | None = None
    terminal_gains: dict = field(default_factory=dict)

    @property
    def n_regions(self) -> int:
        return len(self.regions)

    @property
    def B(self) -> np.ndarray:
        return self.regions[0].B

    def region_of(self, x) -> int:
        """Lowest 1-based index i with x in the closure of P_i.

        The lowest-index tie-break on shared facets is deterministic and safe
        because the dynamics are continuous across facets.
        """
        x = np.asarray(x, dtype=float)
        for i, reg in enumerate(self.regions, start=1):
            if reg.polytope.contains(x, tol=TOL_GEOM):
                return i
        raise OutsideDomain(f"state {x.tolist()} lies in no region")

    def step(self, x, u) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = np.atleast_1d(np.asarray(u, dtype=float))
        i = self.region_of(x)
        reg = self.regions[i - 1]
        return reg.A @ x + reg.B @ u + reg.c

    def region_partition(self) -> ConvexPartition:
        """The regions clipped to X, labeled by their 1-based index."""
        cells = [r.polytope.intersect(self.state_set) for r in self.regions]
        return ConvexPartition(self.state_set, cells, list(range(1, self.n_regions + 1)))

    def validate(self) -> list:
        """Model diagnostics; an empty list means the system is well-posed.

        Checks partition coverage/disjointness over X, continuity of the
        dynamics across shared facets, shared B, origin interiority of X and
        U, and the terminal set data when present.
        """
        issues = []
        origin = np.zeros(self.n)
        for name, poly, dim in (
            ("X", self.state_set, self.n),
            ("U", self.input_set, self.m),
        ):
            _, r = poly.chebyshev()
            if not poly.contains(np.zeros(dim)) or r <= TOL_GEOM:
                issues.append(f"origin not interior to {name}")
        B0 = self.regions[0].B
        for i, reg in enumerate(self.regions[1:], start=2):
            if not np.allclose(reg.B, B0, atol=TOL_GEOM):
                issues.append(f"region {i} input matrix differs from region 1")
        issues.extend(self.region_partition().check())
        issues.extend(self._continuity_issues())
        if self.terminal_set is not None:
            issues.extend(self._terminal_issues())
        return issues

    def _continuity_issues(self) -> list:
        issues = []
        for i in range(self.n_regions):
            for j in range(i + 1, self.n_regions):
                ri, rj = self.regions[i], self.regions[j]
                facet = ri.polytope.intersect(rj.polytope).intersect(self.state_set)
                if facet.is_empty():
                    continue
                for v in facet.enumerate_vertices():
                    fi = ri.A @ v + ri.c
                    fj = rj.A @ v + rj.c
                    if np.max(np.abs(fi - fj)) > 10 * TOL_GEOM:
                        issues.append(
                            f"dynamics discontinuous across facet of regions "
                            f"{i + 1}/{j + 1} at {np.round(v, 6).tolist()}"
                        )
                        break
        return issues

    def _terminal_issues(self) -> list:
        issues = []
        Xf = self.terminal_set
        verts = Xf.enumerate_vertices()
        for v in verts:
            if not self.state_set.contains(v, tol=10 * TOL_GEOM):
                issues.append("terminal set not contained in X")
                break
        for i, reg in enumerate(self.regions, start=1):
            if _open_intersects(Xf, reg.polytope):
                if i not in self.terminal_gains:
                    issues.append(f"terminal set intersects region {i} which has no gain")
                    continue
                K = self.terminal_gains[i]
                Acl = reg.A + reg.B @ K
                cell = Xf.intersect(reg.polytope)
                for v in cell.enumerate_vertices():
                    if not Xf.contains(Acl @ v + reg.c, tol=10 * TOL_GEOM):
                        issues.append(f"terminal set not invariant under gain of region {i}")
                        break
                    if not self.input_set.contains(
                        np.atleast_1d(K @ v), tol=10 * TOL_GEOM
                    ):
                        issues.append(f"terminal gain of region {i} violates input set")
                        break
        return issues


def _open_intersects(p: Polytope, q: Polytope, tol: float = TOL_GEOM) -> bool:
    """Whether p meets q with q's strict rows satisfied strictly.

    Used to decide which regions genuinely contain terminal-set states: an
    open region touching the terminal set only along its boundary does not
    count (its points never select that region's dynamics).
    """
    from . import lp as lpmod

    strict = q.strict_mask
    if not strict.any():
        inter = p.intersect(q)
        return not inter.is_empty()
    # maximize slack t on the strict rows
    n = p.dim
    A = np.vstack([p.A, q.A])
    b = np.concatenate([p.b, q.b])
    tcol = np.zeros(A.shape[0])
    tcol[len(p.b) :][strict] = 1.0
    G = np.column_stack([A, tcol])
    c = np.zeros(n + 1)
    c[-1] = -1.0
    lb = np.full(n + 1, -np.inf)
    lb[-1] = 0.0
    ub = np.full(n + 1, np.inf)
    ub[-1] = 1.0
    res = lpmod.solve(lpmod.LinearProgram(c=c, G=G, h=b, lb=lb, ub=ub))
    return res.status == lpmod.LpStatus.OPTIMAL and res.x[-1] > tol


# -- serialization ---------------------------------------------------------------


def system_to_dict(sys: PwaSystem) -> dict:
    d = {
        "n": sys.n,
        "m": sys.m,
        "regions": [
            {
                "A": reg.A.tolist(),
                "B": reg.B.tolist(),
                "c": reg.c.tolist(),
                "polytope": reg.polytope.to_dict(),
            }
            for reg in sys.regions
        ],
        "X": sys.state_set.to_dict(),
        "U": sys.input_set.to_dict(),
    }
    if sys.terminal_set is not None:
        d["Xf"] = sys.terminal_set.to_dict()
    if sys.terminal_gains:
        d["K"] = {str(i): K.tolist() for i, K in sys.terminal_gains.items()}
    return d


def system_from_dict(d: dict) -> PwaSystem:
    n, m = int(d["n"]), int(d["m"])
    regions = []
    for rd in d["regions"]:
        regions.append(
            Region(
                polytope=Polytope.from_dict(rd["polytope"]),
                A=np.asarray(rd["A"], dtype=float).reshape(n, n),
                B=np.asarray(rd["B"], dtype=float).reshape(n, m),
                c=np.asarray(rd["c"], dtype=float).reshape(n),
            )
        )
    terminal = Polytope.from_dict(d["Xf"]) if "Xf" in d else None
    gains = {
        int(k): np.asarray(v, dtype=float).reshape(m, n)
        for k, v in d.get("K", {}).items()
    }
    return PwaSystem(
        n=n,
        m=m,
        regions=regions,
        state_set=Polytope.from_dict(d["X"]),
        input_set=Polytope.from_dict(d["U"]),
        terminal_set=terminal,
        terminal_gains=gains,
    )


def load_system(path) -> PwaSystem:
    with open(path) as f:
        return system_from_dict(json.load(f))


def save_system(sys: PwaSystem, path) -> None:
    with open(path, "w") as f:
        json.dump(system_to_dict(sys), f, indent=2)
        f.write("\n")
