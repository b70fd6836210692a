"""Polytope arithmetic: halfspace sets, membership, vertex enumeration, erosion.

Everything geometric in the package is one of these objects: PWA regions,
state/input constraint sets, terminal sets, and classifier decision cells.
Strict halfspaces (open regions) are carried through serialization but all
geometric operations work on closures; the PWA dynamics being continuous
makes that safe.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from . import lp as lpmod

logger = logging.getLogger(__name__)

TOL_GEOM = 1e-7
TOL_VERTEX = 1e-6
VERTEX_DIM_CAP = 4


class GeometryError(Exception):
    pass


class Unbounded(GeometryError):
    """Vertex enumeration or a support LP hit an unbounded direction."""


class DimensionTooLarge(GeometryError):
    """Vertex enumeration requested above the configured dimension cap."""


@dataclass(frozen=True)
class Halfspace:
    """One constraint normal.x <= offset (strict=True encodes <)."""

    normal: tuple
    offset: float
    strict: bool = False

    def __post_init__(self):
        a = np.asarray(self.normal, dtype=float)
        if not np.any(np.abs(a) > 0):
            raise ValueError("halfspace normal is the zero vector")
        object.__setattr__(self, "normal", tuple(float(v) for v in a))
        object.__setattr__(self, "offset", float(self.offset))


class Polytope:
    """Intersection of finitely many halfspaces, with an on-demand vertex cache.

    Immutable after construction; safe to share. The vertex representation
    is computed lazily by ``enumerate_vertices`` and cached.
    """

    def __init__(self, halfspaces, dim=None):
        hs = tuple(halfspaces)
        if dim is None:
            if not hs:
                raise ValueError("dimension required for a polytope with no halfspaces")
            dim = len(hs[0].normal)
        for h in hs:
            if len(h.normal) != dim:
                raise ValueError("halfspace dimension mismatch")
        self.dim = int(dim)
        self.halfspaces = hs
        self._A = None
        self._b = None
        self._vertices = None
        self._empty = None

    # -- construction helpers -------------------------------------------------

    @classmethod
    def from_inequalities(cls, A, b, strict=None) -> "Polytope":
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        if A.shape[0] != b.shape[0]:
            raise ValueError("A and b row counts differ")
        if strict is None:
            strict = [False] * A.shape[0]
        hs = [Halfspace(tuple(A[i]), float(b[i]), bool(strict[i])) for i in range(A.shape[0])]
        return cls(hs, dim=A.shape[1])

    @classmethod
    def box(cls, lo, hi) -> "Polytope":
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        n = len(lo)
        A = np.vstack([np.eye(n), -np.eye(n)])
        b = np.concatenate([hi, -lo])
        return cls.from_inequalities(A, b)

    def intersect(self, other: "Polytope") -> "Polytope":
        if other.dim != self.dim:
            raise ValueError("dimension mismatch in intersection")
        return Polytope(self.halfspaces + other.halfspaces, dim=self.dim)

    # -- matrix views ----------------------------------------------------------

    @property
    def A(self) -> np.ndarray:
        if self._A is None:
            self._A = np.array([h.normal for h in self.halfspaces], dtype=float).reshape(
                len(self.halfspaces), self.dim
            )
        return self._A

    @property
    def b(self) -> np.ndarray:
        if self._b is None:
            self._b = np.array([h.offset for h in self.halfspaces], dtype=float)
        return self._b

    @property
    def strict_mask(self) -> np.ndarray:
        return np.array([h.strict for h in self.halfspaces], dtype=bool)

    # -- queries ----------------------------------------------------------------

    def contains(self, x, tol: float = TOL_GEOM) -> bool:
        """Closure membership: all rows satisfied within tol (strict rows too)."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"point has shape {x.shape}, polytope dim is {self.dim}")
        if not self.halfspaces:
            return True
        return bool(np.all(self.A @ x - self.b <= tol))

    def is_empty(self) -> bool:
        if self._empty is None:
            if not self.halfspaces:
                self._empty = False
            else:
                prog = lpmod.LinearProgram(c=np.zeros(self.dim), G=self.A, h=self.b)
                self._empty = not lpmod.feasible(prog)
        return self._empty

    def support(self, direction) -> float:
        """max direction.x over the closure. Raises Unbounded."""
        d = np.asarray(direction, dtype=float)
        res = lpmod.solve(lpmod.LinearProgram(c=-d, G=self.A, h=self.b))
        if res.status == lpmod.LpStatus.UNBOUNDED:
            raise Unbounded(f"support unbounded along {d}")
        if res.status == lpmod.LpStatus.INFEASIBLE:
            raise GeometryError("support of an empty polytope")
        return -res.value

    def bounding_box(self):
        lo = np.array([-self.support(-e) for e in np.eye(self.dim)])
        hi = np.array([self.support(e) for e in np.eye(self.dim)])
        return lo, hi

    def chebyshev(self):
        """(center, radius) of the largest inscribed ball; radius -1 when empty,
        inf when the polytope contains arbitrarily large balls."""
        A, b = self.A, self.b
        norms = np.linalg.norm(A, axis=1)
        G = np.column_stack([A, norms])
        c = np.zeros(self.dim + 1)
        c[-1] = -1.0
        lb = np.full(self.dim + 1, -np.inf)
        lb[-1] = 0.0
        res = lpmod.solve(lpmod.LinearProgram(c=c, G=G, h=b, lb=lb))
        if res.status == lpmod.LpStatus.INFEASIBLE:
            return None, -1.0
        if res.status == lpmod.LpStatus.UNBOUNDED:
            return None, np.inf
        return res.x[:-1], float(res.x[-1])

    def is_full_dimensional(self, tol: float = TOL_GEOM) -> bool:
        _, r = self.chebyshev()
        return r > tol

    # -- operations ---------------------------------------------------------------

    def erode(self, ball_radius: float) -> "Polytope":
        """Minkowski difference with the inf-norm ball of the given radius.

        Each row (a, b) becomes (a, b - r*||a||_1), the support function of
        the ball in direction a.
        """
        if ball_radius < 0:
            raise ValueError("erosion radius must be nonnegative")
        if ball_radius == 0:
            return self
        hs = [
            Halfspace(h.normal, h.offset - ball_radius * float(np.sum(np.abs(h.normal))), h.strict)
            for h in self.halfspaces
        ]
        return Polytope(hs, dim=self.dim)

    def remove_redundant(self, tol: float = TOL_GEOM) -> "Polytope":
        """Drop rows whose removal does not change the set (one LP per row)."""
        keep = list(range(len(self.halfspaces)))
        A, b = self.A, self.b
        i = 0
        while i < len(keep):
            row = keep[i]
            others = keep[:i] + keep[i + 1 :]
            if not others:
                break
            res = lpmod.solve(
                lpmod.LinearProgram(c=-A[row], G=A[others], h=b[others])
            )
            if res.status == lpmod.LpStatus.OPTIMAL and -res.value <= b[row] + tol:
                keep.pop(i)
            else:
                i += 1
        return Polytope([self.halfspaces[j] for j in keep], dim=self.dim)

    def enumerate_vertices(self) -> np.ndarray:
        """All extreme points of the closure, deduplicated at TOL_VERTEX.

        Double-description style: start from the bounding box's vertex set and
        clip it by one halfspace at a time, tracking active sets for edge
        detection. Flat (lower-dimensional) inputs fall back to enumerating
        intersections of dim-subsets of constraints.
        """
        if self._vertices is not None:
            return self._vertices
        if self.dim > VERTEX_DIM_CAP:
            raise DimensionTooLarge(
                f"vertex enumeration capped at dimension {VERTEX_DIM_CAP}, got {self.dim}"
            )
        if self.is_empty():
            self._vertices = np.empty((0, self.dim))
            return self._vertices
        lo, hi = self.bounding_box()  # raises Unbounded
        if self.dim == 0 or not self.halfspaces:
            raise Unbounded("polytope with no constraints is unbounded")
        A, b = _normalized_rows(self.A, self.b)
        if np.any(hi - lo <= 2 * TOL_VERTEX):
            verts = _vertices_combinatorial(A, b, self.dim)
        else:
            verts = _vertices_by_clipping(A, b, lo, hi)
        verts = _dedup(verts)
        inside = [v for v in verts if np.all(A @ v - b <= 10 * TOL_GEOM)]
        verts = np.array(inside) if inside else np.empty((0, self.dim))
        order = np.lexsort(verts.T[::-1]) if len(verts) else []
        self._vertices = verts[order] if len(verts) else verts
        return self._vertices

    def area_2d(self) -> float:
        """Shoelace area (2-D only), for partition coverage diagnostics."""
        if self.dim != 2:
            raise GeometryError("area_2d requires a 2-D polytope")
        V = self.enumerate_vertices()
        if len(V) < 3:
            return 0.0
        c = V.mean(axis=0)
        ang = np.arctan2(V[:, 1] - c[1], V[:, 0] - c[0])
        V = V[np.argsort(ang)]
        x, y = V[:, 0], V[:, 1]
        return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))

    # -- serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "A": [list(h.normal) for h in self.halfspaces],
            "b": [h.offset for h in self.halfspaces],
            "strict": [h.strict for h in self.halfspaces],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Polytope":
        strict = d.get("strict")
        return cls.from_inequalities(d["A"], d["b"], strict=strict)

    def __repr__(self):
        return f"Polytope(dim={self.dim}, rows={len(self.halfspaces)})"


# -- vertex enumeration internals ------------------------------------------------


def _normalized_rows(A, b):
    norms = np.linalg.norm(A, axis=1)
    return A / norms[:, None], b / norms


def _dedup(points, tol: float = TOL_VERTEX):
    out = []
    for p in points:
        if not any(np.max(np.abs(p - q)) <= tol for q in out):
            out.append(np.asarray(p, dtype=float))
    return np.array(out) if out else np.empty((0, points.shape[1] if len(points) else 0))


def _vertices_by_clipping(A, b, lo, hi) -> np.ndarray:
    n = A.shape[1]
    m = A.shape[0]
    pad = max(1.0, 1e-6 * float(np.max(np.abs(np.concatenate([lo, hi])))))
    lo = lo - pad
    hi = hi + pad
    # box facet pseudo-rows get ids m .. m+2n-1; id m+2j is x_j <= hi_j,
    # id m+2j+1 is -x_j <= -lo_j
    normals = {m + 2 * j: _unit(j, n) for j in range(n)}
    normals.update({m + 2 * j + 1: -_unit(j, n) for j in range(n)})
    for i in range(m):
        normals[i] = A[i]

    verts: list[np.ndarray] = []
    acts: list[set] = []
    for corner in itertools.product(*[(0, 1)] * n):
        v = np.array([hi[j] if corner[j] else lo[j] for j in range(n)])
        act = {m + 2 * j if corner[j] else m + 2 * j + 1 for j in range(n)}
        verts.append(v)
        acts.append(act)

    for i in range(m):
        a, bi = A[i], b[i]
        s = np.array([a @ v - bi for v in verts])
        if not len(s):
            return np.empty((0, n))
        out_idx = np.where(s > TOL_GEOM)[0]
        if not len(out_idx):
            for k in np.where(np.abs(s) <= TOL_GEOM)[0]:
                acts[k].add(i)
            continue
        keep_idx = np.where(s <= TOL_GEOM)[0]
        strict_in = np.where(s < -TOL_GEOM)[0]
        new_pts, new_acts = [], []
        for u in strict_in:
            for w in out_idx:
                common = acts[u] & acts[w]
                if len(common) < n - 1:
                    continue
                M = np.array([normals[j] for j in common])
                if np.linalg.matrix_rank(M, tol=1e-9) != n - 1:
                    continue
                t = s[u] / (s[u] - s[w])
                p = verts[u] + t * (verts[w] - verts[u])
                new_pts.append(p)
                new_acts.append(common | {i})
        next_verts, next_acts = [], []
        for k in keep_idx:
            if abs(s[k]) <= TOL_GEOM:
                acts[k].add(i)
            next_verts.append(verts[k])
            next_acts.append(acts[k])
        for p, act in zip(new_pts, new_acts):
            merged = False
            for q_idx, q in enumerate(next_verts):
                if np.max(np.abs(p - q)) <= TOL_VERTEX:
                    next_acts[q_idx] |= act
                    merged = True
                    break
            if not merged:
                next_verts.append(p)
                next_acts.append(act)
        verts, acts = next_verts, next_acts

    return np.array(verts) if verts else np.empty((0, n))


def _vertices_combinatorial(A, b, n) -> np.ndarray:
    """Intersect every n-subset of constraints; keep solutions in the set.

    Used for flat polytopes (shared facets and other lower-dimensional sets)
    where clipping from a degenerate box is ill-posed.
    """
    m = A.shape[0]
    pts = []
    for S in itertools.combinations(range(m), n):
        M = A[list(S)]
        if abs(np.linalg.det(M)) < 1e-10:
            continue
        v = np.linalg.solve(M, b[list(S)])
        if not np.all(np.isfinite(v)):
            continue
        if np.all(A @ v - b <= 10 * TOL_GEOM):
            pts.append(v)
    return np.array(pts) if pts else np.empty((0, n))


def _unit(j, n):
    e = np.zeros(n)
    e[j] = 1.0
    return e


# -- partitions ----------------------------------------------------------------


@dataclass
class ConvexPartition:
    """Cells with integer labels covering an ambient polytope (-1 allowed)."""

    ambient: Polytope
    cells: list = field(default_factory=list)
    labels: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.cells) != len(self.labels):
            raise ValueError("one label per cell required")

    def check(self, rng=None, n_samples: int = 200) -> list:
        """Diagnostics for the partition invariants; empty list means valid.

        Pairwise interior disjointness is checked by LP; coverage by area
        accounting in 2-D and by sampled membership otherwise.
        """
        issues = []
        margin = 10 * TOL_GEOM
        for i in range(len(self.cells)):
            for j in range(i + 1, len(self.cells)):
                ci, cj = self.cells[i], self.cells[j]
                G = np.vstack([ci.A, cj.A])
                h = np.concatenate([ci.b - margin, cj.b - margin])
                if lpmod.feasible(lpmod.LinearProgram(c=np.zeros(ci.dim), G=G, h=h)):
                    issues.append(f"cells {i} and {j} share interior points")
        if self.ambient.dim == 2:
            total = sum(c.area_2d() for c in self.cells)
            amb = self.ambient.area_2d()
            if amb > 0 and abs(total - amb) > 1e-6 * max(1.0, amb):
                issues.append(
                    f"cell areas sum to {total:.9g}, ambient area is {amb:.9g}"
                )
        else:
            rng = rng or np.random.default_rng(0)
            lo, hi = self.ambient.bounding_box()
            found = 0
            tried = 0
            while found < n_samples and tried < 100 * n_samples:
                x = rng.uniform(lo, hi)
                tried += 1
                if not self.ambient.contains(x):
                    continue
                found += 1
                if not any(c.contains(x, tol=TOL_GEOM) for c in self.cells):
                    issues.append(f"sample {x.tolist()} covered by no cell")
        return issues
