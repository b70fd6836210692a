"""Terminal ingredient synthesis: LQR gain and the invariant terminal set.

The terminal set is the maximal constraint-admissible invariant set of the
closed loop x(k+1) = (A + B K) x restricted to one region, computed by the
classic fixed-point iteration on preimages with per-halfspace redundancy
elimination. Any invariant subset would do for the controller's guarantees;
maximality just gives the largest feasible-at-the-end region.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import TOL_GEOM, Polytope


class RiccatiDiverged(Exception):
    """Riccati iteration failed to converge (e.g. uncontrollable pair)."""


class NoConvergence(Exception):
    """Invariant-set iteration hit its cap before reaching a fixed point."""


@dataclass(frozen=True)
class TerminalSpec:
    K: np.ndarray
    Xf: Polytope
    region_index: int

    def certificate_issues(self, sys) -> list:
        """Check invariance and admissibility on the vertex set."""
        issues = []
        reg = sys.regions[self.region_index - 1]
        Acl = reg.A + reg.B @ self.K
        for v in self.Xf.enumerate_vertices():
            if not reg.polytope.contains(v, tol=10 * TOL_GEOM):
                issues.append(f"vertex {v.tolist()} outside region {self.region_index}")
            if not sys.state_set.contains(v, tol=10 * TOL_GEOM):
                issues.append(f"vertex {v.tolist()} outside X")
            if not self.Xf.contains(Acl @ v, tol=10 * TOL_GEOM):
                issues.append(f"vertex {v.tolist()} leaves the set under the closed loop")
            if not sys.input_set.contains(np.atleast_1d(self.K @ v), tol=10 * TOL_GEOM):
                issues.append(f"gain violates U at vertex {v.tolist()}")
        return issues


def lqr_gain(A, B, Q, R, max_iter: int = 10_000, tol: float = 1e-10) -> np.ndarray:
    """Discrete-time LQR gain for x(k+1) = A x + B u with u = K x.

    Q and R are the (possibly non-square) stage-cost weights; the Riccati
    recursion runs on their quadratic surrogates Q'Q and R'R. Iterates the
    fixed point P = Qq + A'PA - A'PB (Rq + B'PB)^-1 B'PA until the residual
    drops below tol; raises RiccatiDiverged at the cap or if the closed loop
    is not contractive.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    Qq = Q.T @ Q
    Rq = R.T @ R
    P = Qq.copy()
    for _ in range(max_iter):
        BPB = Rq + B.T @ P @ B
        try:
            gain_core = np.linalg.solve(BPB, B.T @ P @ A)
        except np.linalg.LinAlgError as exc:
            raise RiccatiDiverged(f"singular input-cost block: {exc}") from exc
        P_next = Qq + A.T @ P @ A - A.T @ P @ B @ gain_core
        resid = np.max(np.abs(P_next - P))
        P = 0.5 * (P_next + P_next.T)
        if resid <= tol:
            K = -np.linalg.solve(Rq + B.T @ P @ B, B.T @ P @ A)
            if np.max(np.abs(np.linalg.eigvals(A + B @ K))) >= 1.0:
                raise RiccatiDiverged("closed loop not contractive")
            return K
        if not np.all(np.isfinite(P)) or np.max(np.abs(P)) > 1e12:
            raise RiccatiDiverged("Riccati iterates diverged")
    raise RiccatiDiverged(f"no convergence within {max_iter} iterations")


def max_admissible_set(
    A_cl,
    constraints: Polytope,
    region: Polytope,
    K,
    U: Polytope,
    iter_cap: int = 200,
) -> Polytope:
    """Maximal set S with A_cl S within S, inside region, X, and {x: Kx in U}.

    Starts from S0 = region ∩ constraints ∩ {Kx in U} and intersects with its
    own preimage under A_cl until nothing new is added. Each candidate row is
    kept only if it cuts the current set (per-row support LP), which doubles
    as the fixed-point test.
    """
    A_cl = np.atleast_2d(np.asarray(A_cl, dtype=float))
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if np.max(np.abs(np.linalg.eigvals(A_cl))) >= 1.0:
        raise ValueError("closed-loop matrix must have spectral radius < 1")

    A0 = np.vstack([region.A, constraints.A, U.A @ K])
    b0 = np.concatenate([region.b, constraints.b, U.b])
    S = Polytope.from_inequalities(A0, b0).remove_redundant()

    for _ in range(iter_cap):
        cand_A = S.A @ A_cl
        cand_b = S.b
        added = False
        for i in range(cand_A.shape[0]):
            a, bi = cand_A[i], cand_b[i]
            if np.linalg.norm(a) < 1e-12:
                continue
            if S.support(a) > bi + TOL_GEOM:
                S = Polytope.from_inequalities(
                    np.vstack([S.A, a[None, :]]), np.concatenate([S.b, [bi]])
                )
                added = True
        if not added:
            return S.remove_redundant()
        S = S.remove_redundant()
    raise NoConvergence(f"no fixed point within {iter_cap} preimage iterations")


def synthesize_terminal(sys, cfg, region_index: int = 1, iter_cap: int = 200) -> TerminalSpec:
    """LQR gain plus invariant set for one region; the benchmark recipe."""
    reg = sys.regions[region_index - 1]
    K = lqr_gain(reg.A, reg.B, cfg.Q, cfg.R)
    Xf = max_admissible_set(
        reg.A + reg.B @ K,
        sys.state_set,
        reg.polytope,
        K,
        sys.input_set,
        iter_cap=iter_cap,
    )
    spec = TerminalSpec(K=K, Xf=Xf, region_index=region_index)
    issues = spec.certificate_issues(sys)
    if issues:
        raise NoConvergence("synthesized terminal set fails its certificate: " + "; ".join(issues))
    return spec
