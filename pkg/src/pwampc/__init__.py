"""Learning-based MPC for piecewise-affine systems.

Train a switching-sequence classifier with a feasibility certificate, then
control online by solving a single linear program per step.
"""

from .geometry import ConvexPartition, Halfspace, Polytope
from .mpc import (
    MpcConfig,
    MpcSolution,
    SolveStatus,
    SwitchingSequence,
    solve_fixed,
    solve_hybrid_bnb,
    solve_hybrid_exhaustive,
)
from .pwa import PwaSystem, load_system, save_system

__version__ = "0.1.0"

__all__ = [
    "ConvexPartition",
    "Halfspace",
    "Polytope",
    "MpcConfig",
    "MpcSolution",
    "SolveStatus",
    "SwitchingSequence",
    "PwaSystem",
    "load_system",
    "save_system",
    "solve_fixed",
    "solve_hybrid_bnb",
    "solve_hybrid_exhaustive",
    "__version__",
]
