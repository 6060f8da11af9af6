"""Finite-volume solvers and property checks for degenerate-singular diffusion ``u_t = Lap phi(u) + f``."""

from .errors import PorodynError
from .evolution import SourceSpec, Trajectory, solve_any, solve_cauchy, solve_with_reaction, trotter_kato_sweep
from .grid import BC, Field, Grid
from .phi_model import PhiModel, build_smooth_approx
from .resolvent import ResolventProblem, solve, solve_cellwise_monotone, solve_newton, solve_prox_hminus1

__all__ = [
    "BC", "Field", "Grid", "PhiModel", "PorodynError", "ResolventProblem", "SourceSpec", "Trajectory",
    "build_smooth_approx", "solve", "solve_any", "solve_cauchy", "solve_cellwise_monotone", "solve_newton",
    "solve_prox_hminus1", "solve_with_reaction", "trotter_kato_sweep",
]
__version__ = "0.1.0"
