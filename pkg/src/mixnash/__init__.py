"""Entropic mirror descent and mirror prox for mixed Nash equilibria.

Finite matrix games, grid-discretized continuous games, and Langevin
particle approximations share one step-size/bound/trace vocabulary.
"""
from .errors import ConfigError, DomainError, NumericalError
from .finite import MatrixGame, StochasticOracleConfig, brute_force_ne, duality_gap
from .grid import GridDensity, GridDomain, KernelGame, grid_duality_gap, solve_inf_md, solve_inf_mp
from .harness import ExperimentConfig, check_bounds, fit_rate
from .prox import StepSizeRule, gap_bound, make_rule, solve_md, solve_mp, solve_seeds
from .sgld import SgldSchedule, preconditioned_sgld_step, schedule_at, sgld_step

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DomainError", "NumericalError",
    "MatrixGame", "StochasticOracleConfig", "brute_force_ne", "duality_gap",
    "GridDensity", "GridDomain", "KernelGame", "grid_duality_gap", "solve_inf_md", "solve_inf_mp",
    "ExperimentConfig", "check_bounds", "fit_rate",
    "StepSizeRule", "gap_bound", "make_rule", "solve_md", "solve_mp", "solve_seeds",
    "SgldSchedule", "preconditioned_sgld_step", "schedule_at", "sgld_step",
]
