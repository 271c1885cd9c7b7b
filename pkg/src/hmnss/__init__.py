"""Hybrid momentum-based Nash equilibrium seeking with coordinated resets."""
from .engine import HybridArc, JumpPolicy, Perturbation, closeness, run
from .errors import (ConfigError, DomainError, GraphError, HmnssError, NumericalError,
                     PreconditionError, SingularMatrixError)
from .full_info import HmNssParams, build_h1, initial_state
from .game import GameSpec, analytic_game, catalog_game, quadratic_game

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DomainError", "GameSpec", "GraphError", "HmNssParams", "HmnssError",
    "HybridArc", "JumpPolicy", "NumericalError", "Perturbation", "PreconditionError",
    "SingularMatrixError", "analytic_game", "build_h1", "catalog_game", "closeness",
    "initial_state", "quadratic_game", "run",
]
