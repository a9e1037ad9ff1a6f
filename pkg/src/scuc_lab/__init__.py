"""Desk-scale security-constrained unit commitment lab.

Builds the SCUC mixed-integer program, solves it with iterative transmission
screening, and speeds up repeated solves with predictors trained on earlier
solutions.
"""

from .powergrid import (ConstraintKey, Generator, ParameterVector, PowerNetwork, TransmissionLine, UCInstance,
                        UCSolution, load_instance, save_instance, validate_solution)
from .sampling import ProfileStats, ShiftSpec, fit_profile_stats, generate_ood_variation, generate_variation
from .solve import BackendOptions, Hints, SolveStats, WarmStart, backend_solve, solve_full, solve_scuc

__version__ = "0.1.0"

__all__ = [
    "ConstraintKey", "Generator", "ParameterVector", "PowerNetwork", "TransmissionLine", "UCInstance", "UCSolution",
    "load_instance", "save_instance", "validate_solution", "ProfileStats", "ShiftSpec", "fit_profile_stats",
    "generate_ood_variation", "generate_variation", "BackendOptions", "Hints", "SolveStats", "WarmStart",
    "backend_solve", "solve_full", "solve_scuc", "__version__",
]
