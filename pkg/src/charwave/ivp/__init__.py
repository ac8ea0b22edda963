"""Initial value problem on the half-line or a bounded interval."""
from .config import SimulationConfig, from_dict
from .data import InitialData, Profile, bump, constant, expression
from .solver import (FieldState, Grid, SolutionRecord, advance_step, build_grid, init_state,
                     run_bounded_domain, run_simulation)
from .demo import nonuniqueness_demo

__all__ = [
    "SimulationConfig", "from_dict", "InitialData", "Profile", "bump", "constant", "expression",
    "FieldState", "Grid", "SolutionRecord", "advance_step", "build_grid", "init_state",
    "run_bounded_domain", "run_simulation", "nonuniqueness_demo",
]
