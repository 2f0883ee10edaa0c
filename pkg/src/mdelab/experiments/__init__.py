"""Scenario-driven numerical checks and the command line interface."""

from .bumps import SplineBump
from .runners import (
    RunResult,
    ode_oracle,
    run_closure,
    run_convergence,
    run_semigroup,
    run_stability,
    run_synthesis,
    weak_form_residuals,
)
from .scenario import Scenario, load_scenario, scenario_from_document

__all__ = [
    "RunResult",
    "Scenario",
    "SplineBump",
    "load_scenario",
    "ode_oracle",
    "run_closure",
    "run_convergence",
    "run_semigroup",
    "run_stability",
    "run_synthesis",
    "scenario_from_document",
    "weak_form_residuals",
]
