"""Regression Monte Carlo for coupled Markovian BSDE systems whose drivers
grow linearly in ``z`` with a state-dependent coefficient.

The pipeline: describe a problem (:mod:`.model`), simulate the forward
diffusion (:mod:`.forward`), smooth the generator (:mod:`.mollifier`),
solve backward by least squares (:mod:`.solver`) for a schedule of
smoothing levels (:mod:`.scheme`), and check the result with the
measure-change and density-ratio diagnostics (:mod:`.girsanov`,
:mod:`.domination`).
"""

__version__ = "0.1.0"

from .errors import (BSDELabError, CertificationError, ConfigError, DimensionalityError,
                     SimulationError, SolverError, StepFailure, ValidationError)
from .model import (DiffusionSpec, GeneratorSpec, ProblemSpec, TerminalSpec, ValidationReport,
                    validate_problem)
from .forward import PathEnsemble, TimeGrid, moment_estimate_check, simulate
from .mollifier import MollificationParams, MollifiedGenerator, certify_properties, mollify
from .regression import BasisSpec
from .solver import SolutionStats, ValueFields, evaluate_fields, solve_backward
from .scheme import (ApproximationSchedule, ConvergenceReport, ProbeGrid, SolverConfig,
                     growth_bound_fit, run_scheme, uniform_estimates_check)
from .girsanov import (comparison_check, dominating_generator, p0_moment,
                       solve_dominating_bsde, stochastic_exponential)
from .domination import density_ratio, domination_study, estimate_law, lq_norm, reconstruct
from .catalogue import CATALOGUE, Scenario, get_scenario, list_scenarios

__all__ = [
    "ApproximationSchedule", "BSDELabError", "BasisSpec", "CATALOGUE", "CertificationError",
    "ConfigError", "ConvergenceReport", "DiffusionSpec", "DimensionalityError", "GeneratorSpec",
    "MollificationParams", "MollifiedGenerator", "PathEnsemble", "ProbeGrid", "ProblemSpec",
    "Scenario", "SimulationError", "SolutionStats", "SolverConfig", "SolverError",
    "StepFailure", "TerminalSpec", "TimeGrid", "ValidationError", "ValidationReport",
    "ValueFields", "certify_properties", "comparison_check", "density_ratio",
    "dominating_generator", "domination_study", "estimate_law", "evaluate_fields",
    "get_scenario", "growth_bound_fit", "list_scenarios", "lq_norm", "moment_estimate_check",
    "mollify", "p0_moment", "reconstruct", "run_scheme", "simulate", "solve_backward",
    "solve_dominating_bsde", "stochastic_exponential", "uniform_estimates_check",
    "validate_problem",
]
