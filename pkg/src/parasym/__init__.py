"""Moving-plane diagnostics for symmetric reaction-diffusion problems on grids."""

from .domain import Domain, DomainError, Field, build_interval, build_symmetric_2d, omega_lambda_components, reflect
from .dynamics import (
    OmegaEstimate,
    classify_entire_run,
    gamma_normalize,
    heteroclinic_from,
    morse_membership,
    omega_estimate,
    track_lambda,
    verify_theorem1,
    verify_theorem2_cases,
)
from .equilibria import (
    EquilibriumRecord,
    classify,
    equilibrium_sweep,
    find_equilibrium,
    leading_eigenpair,
    linearize_at,
)
from .nonlinearity import Nonlinearity, catalog_get, forcing_get
from .reflection import capital_lambda, capital_lambda_bruteforce, v_lambda
from .solver import SolverParams, Trajectory, evolve, step

__version__ = "0.1.0"

__all__ = [
    "Domain", "DomainError", "Field", "build_interval", "build_symmetric_2d",
    "omega_lambda_components", "reflect",
    "OmegaEstimate", "classify_entire_run", "gamma_normalize", "heteroclinic_from",
    "morse_membership", "omega_estimate", "track_lambda", "verify_theorem1",
    "verify_theorem2_cases",
    "EquilibriumRecord", "classify", "equilibrium_sweep", "find_equilibrium",
    "leading_eigenpair", "linearize_at",
    "Nonlinearity", "catalog_get", "forcing_get",
    "capital_lambda", "capital_lambda_bruteforce", "v_lambda",
    "SolverParams", "Trajectory", "evolve", "step",
    "__version__",
]
