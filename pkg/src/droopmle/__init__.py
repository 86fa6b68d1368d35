"""Decentralized estimation in droop-controlled DC microgrids.

Simulates the steady-state bus voltage of a single-bus DC microgrid
whose converters follow an adaptive droop law, and implements each
controller's maximum likelihood estimator of the remote generation
capacities and the aggregate bus load from noisy voltage measurements
taken during a short reference-voltage training sequence. Includes
Cramér–Rao bound analysis of both parameterizations and a Monte Carlo
driver that maps estimation accuracy against the bound over a grid of
training amplitudes.

Layout
------
grid         Steady-state electrical model and bus-voltage solver.
training     Training plan construction and excitation validation.
measurement  Forward simulation and the measurement noise model.
estimator    Regression assembly and the maximum likelihood solve.
crb          Sensitivities, information matrices, Cramér–Rao bounds.
experiment   Monte Carlo sweep driver, single-trial diagnostics.
cli          The droopmle command line tool.
"""

from .exceptions import (
    DroopmleError,
    InfeasibleOperatingPoint,
    InsufficientExcitationError,
    InvalidPlanError,
    SingularInformationError,
    SingularSensitivityError,
)
from .grid import (
    LoadModel,
    MicrogridConfig,
    SteadyStateSolution,
    balance_residual,
    bus_voltage,
    nominal_voltage,
    solve_bus_voltage,
    virtual_admittance,
)
from .training import (
    TrainingPlan,
    check_plan_against_config,
    hadamard_plan,
    load_plan_csv,
    save_plan_csv,
    validate_excitation,
)
from .measurement import (
    MeasurementSet,
    SlotTrace,
    noise_variance,
    observe,
    save_measurements_csv,
    simulate_training,
)
from .estimator import (
    ParameterVector,
    RegressionSystem,
    assemble_full,
    assemble_transformed,
    map_star_to_theta,
    map_theta_to_star,
    parameter_names,
    solve_mle,
    total_load,
    transform_load,
    true_parameters,
    untransform_load,
)
from .crb import (
    SensitivityRecord,
    crb_full,
    crb_transformed,
    predicted_rrmse,
    sensitivities,
)
from .experiment import (
    EstimateReport,
    ExperimentSpec,
    SweepResult,
    default_delta_grid,
    report_crb,
    rrmse,
    run_single,
    run_sweep,
)
from ._backend import available_backends, backend_name, set_backend

__version__ = "0.1.0"

__all__ = [
    "DroopmleError",
    "InfeasibleOperatingPoint",
    "InsufficientExcitationError",
    "InvalidPlanError",
    "SingularInformationError",
    "SingularSensitivityError",
    "LoadModel",
    "MicrogridConfig",
    "SteadyStateSolution",
    "balance_residual",
    "bus_voltage",
    "nominal_voltage",
    "solve_bus_voltage",
    "virtual_admittance",
    "TrainingPlan",
    "check_plan_against_config",
    "hadamard_plan",
    "load_plan_csv",
    "save_plan_csv",
    "validate_excitation",
    "MeasurementSet",
    "SlotTrace",
    "noise_variance",
    "observe",
    "save_measurements_csv",
    "simulate_training",
    "ParameterVector",
    "RegressionSystem",
    "assemble_full",
    "assemble_transformed",
    "map_star_to_theta",
    "map_theta_to_star",
    "parameter_names",
    "solve_mle",
    "total_load",
    "transform_load",
    "true_parameters",
    "untransform_load",
    "SensitivityRecord",
    "crb_full",
    "crb_transformed",
    "predicted_rrmse",
    "sensitivities",
    "EstimateReport",
    "ExperimentSpec",
    "SweepResult",
    "default_delta_grid",
    "report_crb",
    "rrmse",
    "run_single",
    "run_sweep",
    "available_backends",
    "backend_name",
    "set_backend",
    "__version__",
]
