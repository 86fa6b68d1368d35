"""Decentralized maximum-likelihood estimation from one controller's view.

Controller k knows its own capacity W_k and every unit's training
sequence, measures the bus voltage once per slot, and rearranges the
power balance into a linear regression whose unknowns are the remote
capacities plus the load. Two parameterizations are supported:

* full: the load appears as its three rated components
  (p_cr, p_cc, p_cp);
* transformed: the load appears as (omega, chi, zeta), the power drawn
  at the nominal bus voltage and its first and second voltage
  sensitivities. omega is the practically interesting aggregate-demand
  estimate and is far better identified than the components.

With Gaussian measurement noise the least-squares solution of the
regression is the MLE.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _design, grid, measurement, training
from .exceptions import InsufficientExcitationError

RCOND_LIMIT = 1e-10

FULL = "full"
TRANSFORMED = "transformed"

_LOAD_NAMES = {
    FULL: ("p_cr", "p_cc", "p_cp"),
    TRANSFORMED: ("load_at_nominal", "load_slope", "load_curvature"),
}


def parameter_names(unit_count: int, controller: int, variant: str) -> tuple:
    """Report-order names: remote capacities, then the load triple."""
    if variant not in _LOAD_NAMES:
        raise ValueError(f"unknown variant {variant!r}")
    gens = tuple(f"W{u}" for u in range(1, unit_count + 1) if u != controller)
    return gens + _LOAD_NAMES[variant]


@dataclass(frozen=True)
class ParameterVector:
    """An estimate (or ground truth) of one controller's unknowns.

    Attributes
    ----------
    variant : str
        "full" or "transformed" (load parameterization).
    controller : int
        1-based index of the estimating unit.
    values : ndarray, shape (U + 2,)
        Remote capacities in unit order, then the load triple.
    names : tuple of str
        Column names matching values.
    residual_norm : float or None
        Norm of the regression residual, set by solve_mle.
    """

    variant: str
    controller: int
    values: np.ndarray
    names: tuple
    residual_norm: float = None

    def __post_init__(self):
        arr = np.array(self.values, dtype=float, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        if len(self.names) != arr.shape[0]:
            raise ValueError("names and values lengths differ")

    @property
    def generation(self) -> dict:
        """Remote capacity estimates keyed by 1-based unit index."""
        out = {}
        for name, value in zip(self.names, self.values):
            if name.startswith("W"):
                out[int(name[1:])] = float(value)
        return out

    @property
    def load(self) -> tuple:
        """The trailing load triple."""
        return tuple(float(v) for v in self.values[-3:])

    def as_dict(self) -> dict:
        return {name: float(v) for name, v in zip(self.names, self.values)}


@dataclass(frozen=True)
class RegressionSystem:
    """Assembled least-squares system design @ theta = response * W_k.

    Diagnostics (rank, smallest singular value, condition number) are
    those of the assembled design matrix itself.
    """

    variant: str
    controller: int
    design: np.ndarray
    response: np.ndarray
    own_capacity: float
    rated_voltage: float
    names: tuple
    rank: int
    smallest_singular_value: float
    condition_number: float
    center: float = None
    _values: np.ndarray = None
    _deviations: np.ndarray = None
    _alphas: np.ndarray = None

    @property
    def parameter_count(self) -> int:
        return self.design.shape[1]


def _diagnostics(design: np.ndarray):
    singulars = np.linalg.svd(design, compute_uv=False)
    cutoff = max(design.shape) * np.finfo(float).eps * singulars[0]
    rank = int(np.count_nonzero(singulars > cutoff))
    smallest = float(singulars[-1])
    condition = float(singulars[0] / singulars[-1]) if smallest > 0 else np.inf
    return rank, smallest, condition


def _assembly_inputs(measurements, plan, controller, rated_voltage, min_voltage):
    if measurements.slots != plan.slots:
        raise ValueError(
            f"measurement count {measurements.slots} does not match "
            f"plan slots {plan.slots}"
        )
    if not 1 <= controller <= plan.unit_count:
        raise ValueError(f"controller index {controller} out of range")
    alphas = _design.slot_alphas(plan.deviations, rated_voltage, min_voltage)
    return np.asarray(measurements.values, dtype=float), alphas


def assemble_full(
    measurements: measurement.MeasurementSet,
    plan: training.TrainingPlan,
    controller: int,
    own_capacity: float,
    rated_voltage: float,
    min_voltage: float,
) -> RegressionSystem:
    """Regression in the rated load basis [v^2/x^2, v/x, 1].

    Column u (u != k) is v * alpha_u * (v - x - dx_u); the response is
    -v * alpha_k * (v - x - dx_k), to be scaled by the controller's own
    capacity. With noiseless measurements the truth satisfies the system
    exactly.
    """
    values, alphas = _assembly_inputs(
        measurements, plan, controller, rated_voltage, min_voltage
    )
    design, response = _design.full_design(
        values, plan.deviations, alphas, controller - 1, rated_voltage
    )
    rank, smallest, condition = _diagnostics(design)
    return RegressionSystem(
        variant=FULL,
        controller=controller,
        design=design,
        response=response,
        own_capacity=float(own_capacity),
        rated_voltage=rated_voltage,
        names=parameter_names(plan.unit_count, controller, FULL),
        rank=rank,
        smallest_singular_value=smallest,
        condition_number=condition,
        _values=values,
        _deviations=plan.deviations,
        _alphas=alphas,
    )


def assemble_transformed(
    measurements: measurement.MeasurementSet,
    plan: training.TrainingPlan,
    controller: int,
    own_capacity: float,
    rated_voltage: float,
    min_voltage: float,
    nominal_voltage: float = None,
) -> RegressionSystem:
    """Regression in the aggregate load basis [1, dv, dv^2].

    dv = v - nominal_voltage; the generation block and the response are
    identical to the full variant. The nominal voltage defaults to the
    measurement set's pre-training value (measured or exact).
    """
    values, alphas = _assembly_inputs(
        measurements, plan, controller, rated_voltage, min_voltage
    )
    if nominal_voltage is None:
        nominal_voltage = measurements.nominal_value
    design, response = _design.centered_design(
        values,
        plan.deviations,
        alphas,
        controller - 1,
        rated_voltage,
        nominal_voltage,
    )
    rank, smallest, condition = _diagnostics(design)
    return RegressionSystem(
        variant=TRANSFORMED,
        controller=controller,
        design=design,
        response=response,
        own_capacity=float(own_capacity),
        rated_voltage=rated_voltage,
        names=parameter_names(plan.unit_count, controller, TRANSFORMED),
        rank=rank,
        smallest_singular_value=smallest,
        condition_number=condition,
        center=float(nominal_voltage),
        _values=values,
        _deviations=plan.deviations,
        _alphas=alphas,
    )


def solve_mle(system: RegressionSystem, rcond_limit: float = RCOND_LIMIT) -> ParameterVector:
    """Least-squares MLE via orthogonal factorization.

    The solve never forms the normal equations. For the full variant the
    quadratic load block is internally re-based about the mean measured
    voltage and every column is scaled to unit norm before
    factorization; both steps are exact re-parameterizations with the
    same minimizer, and they keep the rank decision meaningful at small
    training amplitudes where the raw rated-basis columns are nearly
    collinear. The numerical rank (singular values above
    max(N, P) * eps * s_max) and the reciprocal condition number of that
    preconditioned matrix drive the rejection gate.

    Raises
    ------
    InsufficientExcitationError
        If the rank is below U + 2 or the reciprocal condition number
        falls below rcond_limit.
    """
    if system.variant == FULL:
        center = float(np.mean(system._values))
        design, response = _design.centered_design(
            system._values,
            system._deviations,
            system._alphas,
            system.controller - 1,
            system.rated_voltage,
            center,
        )
    else:
        center = None
        design, response = system.design, system.response
    rhs = response * system.own_capacity

    norms = np.linalg.norm(design, axis=0)
    scale = np.where(norms > 0.0, norms, 1.0)
    scaled = design / scale
    rank, singulars = _design.equilibrated_rank(design)
    required = design.shape[1]
    rcond = float(singulars[-1] / singulars[0]) if singulars[0] > 0 else 0.0
    if rank < required or rcond < rcond_limit:
        raise InsufficientExcitationError(
            f"controller {system.controller}: regression matrix is "
            f"numerically rank-deficient (rank {rank} of {required}, "
            f"rcond {rcond:.3e}); the plan does not excite all parameters",
            rank=rank,
            required=required,
            rcond=rcond,
        )
    solution = np.linalg.lstsq(scaled, rhs, rcond=None)[0] / scale
    if center is not None:
        solution = _design.rebase_load_params(
            solution, center, system.rated_voltage
        )
    residual = float(
        np.linalg.norm(system.design @ solution - system.response * system.own_capacity)
    )
    return ParameterVector(
        variant=system.variant,
        controller=system.controller,
        values=solution,
        names=system.names,
        residual_norm=residual,
    )


def transform_load(p_cr, p_cc, p_cp, nominal_voltage, rated_voltage):
    """Map rated load components to (omega, chi, zeta) at a nominal voltage.

    omega = (v^2/x^2) p_cr + (v/x) p_cc + p_cp is the power drawn at the
    nominal voltage v; chi and zeta are its first and second voltage
    sensitivities. The map is a bijection for fixed (v, x).
    """
    v, x = nominal_voltage, rated_voltage
    omega = (v * v / (x * x)) * p_cr + (v / x) * p_cc + p_cp
    chi = 2.0 * v * p_cr / (x * x) + p_cc / x
    zeta = p_cr / (x * x)
    return omega, chi, zeta


def untransform_load(omega, chi, zeta, nominal_voltage, rated_voltage):
    """Inverse of transform_load: recover (p_cr, p_cc, p_cp)."""
    v, x = nominal_voltage, rated_voltage
    p_cr = zeta * x * x
    p_cc = (chi - 2.0 * v * zeta) * x
    p_cp = omega - v * v * zeta - (v / x) * p_cc
    return p_cr, p_cc, p_cp


def map_theta_to_star(
    theta: ParameterVector, nominal_voltage: float, rated_voltage: float
) -> ParameterVector:
    """Re-express a full-variant vector in the transformed load basis."""
    if theta.variant != FULL:
        raise ValueError("expected a full-variant parameter vector")
    values = np.array(theta.values, dtype=float)
    values[-3:] = transform_load(*theta.load, nominal_voltage, rated_voltage)
    names = theta.names[:-3] + _LOAD_NAMES[TRANSFORMED]
    return ParameterVector(
        variant=TRANSFORMED,
        controller=theta.controller,
        values=values,
        names=names,
        residual_norm=theta.residual_norm,
    )


def map_star_to_theta(
    theta_star: ParameterVector, nominal_voltage: float, rated_voltage: float
) -> ParameterVector:
    """Re-express a transformed-variant vector in rated load components."""
    if theta_star.variant != TRANSFORMED:
        raise ValueError("expected a transformed-variant parameter vector")
    values = np.array(theta_star.values, dtype=float)
    values[-3:] = untransform_load(*theta_star.load, nominal_voltage, rated_voltage)
    names = theta_star.names[:-3] + _LOAD_NAMES[FULL]
    return ParameterVector(
        variant=FULL,
        controller=theta_star.controller,
        values=values,
        names=names,
        residual_norm=theta_star.residual_norm,
    )


def total_load(theta_star: ParameterVector) -> float:
    """Aggregate-demand estimate: the power drawn at the nominal voltage."""
    if theta_star.variant != TRANSFORMED:
        raise ValueError("expected a transformed-variant parameter vector")
    return float(theta_star.values[-3])


def true_parameters(
    config: grid.MicrogridConfig,
    controller: int,
    variant: str = FULL,
    nominal_voltage: float = None,
) -> ParameterVector:
    """Ground-truth parameter vector for a controller's regression."""
    if not 1 <= controller <= config.unit_count:
        raise ValueError(f"controller index {controller} out of range")
    remote = [
        w for u, w in enumerate(config.capacities, start=1) if u != controller
    ]
    load = config.load
    if variant == FULL:
        tail = (load.p_cr, load.p_cc, load.p_cp)
    elif variant == TRANSFORMED:
        if nominal_voltage is None:
            nominal_voltage = grid.nominal_voltage(config)
        tail = transform_load(
            load.p_cr, load.p_cc, load.p_cp, nominal_voltage, config.rated_voltage
        )
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return ParameterVector(
        variant=variant,
        controller=controller,
        values=np.array(remote + list(tail), dtype=float),
        names=parameter_names(config.unit_count, controller, variant),
    )
