"""Training-sequence construction and excitation validation.

During a training period every controller perturbs its reference
voltage by a known per-slot deviation within +/- delta*x. The resulting
bus-voltage wiggle is what makes the remote capacities and the load
identifiable; a plan is useful only if the regression matrix it induces
has full column rank U+2 for every controller, which
validate_excitation checks on the noise-free forward model.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.linalg import hadamard

from . import _design, grid
from .exceptions import InvalidPlanError

DEFAULT_SLOT_DURATION = 0.055
DEFAULT_SETTLE_TIME = 0.005


@dataclass(frozen=True)
class TrainingPlan:
    """A complete excitation schedule.

    Parameters
    ----------
    deviations : ndarray, shape (N, U)
        Per-slot reference-voltage deviations in volts, bounded by
        +/- amplitude.
    amplitude_fraction : float
        Deviation bound delta as a fraction of the rated voltage.
    rated_voltage : float
        System voltage x the deviations ride on.
    slot_duration : float
        Slot length T_S in seconds.
    settle_time : float
        Transient settling time tau excluded from each slot's averaging
        window; 0 < tau < T_S.

    A plan must have at least U + 2 slots, the number of parameters
    each controller estimates.
    """

    deviations: np.ndarray
    amplitude_fraction: float
    rated_voltage: float
    slot_duration: float = DEFAULT_SLOT_DURATION
    settle_time: float = DEFAULT_SETTLE_TIME

    def __post_init__(self):
        dev = np.array(self.deviations, dtype=float, copy=True)
        if dev.ndim != 2 or dev.size == 0:
            raise InvalidPlanError(f"deviation matrix must be N x U, got {dev.shape}")
        n_slots, n_units = dev.shape
        if n_slots < n_units + 2:
            raise InvalidPlanError(
                f"{n_slots} slots cannot excite {n_units + 2} parameters; "
                f"need at least {n_units + 2}"
            )
        if not (0.0 < self.amplitude_fraction):
            raise InvalidPlanError("amplitude_fraction must be positive")
        bound = self.amplitude
        if np.max(np.abs(dev)) > bound * (1.0 + 1e-12):
            raise InvalidPlanError(
                f"a deviation exceeds the amplitude bound {bound!r} V"
            )
        if not (0.0 < self.settle_time < self.slot_duration):
            raise InvalidPlanError("need 0 < settle_time < slot_duration")
        dev.setflags(write=False)
        object.__setattr__(self, "deviations", dev)

    @property
    def slots(self) -> int:
        return self.deviations.shape[0]

    @property
    def unit_count(self) -> int:
        return self.deviations.shape[1]

    @property
    def amplitude(self) -> float:
        """Deviation bound delta * x in volts."""
        return self.amplitude_fraction * self.rated_voltage

    def ref_voltages(self) -> np.ndarray:
        """Per-slot reference voltages x + deviations, shape (N, U)."""
        return self.rated_voltage + self.deviations


def hadamard_plan(
    unit_count: int,
    slots: int,
    amplitude_fraction: float,
    rated_voltage: float,
    slot_duration: float = DEFAULT_SLOT_DURATION,
    settle_time: float = DEFAULT_SETTLE_TIME,
) -> TrainingPlan:
    """Binary orthogonal training plan from Sylvester-Hadamard rows.

    Unit u is assigned row u+1 (skipping the constant all-ones row) of
    the Sylvester-Hadamard matrix of order 2**ceil(log2(max(N, U+1))),
    truncated to the first N slots and scaled to +/- delta*x.

    Parameters
    ----------
    unit_count : int
        Number of generation units U.
    slots : int
        Training length N; must be at least U + 2.
    amplitude_fraction : float
        Deviation bound delta (fraction of rated voltage).
    rated_voltage : float
        System voltage x in volts.

    Raises
    ------
    InvalidPlanError
        If slots < unit_count + 2.

    Notes
    -----
    Rows 2..U+1 are indexed by the bit masks 1..U, which probe only the
    lowest floor(log2(U)) + 1 bits of the slot index. The per-slot sign
    patterns therefore repeat with period 2**(floor(log2(U)) + 1)
    whatever the matrix order, so for U = 2**m - 1 (U = 1, 3, 7, ...)
    at most U + 1 distinct patterns exist and no slot count reaches the
    U + 2 rank needed for estimation. validate_excitation reports this;
    such unit counts need a user-supplied deviation matrix.
    """
    if unit_count < 1:
        raise InvalidPlanError("unit_count must be at least 1")
    if slots < unit_count + 2:
        raise InvalidPlanError(
            f"{slots} slots cannot excite {unit_count + 2} parameters; "
            f"need at least {unit_count + 2}"
        )
    order = 1 << int(np.ceil(np.log2(max(slots, unit_count + 1))))
    rows = hadamard(order)[1 : unit_count + 1, :slots]
    deviations = amplitude_fraction * rated_voltage * rows.T.astype(float)
    return TrainingPlan(
        deviations=deviations,
        amplitude_fraction=amplitude_fraction,
        rated_voltage=rated_voltage,
        slot_duration=slot_duration,
        settle_time=settle_time,
    )


def check_plan_against_config(config: grid.MicrogridConfig, plan: TrainingPlan):
    """Raise InvalidPlanError unless the plan is admissible for the grid.

    Checks unit-count agreement, rated-voltage agreement, and the
    amplitude bound delta <= 1 - v_min/x that keeps every per-slot
    reference voltage above min_voltage.
    """
    if plan.unit_count != config.unit_count:
        raise InvalidPlanError(
            f"plan drives {plan.unit_count} units, grid has {config.unit_count}"
        )
    if not np.isclose(plan.rated_voltage, config.rated_voltage):
        raise InvalidPlanError(
            f"plan rated voltage {plan.rated_voltage!r} does not match "
            f"grid rated voltage {config.rated_voltage!r}"
        )
    bound = config.max_deviation_fraction
    if plan.amplitude_fraction > bound * (1.0 + 1e-12):
        raise InvalidPlanError(
            f"amplitude fraction {plan.amplitude_fraction!r} exceeds the "
            f"admissible bound 1 - v_min/x = {bound!r}"
        )


@dataclass(frozen=True)
class ControllerExcitation:
    """Rank diagnostics of one controller's noise-free regression matrix."""

    controller: int
    rank: int
    required: int
    smallest_singular_value: float
    condition_number: float

    @property
    def sufficient(self) -> bool:
        return self.rank >= self.required


@dataclass(frozen=True)
class ExcitationReport:
    """Per-controller rank diagnostics for a (config, plan) pair."""

    entries: tuple

    @property
    def sufficient(self) -> bool:
        """True iff every controller's matrix has full column rank."""
        return all(e.sufficient for e in self.entries)

    def for_controller(self, controller: int) -> ControllerExcitation:
        for entry in self.entries:
            if entry.controller == controller:
                return entry
        raise KeyError(f"no diagnostics for controller {controller}")


def validate_excitation(
    config: grid.MicrogridConfig, plan: TrainingPlan, controllers=None
) -> ExcitationReport:
    """Check sufficient excitation on the noise-free forward model.

    Simulates the true per-slot bus voltages and assesses each requested
    controller's regression matrix in the same numerically honest form
    the estimator factors: load block centered at the mean slot voltage
    and every column scaled to unit norm, both exact
    reparameterizations. The reported rank counts singular values above
    max(N, U+2) * eps * s_max; the plan is sufficient for estimation iff
    the rank equals U + 2 for every controller. Assessing the raw
    rated-voltage basis instead would conflate column scale disparity
    with rank deficiency and veto small training amplitudes that the
    estimator handles.

    Rank deficiency is reported, not raised; structural plan defects
    raise InvalidPlanError.
    """
    check_plan_against_config(config, plan)
    if controllers is None:
        controllers = range(1, config.unit_count + 1)
    refs = plan.ref_voltages()
    voltages = grid.bus_voltage(config, refs)
    alphas = _design.slot_alphas(
        plan.deviations, config.rated_voltage, config.min_voltage
    )
    center = float(np.mean(voltages))
    required = config.unit_count + 2
    entries = []
    for controller in controllers:
        if not 1 <= controller <= config.unit_count:
            raise ValueError(f"controller index {controller} out of range")
        design, _ = _design.centered_design(
            voltages,
            plan.deviations,
            alphas,
            controller - 1,
            config.rated_voltage,
            center,
        )
        rank, singulars = _design.equilibrated_rank(design)
        smallest = float(singulars[-1])
        condition = float(singulars[0] / singulars[-1]) if smallest > 0 else np.inf
        entries.append(
            ControllerExcitation(
                controller=controller,
                rank=rank,
                required=required,
                smallest_singular_value=smallest,
                condition_number=condition,
            )
        )
    return ExcitationReport(entries=tuple(entries))


def save_plan_csv(plan: TrainingPlan, path):
    """Write the deviation matrix as CSV, one row per slot, volts."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        for row in plan.deviations:
            writer.writerow([repr(float(value)) for value in row])


def load_plan_csv(
    path,
    rated_voltage: float,
    amplitude_fraction: float = None,
    slot_duration: float = DEFAULT_SLOT_DURATION,
    settle_time: float = DEFAULT_SETTLE_TIME,
) -> TrainingPlan:
    """Load a deviation matrix (N rows, U columns, volts) from CSV.

    Accepts externally designed sequences; they pass through the same
    structural checks and can be vetted with validate_excitation. When
    amplitude_fraction is omitted it is inferred from the largest
    absolute deviation.
    """
    with open(path, newline="") as handle:
        rows = [
            [float(cell) for cell in row]
            for row in csv.reader(handle)
            if row
        ]
    deviations = np.asarray(rows, dtype=float)
    if amplitude_fraction is None:
        peak = float(np.max(np.abs(deviations))) if deviations.size else 0.0
        if peak == 0.0:
            raise InvalidPlanError("cannot infer amplitude from an all-zero plan")
        amplitude_fraction = peak / rated_voltage
    return TrainingPlan(
        deviations=deviations,
        amplitude_fraction=amplitude_fraction,
        rated_voltage=rated_voltage,
        slot_duration=slot_duration,
        settle_time=settle_time,
    )
