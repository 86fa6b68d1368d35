"""Noise-free training traces and noisy slot-averaged measurements.

Each controller samples the bus voltage at f_S hertz and averages the
samples of each slot after discarding the settling interval, so one
slot yields one measurement with Gaussian noise of variance

    sigma^2 = phi^2 / ((T_S - tau) * f_S)

where phi^2 is the per-sample noise variance. Noise is injected
directly at the slot-average level, which has the identical
distribution at a fraction of the cost of simulating raw samples.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import grid, training
from .exceptions import InfeasibleOperatingPoint


def noise_variance(
    phi: float,
    slot_duration: float = training.DEFAULT_SLOT_DURATION,
    settle_time: float = training.DEFAULT_SETTLE_TIME,
    sample_rate: float = 10_000.0,
) -> float:
    """Variance of one slot-averaged measurement, in volts squared.

    Raises
    ------
    ValueError
        If the averaging window (T_S - tau) * f_S holds less than one
        sample, or any argument is out of domain.
    """
    if phi < 0.0:
        raise ValueError("phi must be non-negative")
    window = (slot_duration - settle_time) * sample_rate
    if slot_duration <= settle_time or sample_rate <= 0.0 or window < 1.0:
        raise ValueError(
            "averaging window must span at least one sample; got "
            f"(T_S - tau) * f_S = {window!r}"
        )
    return phi * phi / window


@dataclass(frozen=True)
class SlotTrace:
    """Noise-free per-slot bus states for one training run.

    Attributes
    ----------
    ref_voltages : ndarray, shape (N, U)
        Reference voltages applied in each slot.
    voltages : ndarray, shape (N,)
        True settled bus voltage of each slot.
    nominal_voltage : float
        Bus voltage with all references at the rated value (no training).
    currents, powers : ndarray, shape (N, U)
        Per-slot per-unit output currents and injected powers.
    """

    ref_voltages: np.ndarray
    voltages: np.ndarray
    nominal_voltage: float
    currents: np.ndarray
    powers: np.ndarray

    def __post_init__(self):
        for name in ("ref_voltages", "voltages", "currents", "powers"):
            arr = np.array(getattr(self, name), dtype=float, copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def slots(self) -> int:
        return self.voltages.shape[0]

    @property
    def deviations(self) -> np.ndarray:
        """Per-slot voltage deviation from nominal, v[n] - nominal."""
        return self.voltages - self.nominal_voltage


def simulate_training(
    config: grid.MicrogridConfig, plan: training.TrainingPlan
) -> SlotTrace:
    """Forward-simulate the true bus state of every training slot.

    Raises
    ------
    InvalidPlanError
        If the plan does not fit the grid (unit count, rated voltage,
        amplitude bound).
    InfeasibleOperatingPoint
        If some slot's operating point cannot support the load; the
        offending slot is named.
    """
    training.check_plan_against_config(config, plan)
    refs = plan.ref_voltages()
    try:
        voltages = grid.bus_voltage(config, refs)
    except InfeasibleOperatingPoint:
        for n in range(plan.slots):
            try:
                grid.bus_voltage(config, refs[n])
            except InfeasibleOperatingPoint as err:
                raise InfeasibleOperatingPoint(
                    f"slot {n + 1} of {plan.slots}: {err}"
                ) from err
        raise
    admittances = grid.virtual_admittance(
        config.capacity_array(), refs, config.min_voltage
    )
    currents = (refs - voltages[:, None]) * admittances
    return SlotTrace(
        ref_voltages=refs,
        voltages=voltages,
        nominal_voltage=grid.nominal_voltage(config),
        currents=currents,
        powers=voltages[:, None] * currents,
    )


@dataclass(frozen=True)
class MeasurementSet:
    """One controller's noisy slot-averaged voltage measurements.

    Attributes
    ----------
    controller : int
        1-based index of the measuring unit.
    values : ndarray, shape (N,)
        Noisy measurement of each training slot.
    nominal_value : float
        Pre-training quiet-slot measurement of the nominal voltage
        (or the exact nominal voltage when exact_nominal was set).
    variance : float
        Noise variance sigma^2 of each measurement.
    exact_nominal : bool
        Whether nominal_value is exact rather than measured.
    seed_entropy : object
        Record of the seed material used, for reproducibility.
    """

    controller: int
    values: np.ndarray
    nominal_value: float
    variance: float
    exact_nominal: bool = False
    seed_entropy: object = None

    def __post_init__(self):
        arr = np.array(self.values, dtype=float, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def slots(self) -> int:
        return self.values.shape[0]


def observe(
    trace: SlotTrace,
    controller: int,
    phi: float,
    slot_duration: float = training.DEFAULT_SLOT_DURATION,
    settle_time: float = training.DEFAULT_SETTLE_TIME,
    sample_rate: float = 10_000.0,
    seed=0,
    exact_nominal: bool = False,
) -> MeasurementSet:
    """Draw one controller's noisy measurements from a true trace.

    Adds i.i.d. zero-mean Gaussian noise of variance
    phi^2 / ((T_S - tau) * f_S) to each slot voltage, plus one
    pre-training quiet-slot measurement of the nominal voltage. The
    stream is a pure function of (trace, controller, seed); distinct
    controllers or trials must use distinct seed material (the batch
    driver derives one SeedSequence per (master, grid point, trial,
    controller)). The nominal draw is consumed even when exact_nominal
    is set, so slot noise is identical across the two modes.

    Parameters
    ----------
    seed : int, SeedSequence, or Generator
        Seed material for numpy's default_rng.
    exact_nominal : bool
        Report the exact nominal voltage instead of a measured one.
    """
    if not 1 <= controller <= trace.ref_voltages.shape[1]:
        raise ValueError(f"controller index {controller} out of range")
    variance = noise_variance(phi, slot_duration, settle_time, sample_rate)
    rng = np.random.default_rng(seed)
    draws = rng.normal(0.0, np.sqrt(variance), trace.slots + 1)
    nominal = trace.nominal_voltage if exact_nominal else trace.nominal_voltage + draws[0]
    entropy = seed if isinstance(seed, (int, tuple)) else repr(seed)
    return MeasurementSet(
        controller=controller,
        values=trace.voltages + draws[1:],
        nominal_value=float(nominal),
        variance=variance,
        exact_nominal=exact_nominal,
        seed_entropy=entropy,
    )


def save_measurements_csv(measurements: MeasurementSet, path):
    """Write measurements as CSV with columns (slot, value).

    Slot 0 is the pre-training nominal measurement; slots 1..N are the
    training slots.
    """
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["slot", "value"])
        writer.writerow([0, repr(float(measurements.nominal_value))])
        for n, value in enumerate(measurements.values, start=1):
            writer.writerow([n, repr(float(value))])
