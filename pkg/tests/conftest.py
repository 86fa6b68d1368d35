"""Shared fixtures: the reference scenario and random-case generators."""

import numpy as np
import pytest

from droopmle import grid, training

REF_CAPACITIES = (100.0, 1000.0, 2000.0, 4000.0, 15000.0)
REF_RATED = 400.0
REF_MIN = 390.0
REF_LOAD = (3500.0, 2500.0, 5000.0)
REF_NOMINAL = 395.1386863867458
REF_SLOTS = 7


@pytest.fixture
def ref_config() -> grid.MicrogridConfig:
    """Five-unit 400 V reference scenario used across the suite."""
    return grid.MicrogridConfig(
        rated_voltage=REF_RATED,
        min_voltage=REF_MIN,
        capacities=REF_CAPACITIES,
        load=grid.LoadModel(*REF_LOAD),
    )


@pytest.fixture
def ref_plan() -> training.TrainingPlan:
    """Seven-slot binary plan at 0.5% amplitude for the reference grid."""
    return training.hadamard_plan(5, REF_SLOTS, 0.005, REF_RATED)


def random_config(rng: np.random.Generator) -> grid.MicrogridConfig:
    """Feasible random grid for forward-model checks.

    Load fractions are capped so that total demand stays below the
    aggregate rating at every admissible voltage, which guarantees a
    balance root above min_voltage.
    """
    unit_count = int(rng.integers(1, 9))
    rated = float(rng.uniform(200.0, 1500.0))
    ratio = float(rng.uniform(0.85, 0.99))
    capacities = np.exp(rng.uniform(np.log(100.0), np.log(1e5), unit_count))
    fractions = rng.uniform(0.0, 0.25, 3)
    total = float(capacities.sum())
    return grid.MicrogridConfig(
        rated_voltage=rated,
        min_voltage=ratio * rated,
        capacities=tuple(float(w) for w in capacities),
        load=grid.LoadModel(*(float(f) * total for f in fractions)),
    )


def random_refs(rng: np.random.Generator, config: grid.MicrogridConfig, slots: int):
    """Random admissible per-slot reference voltages, shape (slots, U)."""
    span = config.rated_voltage - config.min_voltage
    dev = rng.uniform(-0.8, 0.8, (slots, config.unit_count)) * span
    return config.rated_voltage + dev


def random_scenario(rng: np.random.Generator):
    """Random (config, plan, controller) with well-conditioned estimation.

    The envelope is deliberately restricted to keep the noiseless
    regression's double-precision error comfortably below 1e-8:

    * unit counts 2, 4, 5, 6: the binary plan construction assigns unit
      u the Hadamard row with bit mask u, and for U = 2**m - 1 those
      masks probe too few slot-index bits to ever reach rank U + 2, so
      1, 3, and 7 are excluded;
    * amplitudes at 45-70% of the admissible bound: small amplitudes
      lose the load curvature in rounding error, while amplitudes near
      the bound blow up the virtual admittances of the down-shifted
      slots;
    * droop windows of 5-10% of rated voltage and load fractions of
      6-22% of the aggregate rating per component keep the operating
      point well inside the feasible region.
    """
    unit_count = int(rng.choice((2, 4, 5, 6)))
    rated = float(rng.uniform(350.0, 450.0))
    ratio = float(rng.uniform(0.90, 0.95))
    capacities = np.exp(rng.uniform(np.log(1e3), np.log(2e4), unit_count))
    fractions = rng.uniform(0.06, 0.22, 3)
    total = float(capacities.sum())
    config = grid.MicrogridConfig(
        rated_voltage=rated,
        min_voltage=ratio * rated,
        capacities=tuple(float(w) for w in capacities),
        load=grid.LoadModel(*(float(f) * total for f in fractions)),
    )
    delta = float(rng.uniform(0.45, 0.70)) * (1.0 - ratio)
    slots = unit_count + 2 + int(rng.integers(0, 3))
    controller = int(rng.integers(0, unit_count)) + 1
    plan = training.hadamard_plan(unit_count, slots, delta, rated)
    return config, plan, controller
