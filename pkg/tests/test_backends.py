"""Kernel backends: availability, selection, and numerical parity."""

import numpy as np
import pytest

from droopmle import _backend, _design, experiment, grid, measurement, training

from conftest import REF_CAPACITIES, REF_LOAD


COMPILED_AVAILABLE = "compiled" in _backend.available_backends()

needs_compiled = pytest.mark.skipif(
    not COMPILED_AVAILABLE, reason="compiled extension not built"
)


@pytest.fixture
def restore_backend():
    name = _backend.backend_name()
    yield
    _backend.set_backend(name)


def batch_inputs(trials=64, sigma=2e-7):
    config = grid.MicrogridConfig(
        rated_voltage=400.0,
        min_voltage=390.0,
        capacities=REF_CAPACITIES,
        load=grid.LoadModel(*REF_LOAD),
    )
    plan = training.hadamard_plan(
        unit_count=5, slots=7, amplitude_fraction=0.005, rated_voltage=400.0
    )
    trace = measurement.simulate_training(config, plan)
    alphas = _design.slot_alphas(
        plan.deviations, config.rated_voltage, config.min_voltage
    )
    noise = experiment.trial_noise(99, 0, trials, 5, np.sqrt(sigma), plan.slots)
    return dict(
        voltages=trace.voltages,
        nominal_voltage=trace.nominal_voltage,
        noise=noise,
        deviations=plan.deviations,
        alphas=alphas,
        controller_idx=4,
        own_capacity=config.capacities[4],
        rated_voltage=config.rated_voltage,
        exact_nominal=False,
    )


def test_python_backend_always_available():
    assert "python" in _backend.available_backends()


def test_set_backend_rejects_unknown(restore_backend):
    with pytest.raises(ValueError):
        _backend.set_backend("fortran")


def test_set_backend_round_trip(restore_backend):
    previous = _backend.set_backend("python")
    assert previous in _backend.available_backends()
    assert _backend.backend_name() == "python"


def test_python_backend_shapes():
    inputs = batch_inputs(trials=16)
    from droopmle import _kernels_py

    theta_full, theta_star = _kernels_py.estimate_batch(**inputs)
    assert theta_full.shape == (16, 7)
    assert theta_star.shape == (16, 7)
    assert np.all(np.isfinite(theta_full))
    assert np.all(np.isfinite(theta_star))


@needs_compiled
def test_backends_agree_on_estimates():
    inputs = batch_inputs(trials=128)
    from droopmle import _kernels, _kernels_py

    full_c, star_c = _kernels.estimate_batch(**inputs)
    full_p, star_p = _kernels_py.estimate_batch(**inputs)
    # QR (dgels) and SVD (lstsq) answers drift apart near zero crossings
    # of the noise-amplified load estimates, so allow a small margin
    scale = np.maximum(np.abs(full_p), 1.0)
    assert np.max(np.abs(full_c - full_p) / scale) < 1e-7
    scale = np.maximum(np.abs(star_p), 1.0)
    assert np.max(np.abs(star_c - star_p) / scale) < 1e-7


@needs_compiled
def test_sweep_statistics_backend_invariant(restore_backend):
    spec = experiment.ExperimentSpec(
        scenario=grid.MicrogridConfig(
            rated_voltage=400.0,
            min_voltage=390.0,
            capacities=REF_CAPACITIES,
            load=grid.LoadModel(*REF_LOAD),
        ),
        slots=7,
        deltas=(0.005,),
        trials=200,
        controllers=(5,),
        seed=4242,
    )
    _backend.set_backend("compiled")
    compiled_rows = experiment.run_sweep(spec).rows
    _backend.set_backend("python")
    python_rows = experiment.run_sweep(spec).rows
    for row_c, row_p in zip(compiled_rows, python_rows):
        assert row_c["parameter"] == row_p["parameter"]
        assert row_c["rrmse"] == pytest.approx(row_p["rrmse"], rel=1e-9)
        assert row_c["mean_estimate"] == pytest.approx(
            row_p["mean_estimate"], rel=1e-9
        )


def test_noise_free_batch_matches_direct_solve():
    # with zero noise every trial reproduces the deterministic estimate
    inputs = batch_inputs(trials=4, sigma=0.0)
    theta_full, theta_star = _backend.estimate_batch(**inputs)
    assert np.allclose(theta_full, theta_full[0])
    truth = np.array(
        [100.0, 1000.0, 2000.0, 4000.0, 3500.0, 2500.0, 5000.0]
    )
    assert np.max(np.abs(theta_full[0] - truth) / truth) < 1e-6
