"""Regression assembly, the maximum likelihood solve, parameter maps."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from droopmle import estimator, grid, measurement, training
from droopmle.exceptions import InsufficientExcitationError

from conftest import REF_NOMINAL, random_scenario

OMEGA = 10885.060759779979
CHI = 23.53731752942013
ZETA = 0.021875


def noiseless(config, plan, controller, exact_nominal=True):
    trace = measurement.simulate_training(config, plan)
    return measurement.observe(
        trace, controller, 0.0, seed=0, exact_nominal=exact_nominal
    )


def test_truth_satisfies_full_system(ref_config, ref_plan):
    mset = noiseless(ref_config, ref_plan, 5)
    system = estimator.assemble_full(mset, ref_plan, 5, 15000.0, 400.0, 390.0)
    truth = estimator.true_parameters(ref_config, 5)
    defect = system.design @ truth.values - system.response * 15000.0
    scale = np.linalg.norm(system.response * 15000.0)
    assert np.linalg.norm(defect) / scale < 1e-10


def test_exact_recovery_both_variants(ref_config):
    # 1.5% amplitude sits in the conditioning sweet spot
    plan = training.hadamard_plan(5, 7, 0.015, 400.0)
    for controller in (1, 3, 5):
        own = ref_config.capacities[controller - 1]
        mset = noiseless(ref_config, plan, controller)
        theta = estimator.solve_mle(
            estimator.assemble_full(mset, plan, controller, own, 400.0, 390.0)
        )
        truth = estimator.true_parameters(ref_config, controller)
        rel = np.abs(theta.values - truth.values) / np.abs(truth.values)
        assert rel.max() < 1e-8
        star = estimator.solve_mle(
            estimator.assemble_transformed(mset, plan, controller, own, 400.0, 390.0)
        )
        truth_star = estimator.true_parameters(
            ref_config, controller, estimator.TRANSFORMED, mset.nominal_value
        )
        rel = np.abs(star.values - truth_star.values) / np.abs(truth_star.values)
        assert rel.max() < 1e-8


def test_transformed_truth_oracles(ref_config):
    truth = estimator.true_parameters(ref_config, 5, estimator.TRANSFORMED)
    assert truth.values[-3] == pytest.approx(OMEGA, rel=1e-12)
    assert truth.values[-2] == pytest.approx(CHI, rel=1e-12)
    assert truth.values[-1] == pytest.approx(ZETA, rel=1e-12)
    assert truth.names[-3:] == ("load_at_nominal", "load_slope", "load_curvature")


def test_total_load_reads_aggregate_demand(ref_config):
    truth = estimator.true_parameters(ref_config, 5, estimator.TRANSFORMED)
    assert estimator.total_load(truth) == pytest.approx(OMEGA)
    # the rated-voltage total differs from demand at the sagged nominal
    bias = abs(OMEGA - ref_config.load.total) / ref_config.load.total
    assert bias == pytest.approx(0.010449, rel=1e-3)
    with pytest.raises(ValueError):
        estimator.total_load(estimator.true_parameters(ref_config, 5))


def test_parameter_names_skip_own_unit():
    names = estimator.parameter_names(5, 3, estimator.FULL)
    assert names == ("W1", "W2", "W4", "W5", "p_cr", "p_cc", "p_cp")


@settings(max_examples=100, deadline=None)
@given(
    p_cr=st.floats(0.0, 1e5),
    p_cc=st.floats(0.0, 1e5),
    p_cp=st.floats(0.0, 1e5),
    vbar=st.floats(150.0, 1500.0),
    x=st.floats(200.0, 1600.0),
)
def test_load_map_round_trip(p_cr, p_cc, p_cp, vbar, x):
    omega, chi, zeta = estimator.transform_load(p_cr, p_cc, p_cp, vbar, x)
    back = estimator.untransform_load(omega, chi, zeta, vbar, x)
    scale = max(p_cr, p_cc, p_cp, 1.0)
    assert np.allclose(back, (p_cr, p_cc, p_cp), rtol=1e-9, atol=1e-9 * scale)


def test_map_theta_to_star_round_trip(ref_config):
    theta = estimator.true_parameters(ref_config, 5)
    star = estimator.map_theta_to_star(theta, REF_NOMINAL, 400.0)
    assert star.values[-3] == pytest.approx(OMEGA, rel=1e-12)
    back = estimator.map_star_to_theta(star, REF_NOMINAL, 400.0)
    assert np.allclose(back.values, theta.values, rtol=1e-10)
    assert back.names == theta.names


def test_rcond_gate_rejects_unexcited_system(ref_config, ref_plan):
    plan = training.TrainingPlan(
        deviations=np.zeros_like(ref_plan.deviations),
        amplitude_fraction=0.005,
        rated_voltage=400.0,
    )
    trace = measurement.simulate_training(ref_config, plan)
    mset = measurement.observe(trace, 5, 0.01, seed=12)
    system = estimator.assemble_full(mset, plan, 5, 15000.0, 400.0, 390.0)
    with pytest.raises(InsufficientExcitationError) as info:
        estimator.solve_mle(system)
    assert info.value.rank < info.value.required


def test_estimates_agree_across_controllers_noise_free(ref_config):
    plan = training.hadamard_plan(5, 7, 0.015, 400.0)
    per_controller = []
    for controller in range(1, 6):
        own = ref_config.capacities[controller - 1]
        mset = noiseless(ref_config, plan, controller)
        theta = estimator.solve_mle(
            estimator.assemble_full(mset, plan, controller, own, 400.0, 390.0)
        )
        per_controller.append(theta.as_dict())
    # every controller reconstructs the same grid: shared keys agree
    for name in ("p_cr", "p_cc", "p_cp", "W3"):
        values = [d[name] for d in per_controller if name in d]
        assert np.allclose(values, values[0], rtol=1e-7)


def test_capacity_permutation_equivariance():
    rng = np.random.default_rng(31)
    config, plan, controller = random_scenario(rng)
    while controller != 1:
        config, plan, controller = random_scenario(rng)
    mset = noiseless(config, plan, 1)
    own = config.capacities[0]
    theta = estimator.solve_mle(
        estimator.assemble_full(
            mset, plan, 1, own, config.rated_voltage, config.min_voltage
        )
    )
    # swapping two remote units (their capacities and their sequences)
    # swaps the corresponding estimates and changes nothing else
    if config.unit_count < 3:
        return
    perm = list(range(config.unit_count))
    perm[1], perm[2] = perm[2], perm[1]
    swapped_config = grid.MicrogridConfig(
        rated_voltage=config.rated_voltage,
        min_voltage=config.min_voltage,
        capacities=tuple(config.capacities[i] for i in perm),
        load=config.load,
    )
    swapped_plan = training.TrainingPlan(
        deviations=plan.deviations[:, perm],
        amplitude_fraction=plan.amplitude_fraction,
        rated_voltage=plan.rated_voltage,
    )
    mset2 = noiseless(swapped_config, swapped_plan, 1)
    theta2 = estimator.solve_mle(
        estimator.assemble_full(
            mset2, swapped_plan, 1, own, config.rated_voltage, config.min_voltage
        )
    )
    assert theta2.generation[2] == pytest.approx(theta.generation[3], rel=1e-9)
    assert theta2.generation[3] == pytest.approx(theta.generation[2], rel=1e-9)
    assert theta2.load == pytest.approx(theta.load, rel=1e-7)


def test_residual_norm_reported(ref_config, ref_plan):
    trace = measurement.simulate_training(ref_config, ref_plan)
    mset = measurement.observe(trace, 5, 0.01, seed=9)
    theta = estimator.solve_mle(
        estimator.assemble_full(mset, ref_plan, 5, 15000.0, 400.0, 390.0)
    )
    assert theta.residual_norm is not None
    assert theta.residual_norm >= 0.0


def test_assembly_rejects_mismatched_sizes(ref_config, ref_plan):
    mset = noiseless(ref_config, ref_plan, 5)
    short = training.hadamard_plan(5, 8, 0.005, 400.0)
    with pytest.raises(ValueError):
        estimator.assemble_full(mset, short, 5, 15000.0, 400.0, 390.0)
    with pytest.raises(ValueError):
        estimator.assemble_full(mset, ref_plan, 0, 15000.0, 400.0, 390.0)
