"""Sensitivities, information matrices, and Cramér–Rao bounds."""

import numpy as np
import pytest

from droopmle import crb, estimator, grid, training
from droopmle.exceptions import SingularInformationError

from conftest import random_scenario

LAMBDA_NOMINAL = 2235.109096579206
SIGMA2 = 2e-7

# frozen bound-implied RRMSE at 0.5% amplitude, controller 5
CRB_RRMSE_05 = {
    "W1": 7.675404e-02,
    "W2": 5.613911e-03,
    "W3": 2.439025e-03,
    "W4": 1.346880e-03,
    "load_at_nominal": 5.923480e-04,
}


def _solve_longdouble(rated, vmin, caps, p_cr, p_cc, p_cp, refs):
    """Extended-precision forward solve used as the derivative oracle."""
    x = np.longdouble(rated)
    vm = np.longdouble(vmin)
    caps = np.asarray(caps, dtype=np.longdouble)
    refs = np.asarray(refs, dtype=np.longdouble)
    s = caps / (vm * (refs - vm))
    a_coef = s.sum() + p_cr / (x * x)
    b_coef = (refs * s).sum() - p_cc / x
    disc = b_coef * b_coef - 4.0 * a_coef * p_cp
    return (b_coef + np.sqrt(disc)) / (2.0 * a_coef)


def _fd_gradients(config, plan, controller):
    """Central-difference slot-voltage gradients, shape (N, U + 2).

    Runs in extended precision: in float64 the forward solve's own
    rounding noise is of the same order as the differenced signal at
    usable step sizes.
    """
    x = config.rated_voltage
    vmin = config.min_voltage
    caps = np.array(config.capacities, dtype=np.longdouble)
    k0 = controller - 1
    remote = [u for u in range(config.unit_count) if u != k0]
    load = config.load
    theta = np.array(
        [caps[u] for u in remote] + [load.p_cr, load.p_cc, load.p_cp],
        dtype=np.longdouble,
    )
    refs = config.rated_voltage + plan.deviations

    def voltages(vec):
        c = caps.copy()
        for j, u in enumerate(remote):
            c[u] = vec[j]
        return np.array(
            [
                _solve_longdouble(x, vmin, c, vec[-3], vec[-2], vec[-1], row)
                for row in refs
            ],
            dtype=np.longdouble,
        )

    grads = np.empty((plan.slots, theta.size))
    for i in range(theta.size):
        step = np.longdouble(1e-5) * max(abs(theta[i]), np.longdouble(1.0))
        hi = theta.copy()
        lo = theta.copy()
        hi[i] += step
        lo[i] -= step
        grads[:, i] = ((voltages(hi) - voltages(lo)) / (2.0 * step)).astype(float)
    return grads


def test_nominal_balance_slope_identity(ref_config, ref_plan):
    record = crb.sensitivities(ref_config, ref_plan, 5)
    assert record.nominal_lam == pytest.approx(LAMBDA_NOMINAL, rel=1e-12)
    # the slope equals the square root of the balance discriminant
    refs = np.full(5, 400.0)
    from droopmle.grid import _balance_coefficients

    a_coef, b_coef, _ = _balance_coefficients(ref_config, refs)
    disc = b_coef * b_coef - 4.0 * a_coef * ref_config.load.p_cp
    assert record.nominal_lam == pytest.approx(np.sqrt(disc), rel=1e-12)
    vbar = record.nominal_voltage
    assert record.nominal_lam == pytest.approx(2 * vbar * a_coef - b_coef, rel=1e-12)


def test_gradients_match_finite_differences(ref_config, ref_plan):
    record = crb.sensitivities(ref_config, ref_plan, 5)
    analytic = record.voltage_gradients()
    fd = _fd_gradients(ref_config, ref_plan, 5)
    assert np.max(np.abs(analytic - fd)) < 1e-6


def test_gradients_match_on_random_scenarios():
    rng = np.random.default_rng(2718)
    worst = 0.0
    for _ in range(10):
        config, plan, controller = random_scenario(rng)
        record = crb.sensitivities(config, plan, controller)
        fd = _fd_gradients(config, plan, controller)
        worst = max(worst, float(np.max(np.abs(record.voltage_gradients() - fd))))
    assert worst < 1e-6


def test_reference_bound_oracles(ref_config, ref_plan):
    record = crb.sensitivities(ref_config, ref_plan, 5)
    full = crb.crb_full(record, SIGMA2)
    star = crb.crb_transformed(record, SIGMA2)
    truth = estimator.true_parameters(ref_config, 5)
    truth_star = estimator.true_parameters(
        ref_config, 5, estimator.TRANSFORMED, record.nominal_voltage
    )
    pred = dict(zip(truth.names, crb.predicted_rrmse(full, truth.values)))
    pred.update(
        zip(truth_star.names[-3:], crb.predicted_rrmse(star, truth_star.values)[-3:])
    )
    for name, expected in CRB_RRMSE_05.items():
        assert pred[name] == pytest.approx(expected, rel=1e-4)


def test_bound_scales_linearly_with_variance(ref_config, ref_plan):
    record = crb.sensitivities(ref_config, ref_plan, 5)
    one = crb.crb_full(record, SIGMA2)
    two = crb.crb_full(record, 2 * SIGMA2)
    assert np.allclose(two, 2 * one, rtol=1e-12)
    assert np.allclose(crb.crb_full(record, 0.0), 0.0)


def test_transformed_methods_agree(ref_config, ref_plan):
    record = crb.sensitivities(ref_config, ref_plan, 5)
    via_jac = crb.crb_transformed(record, SIGMA2, method="jacobian")
    via_info = crb.crb_transformed(record, SIGMA2, method="information")
    rel = np.linalg.norm(via_jac - via_info) / np.linalg.norm(via_jac)
    assert rel < 1e-5
    with pytest.raises(ValueError):
        crb.crb_transformed(record, SIGMA2, method="bogus")


def test_bounds_are_symmetric_positive_definite(ref_config, ref_plan):
    record = crb.sensitivities(ref_config, ref_plan, 5)
    for matrix in (crb.crb_full(record, SIGMA2), crb.crb_transformed(record, SIGMA2)):
        assert np.allclose(matrix, matrix.T, rtol=1e-9)
        eigenvalues = np.linalg.eigvalsh(matrix)
        assert np.all(eigenvalues > 0.0)


def test_unexcited_plan_has_singular_information(ref_config, ref_plan):
    plan = training.TrainingPlan(
        deviations=np.zeros_like(ref_plan.deviations),
        amplitude_fraction=0.005,
        rated_voltage=400.0,
    )
    record = crb.sensitivities(ref_config, plan, 5)
    with pytest.raises(SingularInformationError) as info:
        crb.crb_full(record, SIGMA2)
    assert info.value.null_direction is not None


def test_constant_nominal_flag_changes_transformed_bound(ref_config, ref_plan):
    tracking = crb.sensitivities(ref_config, ref_plan, 5, constant_nominal=False)
    frozen = crb.sensitivities(ref_config, ref_plan, 5, constant_nominal=True)
    assert not np.allclose(tracking.jacobian, frozen.jacobian)
    a = crb.crb_transformed(tracking, SIGMA2)
    b = crb.crb_transformed(frozen, SIGMA2)
    assert not np.allclose(a, b)
    # the full-parameter bound does not involve the chain-rule terms
    assert np.allclose(
        crb.crb_full(tracking, SIGMA2), crb.crb_full(frozen, SIGMA2)
    )


def test_aggregate_load_far_better_identified_than_components(
    ref_config, ref_plan
):
    record = crb.sensitivities(ref_config, ref_plan, 5)
    truth = estimator.true_parameters(ref_config, 5)
    truth_star = estimator.true_parameters(
        ref_config, 5, estimator.TRANSFORMED, record.nominal_voltage
    )
    full = crb.predicted_rrmse(crb.crb_full(record, SIGMA2), truth.values)
    star = crb.predicted_rrmse(
        crb.crb_transformed(record, SIGMA2), truth_star.values
    )
    # omega is identified thousands of times more tightly than p_cr
    assert star[-3] < full[-3] / 1000.0


def test_bound_slope_near_inverse_amplitude(ref_config):
    # in the small-amplitude limit the capacity-1 and aggregate-load
    # bounds fall as 1/delta, while the load components, identified only
    # through the trajectory's curvature, fall as 1/delta^2
    deltas = np.geomspace(1e-4, 1e-3, 7)
    w1 = []
    omega = []
    p_cr = []
    for d in deltas:
        plan = training.hadamard_plan(5, 7, d, 400.0)
        record = crb.sensitivities(ref_config, plan, 5)
        truth = estimator.true_parameters(ref_config, 5)
        truth_star = estimator.true_parameters(
            ref_config, 5, estimator.TRANSFORMED, record.nominal_voltage
        )
        pred = crb.predicted_rrmse(crb.crb_full(record, SIGMA2), truth.values)
        w1.append(pred[0])
        p_cr.append(pred[-3])
        omega.append(
            crb.predicted_rrmse(
                crb.crb_transformed(record, SIGMA2), truth_star.values
            )[-3]
        )
    log_d = np.log(deltas)
    assert np.polyfit(log_d, np.log(w1), 1)[0] == pytest.approx(-1.0, abs=0.05)
    assert np.polyfit(log_d, np.log(omega), 1)[0] == pytest.approx(-1.0, abs=0.05)
    assert np.polyfit(log_d, np.log(p_cr), 1)[0] == pytest.approx(-2.0, abs=0.05)
