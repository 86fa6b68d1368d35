"""Fisher information and Cramér–Rao bounds for the slot regression.

The measured voltage of slot n depends on the parameters through the
power-balance root v[n; theta]. Differentiating the balance implicitly
gives per-slot sensitivities

    dv[n]/dtheta_i = -q_i[n] / lambda[n]

where lambda[n] is the balance's voltage derivative and q[n] its
parameter gradient. For Gaussian measurement noise of variance sigma^2
the Fisher information is (1/sigma^2) * sum_n q q^T / lambda^2, so

    CRB = sigma^2 * (sum_n q[n] q[n]^T / lambda[n]^2)^(-1)

Bounds for the transformed load parameterization follow from the exact
Jacobian of the reparameterization, including the chain-rule terms
through the nominal voltage (it moves when capacities or loads move).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _design, estimator, grid, training
from .exceptions import SingularInformationError, SingularSensitivityError

_LAMBDA_RTOL = 1e-12


@dataclass(frozen=True)
class SensitivityRecord:
    """Implicit-function sensitivities of one controller's measurements.

    Attributes
    ----------
    controller : int
        1-based estimating unit.
    lam : ndarray, shape (N,)
        Power-balance voltage derivative at each training slot.
    q : ndarray, shape (N, U + 2)
        Power-balance parameter gradient at each slot (full-variant
        parameter order); dv/dtheta = -q/lam per slot.
    nominal_voltage, nominal_lam : float
        The no-training operating point and its voltage derivative.
    nominal_gradient : ndarray, shape (U + 2,)
        q at the nominal point; dnominal/dtheta = -nominal_gradient/nominal_lam.
    jacobian : ndarray, shape (U + 2, U + 2)
        Derivative of the transformed parameters with respect to the
        full ones (identity on the generation block).
    constant_nominal : bool
        Whether the Jacobian treats the nominal voltage as fixed
        (chain-rule terms dropped).
    names_full, names_transformed : tuple of str
    """

    controller: int
    lam: np.ndarray
    q: np.ndarray
    nominal_voltage: float
    nominal_lam: float
    nominal_gradient: np.ndarray
    jacobian: np.ndarray
    constant_nominal: bool
    names_full: tuple
    names_transformed: tuple

    def voltage_gradients(self) -> np.ndarray:
        """dv[n]/dtheta for every slot, shape (N, U + 2)."""
        return -self.q / self.lam[:, None]

    def nominal_voltage_gradient(self) -> np.ndarray:
        """dnominal/dtheta, shape (U + 2,)."""
        return -self.nominal_gradient / self.nominal_lam


def _balance_derivatives(config, ref_voltages, voltages, alphas, controller_idx):
    """lambda and q rows of the power balance at given operating points.

    ref_voltages (M, U), voltages (M,), alphas (M, U); returns
    lam (M,) and q (M, U + 2) in full-variant parameter order.
    """
    x = config.rated_voltage
    w = config.capacity_array()
    load = config.load
    v = voltages
    lam = (
        ((2.0 * v[:, None] - ref_voltages) * alphas * w).sum(axis=1)
        + 2.0 * v * load.p_cr / x**2
        + load.p_cc / x
    )
    scale = (
        (np.abs(2.0 * v[:, None] - ref_voltages) * alphas * w).sum(axis=1)
        + 2.0 * v * load.p_cr / x**2
        + load.p_cc / x
    )
    if np.any(np.abs(lam) <= _LAMBDA_RTOL * scale):
        worst = int(np.argmin(np.abs(lam)))
        raise SingularSensitivityError(
            f"power-balance voltage derivative vanished at slot {worst + 1}; "
            "sensitivities are undefined there"
        )
    cols = [
        alphas[:, u] * v * (v - ref_voltages[:, u])
        for u in range(config.unit_count)
        if u != controller_idx
    ]
    cols += [v * v / x**2, v / x, np.ones_like(v)]
    return lam, np.column_stack(cols)


def sensitivities(
    config: grid.MicrogridConfig,
    plan: training.TrainingPlan,
    controller: int,
    constant_nominal: bool = False,
) -> SensitivityRecord:
    """Per-slot sensitivities and the reparameterization Jacobian.

    Parameters
    ----------
    constant_nominal : bool
        Drop the chain-rule terms through the nominal voltage from the
        Jacobian, treating it as a fixed constant. Default False: the
        nominal voltage is itself a function of the parameters, and the
        full chain rule is what matches finite differences.

    Raises
    ------
    SingularSensitivityError
        If the balance's voltage derivative vanishes at any slot.
    """
    training.check_plan_against_config(config, plan)
    if not 1 <= controller <= config.unit_count:
        raise ValueError(f"controller index {controller} out of range")
    k0 = controller - 1
    x = config.rated_voltage

    refs = plan.ref_voltages()
    voltages = np.asarray(grid.bus_voltage(config, refs), dtype=float)
    alphas = _design.slot_alphas(plan.deviations, x, config.min_voltage)
    lam, q = _balance_derivatives(config, refs, voltages, alphas, k0)

    nominal_refs = np.full((1, config.unit_count), x)
    nominal_v = np.array([grid.nominal_voltage(config)])
    nominal_alphas = _design.slot_alphas(
        np.zeros((1, config.unit_count)), x, config.min_voltage
    )
    nominal_lam, nominal_q = _balance_derivatives(
        config, nominal_refs, nominal_v, nominal_alphas, k0
    )
    vbar = float(nominal_v[0])

    params = config.unit_count + 2
    jac = np.eye(params)
    _, chi, zeta = estimator.transform_load(
        config.load.p_cr, config.load.p_cc, config.load.p_cp, vbar, x
    )
    dvbar = (
        np.zeros(params)
        if constant_nominal
        else -nominal_q[0] / float(nominal_lam[0])
    )
    omega_row = np.zeros(params)
    omega_row[-3:] = [vbar * vbar / x**2, vbar / x, 1.0]
    chi_row = np.zeros(params)
    chi_row[-3:] = [2.0 * vbar / x**2, 1.0 / x, 0.0]
    zeta_row = np.zeros(params)
    zeta_row[-3] = 1.0 / x**2
    jac[-3] = omega_row + chi * dvbar
    jac[-2] = chi_row + 2.0 * zeta * dvbar
    jac[-1] = zeta_row

    return SensitivityRecord(
        controller=controller,
        lam=lam,
        q=q,
        nominal_voltage=vbar,
        nominal_lam=float(nominal_lam[0]),
        nominal_gradient=nominal_q[0],
        jacobian=jac,
        constant_nominal=constant_nominal,
        names_full=estimator.parameter_names(
            config.unit_count, controller, estimator.FULL
        ),
        names_transformed=estimator.parameter_names(
            config.unit_count, controller, estimator.TRANSFORMED
        ),
    )


def _inverse_from_half_factor(g: np.ndarray, context: str) -> np.ndarray:
    """(g^T g)^(-1) from the SVD of g itself, shape (N, P).

    Never squares the half factor: the information matrix's condition
    number is the square of g's, so at small training amplitudes the
    product g^T g is numerically singular while g itself still carries
    the full spectrum. Singularity is judged on g's singular values
    (cutoff max(N, P) * eps * s_max), the same test an estimator's rank
    decision uses.
    """
    u_mat, singulars, vt = np.linalg.svd(g, full_matrices=False)
    cutoff = max(g.shape) * np.finfo(float).eps * singulars[0]
    if singulars[-1] <= cutoff:
        raise SingularInformationError(
            f"{context}: Fisher information is singular; no finite error "
            "bound exists along the reported direction",
            null_direction=vt[-1],
        )
    inverse = (vt.T / (singulars * singulars)) @ vt
    return 0.5 * (inverse + inverse.T)


def crb_full(record: SensitivityRecord, variance: float) -> np.ndarray:
    """Error-covariance lower bound for the full parameter vector.

    Returns sigma^2 * (sum_n q q^T / lambda^2)^(-1); grows linearly in
    the noise variance.

    Raises
    ------
    SingularInformationError
        If the information matrix is singular (insufficient excitation);
        the null direction is attached to the error.
    """
    if variance < 0.0:
        raise ValueError("variance must be non-negative")
    g = record.q / record.lam[:, None]
    inverse = _inverse_from_half_factor(g, "full variant")
    return variance * inverse


def crb_transformed(
    record: SensitivityRecord, variance: float, method: str = "jacobian"
) -> np.ndarray:
    """Error-covariance lower bound for the transformed parameters.

    method="jacobian" reparameterizes the full bound as J C J^T;
    method="information" accumulates the information sum directly in
    transformed coordinates (q^T J^{-1} per slot) and inverts. The two
    agree to rounding; both are kept as a cross-check.
    """
    if method == "jacobian":
        full = crb_full(record, variance)
        mapped = record.jacobian @ full @ record.jacobian.T
        return 0.5 * (mapped + mapped.T)
    if method == "information":
        if variance < 0.0:
            raise ValueError("variance must be non-negative")
        jac_inv = np.linalg.inv(record.jacobian)
        g = (record.q @ jac_inv) / record.lam[:, None]
        inverse = _inverse_from_half_factor(g, "transformed variant")
        return variance * inverse
    raise ValueError(f"unknown method {method!r}")


def predicted_rrmse(crb_matrix: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Per-parameter relative RMSE floor sqrt(CRB_ii) / |truth_i|."""
    truth = np.asarray(truth, dtype=float)
    return np.sqrt(np.diag(crb_matrix)) / np.abs(truth)
