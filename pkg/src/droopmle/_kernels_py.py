"""Vectorized numpy implementation of the Monte Carlo trial kernel.

This is the fallback for droopmle._kernels (the compiled extension);
both expose the same estimate_batch signature and are selected by
droopmle._backend. The whole trial batch is assembled as one
(T, N, P) tensor and solved with batched QR.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def estimate_batch(
    voltages: np.ndarray,
    nominal_voltage: float,
    noise: np.ndarray,
    deviations: np.ndarray,
    alphas: np.ndarray,
    controller_idx: int,
    own_capacity: float,
    rated_voltage: float,
    exact_nominal: bool,
):
    """Run T independent estimation trials on pre-drawn noise.

    Parameters
    ----------
    voltages : ndarray, shape (N,)
        True per-slot bus voltages.
    nominal_voltage : float
        True nominal bus voltage.
    noise : ndarray, shape (T, N + 1)
        Measurement noise; column 0 perturbs the nominal measurement,
        columns 1..N the slot measurements.
    deviations : ndarray, shape (N, U)
        Training plan deviations in volts.
    alphas : ndarray, shape (N, U)
        Per-slot admittance factors.
    controller_idx : int
        0-based index of the estimating unit.
    own_capacity : float
        The controller's own rating W_k in watts.
    rated_voltage : float
        System voltage x.
    exact_nominal : bool
        Use the exact nominal voltage instead of its noisy measurement
        for the transformed variant's centering.

    Returns
    -------
    (theta_full, theta_star) : ndarray pairs, each shape (T, U + 2)
        Full-variant estimates (load as p_cr, p_cc, p_cp) and
        transformed-variant estimates (load about the nominal voltage).
    """
    voltages = np.asarray(voltages, dtype=float)
    noise = np.asarray(noise, dtype=float)
    n_slots, n_units = deviations.shape
    trials = noise.shape[0]
    x = rated_voltage

    vm = voltages[None, :] + noise[:, 1:]
    vbar = (
        np.full(trials, nominal_voltage)
        if exact_nominal
        else nominal_voltage + noise[:, 0]
    )

    gen_cols = [
        vm * alphas[None, :, u] * (vm - x - deviations[None, :, u])
        for u in range(n_units)
        if u != controller_idx
    ]
    gen = (
        np.stack(gen_cols, axis=2)
        if gen_cols
        else np.empty((trials, n_slots, 0))
    )
    rhs = (
        -vm
        * alphas[None, :, controller_idx]
        * (vm - x - deviations[None, :, controller_idx])
        * own_capacity
    )
    ones = np.ones((trials, n_slots, 1))

    # Full variant, solved about the per-trial mean voltage for
    # numerical stability, then re-based to rated load components.
    center = vm.mean(axis=1)
    dc = vm - center[:, None]
    design = np.concatenate([gen, ones, dc[:, :, None], (dc * dc)[:, :, None]], axis=2)
    theta_full = _batched_lstsq(design, rhs)
    a0 = theta_full[:, -3].copy()
    a1 = theta_full[:, -2].copy()
    a2 = theta_full[:, -1].copy()
    theta_full[:, -3] = a2 * x * x
    theta_full[:, -2] = (a1 - 2.0 * center * a2) * x
    theta_full[:, -1] = a0 - center * a1 + center * center * a2

    dv = vm - vbar[:, None]
    design = np.concatenate([gen, ones, dv[:, :, None], (dv * dv)[:, :, None]], axis=2)
    theta_star = _batched_lstsq(design, rhs)
    return theta_full, theta_star


def _batched_lstsq(design: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Least squares for a stack of overdetermined systems via QR."""
    q, r = np.linalg.qr(design)
    projected = np.einsum("tnp,tn->tp", q, rhs)
    return np.linalg.solve(r, projected[..., None])[..., 0]
