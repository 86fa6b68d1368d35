"""Regression-matrix assembly shared by the estimator and plan validation.

Controller k observes bus voltages v[n] over N slots and knows every
unit's deviation sequence. Rearranging the per-slot power balance makes
the unknown parameters linear in observable quantities:

    column u (u != k):   v[n] * alpha_u[n] * (v[n] - x - dx_u[n])
    load block (full):   [v^2/x^2, v/x, 1]
    load block (about c):[1, v - c, (v - c)^2]
    response:           -v[n] * alpha_k[n] * (v[n] - x - dx_k[n])

with alpha_u[n] = 1 / (v_min * (x + dx_u[n] - v_min)). The response
times the controller's own capacity W_k balances the design matrix
times the parameter vector.
"""

from __future__ import annotations

import numpy as np


def slot_alphas(deviations: np.ndarray, rated_voltage: float, min_voltage: float):
    """Per-slot, per-unit admittance factors alpha_u[n], shape (N, U)."""
    gap = rated_voltage + deviations - min_voltage
    if np.any(gap <= 0.0):
        raise ValueError("a deviation drives a reference voltage below min_voltage")
    return 1.0 / (min_voltage * gap)


def generation_columns(values, deviations, alphas, controller_idx, rated_voltage):
    """Columns for the remote capacities, shape (N, U-1), and the response.

    Returns (columns, response) where response already carries the
    leading minus sign; response * W_k is the regression right-hand side.
    """
    v = np.asarray(values, dtype=float)
    u_count = deviations.shape[1]
    cols = [
        v * alphas[:, u] * (v - rated_voltage - deviations[:, u])
        for u in range(u_count)
        if u != controller_idx
    ]
    response = -v * alphas[:, controller_idx] * (
        v - rated_voltage - deviations[:, controller_idx]
    )
    if cols:
        return np.column_stack(cols), response
    return np.empty((v.shape[0], 0)), response


def full_design(values, deviations, alphas, controller_idx, rated_voltage):
    """Design matrix with the rated-voltage load basis [v^2/x^2, v/x, 1]."""
    v = np.asarray(values, dtype=float)
    gen, response = generation_columns(
        values, deviations, alphas, controller_idx, rated_voltage
    )
    x = rated_voltage
    load = np.column_stack([v * v / x**2, v / x, np.ones_like(v)])
    return np.hstack([gen, load]), response


def centered_design(values, deviations, alphas, controller_idx, rated_voltage, center):
    """Design matrix with the load basis re-based about a voltage center.

    With center = the nominal bus voltage this is the aggregate-load
    parameterization [1, dv, dv^2]; any center gives an equivalent
    (exactly invertible) basis for the same quadratic load column space.
    """
    v = np.asarray(values, dtype=float)
    gen, response = generation_columns(
        values, deviations, alphas, controller_idx, rated_voltage
    )
    dv = v - center
    load = np.column_stack([np.ones_like(v), dv, dv * dv])
    return np.hstack([gen, load]), response


def equilibrated_rank(design):
    """Numerical rank of a design after unit-norm column scaling.

    Column scaling is an exact reparameterization of the least-squares
    problem; without it the capacity columns (of order 1e-5 at typical
    operating points) and the load columns (of order 1) differ by five
    orders of magnitude and the singular value spectrum reflects scale,
    not identifiability. Returns (rank, singular values of the scaled
    matrix); the rank counts singular values above
    max(N, P) * eps * s_max.
    """
    norms = np.linalg.norm(design, axis=0)
    scale = np.where(norms > 0.0, norms, 1.0)
    singulars = np.linalg.svd(design / scale, compute_uv=False)
    cutoff = max(design.shape) * np.finfo(float).eps * singulars[0]
    rank = int(np.count_nonzero(singulars > cutoff))
    return rank, singulars


def rebase_load_params(solution, center, rated_voltage):
    """Convert the trailing load triple from the centered basis
    [1, v-c, (v-c)^2] back to the rated basis coefficients
    (p_cr, p_cc, p_cp). Leaves the generation entries untouched."""
    out = np.array(solution, dtype=float, copy=True)
    a0, a1, a2 = out[-3], out[-2], out[-1]
    x = rated_voltage
    p_cr = a2 * x * x
    p_cc = (a1 - 2.0 * center * a2) * x
    p_cp = a0 - center * a1 + center * center * a2
    out[-3], out[-2], out[-1] = p_cr, p_cc, p_cp
    return out
