# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled Monte Carlo trial kernel: per-trial regression assembly and
least-squares solves through LAPACK dgels. Mirrors the numpy fallback in
_kernels_py; droopmle._backend picks between them at import."""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt
from scipy.linalg.cython_lapack cimport dgels

cnp.import_array()

BACKEND_NAME = "compiled"


def estimate_batch(
    voltages,
    double nominal_voltage,
    noise,
    deviations,
    alphas,
    int controller_idx,
    double own_capacity,
    double rated_voltage,
    bint exact_nominal,
):
    """See droopmle._kernels_py.estimate_batch for the contract."""
    # const views accept the read-only arrays the simulator hands out
    cdef const double[::1] v = np.ascontiguousarray(voltages, dtype=np.float64)
    cdef const double[:, ::1] z = np.ascontiguousarray(noise, dtype=np.float64)
    cdef const double[:, ::1] dx = np.ascontiguousarray(deviations, dtype=np.float64)
    cdef const double[:, ::1] al = np.ascontiguousarray(alphas, dtype=np.float64)

    cdef int n_slots = dx.shape[0]
    cdef int n_units = dx.shape[1]
    cdef int trials = z.shape[0]
    cdef int params = n_units + 2
    cdef double x = rated_voltage

    if z.shape[1] != n_slots + 1:
        raise ValueError("noise must have N + 1 columns")
    if n_slots < params:
        raise ValueError("need at least U + 2 slots")

    theta_full_arr = np.empty((trials, params), dtype=np.float64)
    theta_star_arr = np.empty((trials, params), dtype=np.float64)
    cdef double[:, ::1] theta_full = theta_full_arr
    cdef double[:, ::1] theta_star = theta_star_arr

    # Fortran-order scratch for dgels (it overwrites A and b in place).
    cdef double[::1] gen = np.empty(n_slots * (n_units - 1), dtype=np.float64)
    cdef double[::1] amat = np.empty(n_slots * params, dtype=np.float64)
    cdef double[::1] bvec = np.empty(n_slots, dtype=np.float64)
    cdef double[::1] rhs = np.empty(n_slots, dtype=np.float64)
    cdef double[::1] vm = np.empty(n_slots, dtype=np.float64)

    cdef char trans = b'N'
    cdef int m = n_slots, nrhs = 1, lda = n_slots, ldb = n_slots, info = 0
    cdef int lwork = -1
    cdef double wquery = 0.0
    dgels(&trans, &m, &params, &nrhs, &amat[0], &lda, &bvec[0], &ldb,
          &wquery, &lwork, &info)
    if info != 0:
        raise RuntimeError(f"dgels workspace query failed (info={info})")
    lwork = <int>wquery
    cdef double[::1] work = np.empty(lwork, dtype=np.float64)

    cdef Py_ssize_t t, n, u, j
    cdef double center, vbar, a0, a1, a2, d, acc

    with nogil:
        for t in range(trials):
            acc = 0.0
            for n in range(n_slots):
                vm[n] = v[n] + z[t, n + 1]
                acc += vm[n]
            center = acc / n_slots
            if exact_nominal:
                vbar = nominal_voltage
            else:
                vbar = nominal_voltage + z[t, 0]

            j = 0
            for u in range(n_units):
                if u == controller_idx:
                    continue
                for n in range(n_slots):
                    gen[j * n_slots + n] = vm[n] * al[n, u] * (vm[n] - x - dx[n, u])
                j += 1
            for n in range(n_slots):
                rhs[n] = (-vm[n] * al[n, controller_idx]
                          * (vm[n] - x - dx[n, controller_idx]) * own_capacity)

            # full variant, load basis re-based about the trial mean
            for j in range(n_units - 1):
                for n in range(n_slots):
                    amat[j * n_slots + n] = gen[j * n_slots + n]
            for n in range(n_slots):
                d = vm[n] - center
                amat[(params - 3) * n_slots + n] = 1.0
                amat[(params - 2) * n_slots + n] = d
                amat[(params - 1) * n_slots + n] = d * d
                bvec[n] = rhs[n]
            dgels(&trans, &m, &params, &nrhs, &amat[0], &lda, &bvec[0], &ldb,
                  &work[0], &lwork, &info)
            for j in range(params):
                theta_full[t, j] = bvec[j]
            a0 = theta_full[t, params - 3]
            a1 = theta_full[t, params - 2]
            a2 = theta_full[t, params - 1]
            theta_full[t, params - 3] = a2 * x * x
            theta_full[t, params - 2] = (a1 - 2.0 * center * a2) * x
            theta_full[t, params - 1] = a0 - center * a1 + center * center * a2

            # transformed variant, load basis about the nominal voltage
            for j in range(n_units - 1):
                for n in range(n_slots):
                    amat[j * n_slots + n] = gen[j * n_slots + n]
            for n in range(n_slots):
                d = vm[n] - vbar
                amat[(params - 3) * n_slots + n] = 1.0
                amat[(params - 2) * n_slots + n] = d
                amat[(params - 1) * n_slots + n] = d * d
                bvec[n] = rhs[n]
            dgels(&trans, &m, &params, &nrhs, &amat[0], &lda, &bvec[0], &ldb,
                  &work[0], &lwork, &info)
            for j in range(params):
                theta_star[t, j] = bvec[j]

    return theta_full_arr, theta_star_arr
