# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled block coordinate descent for the weighted l2,1-penalized least
squares problem, expressed through the Gram matrix.

Minimizes ``1/2 ||Y - D Z||_F^2 + lam * sum_i w_i ||Z_i||_2`` given
``H = D^T D``, ``C = D^T Y`` and the running correlation ``R = C - H Z``.
Mirrors :mod:`tensorlasso._core_py` exactly.
"""
import numpy as np
from libc.math cimport sqrt, fabs

ctypedef double f64


cdef inline f64 _row_norm(f64[:, ::1] A, Py_ssize_t i, Py_ssize_t d) noexcept nogil:
    cdef f64 s = 0.0
    cdef Py_ssize_t j
    for j in range(d):
        s += A[i, j] * A[i, j]
    return sqrt(s)


cdef inline f64 _row_kkt(f64[:, ::1] Z, f64[:, ::1] R, f64 thr, Py_ssize_t i, Py_ssize_t d) noexcept nogil:
    cdef f64 nz = _row_norm(Z, i, d)
    cdef f64 s = 0.0, t
    cdef Py_ssize_t j
    if nz > 0.0:
        for j in range(d):
            t = -R[i, j] + thr * Z[i, j] / nz
            s += t * t
        return sqrt(s)
    t = _row_norm(R, i, d) - thr
    return t if t > 0.0 else 0.0


cdef f64 _update_row(f64[:, ::1] H, f64[:, ::1] Z, f64[:, ::1] R, f64[::1] w, f64 lam,
                     Py_ssize_t i, Py_ssize_t k, Py_ssize_t d, f64[::1] g, f64[::1] delta) noexcept nogil:
    cdef f64 hii = H[i, i]
    cdef f64 ng = 0.0, thr, scale, change = 0.0
    cdef Py_ssize_t j, r
    if hii <= 0.0:
        return 0.0
    for j in range(d):
        g[j] = R[i, j] + hii * Z[i, j]
        ng += g[j] * g[j]
    ng = sqrt(ng)
    thr = lam * w[i]
    if ng <= thr:
        scale = 0.0
    else:
        scale = (1.0 - thr / ng) / hii
    for j in range(d):
        delta[j] = scale * g[j] - Z[i, j]
        if fabs(delta[j]) > change:
            change = fabs(delta[j])
    if change == 0.0:
        return 0.0
    for j in range(d):
        Z[i, j] += delta[j]
    for r in range(k):
        if H[i, r] != 0.0:
            for j in range(d):
                R[r, j] -= H[i, r] * delta[j]
    return change


cdef f64 _objective(f64[:, ::1] C, f64[:, ::1] Z, f64[:, ::1] R, f64[::1] w, f64 lam,
                    Py_ssize_t k, Py_ssize_t d) noexcept nogil:
    # objective minus the constant 1/2 ||Y||^2
    cdef f64 s = 0.0, pen = 0.0
    cdef Py_ssize_t i, j
    for i in range(k):
        for j in range(d):
            s += Z[i, j] * (C[i, j] + R[i, j])
        pen += w[i] * _row_norm(Z, i, d)
    return -0.5 * s + lam * pen


def kkt(f64[:, ::1] Z, f64[:, ::1] R, f64[::1] w, f64 lam):
    """Max over rows of the distance of the row gradient from ``-lam w_i d||Z_i||``."""
    cdef Py_ssize_t k = Z.shape[0], d = Z.shape[1], i
    cdef f64 worst = 0.0, v
    with nogil:
        for i in range(k):
            v = _row_kkt(Z, R, lam * w[i], i, d)
            if v > worst:
                worst = v
    return worst


def group_bcd(f64[:, ::1] H, f64[:, ::1] C, f64[:, ::1] Z, f64[:, ::1] R, f64[::1] w,
              f64 lam, Py_ssize_t max_sweeps, f64 tol, f64[::1] trace):
    """Run sweeps in place on ``Z`` and ``R``.

    Alternates a full ascending sweep with sweeps restricted to the nonzero
    rows until the KKT residual drops to ``tol``.  Objective values after each
    sweep are written to ``trace`` when it is long enough.

    Returns ``(sweeps, converged, kkt_residual)``.
    """
    cdef Py_ssize_t k = Z.shape[0], d = Z.shape[1]
    cdef Py_ssize_t sweeps = 0, i, a, n_active
    cdef Py_ssize_t n_trace = trace.shape[0]
    cdef bint converged = False
    cdef f64 res = 0.0, act_res, v
    cdef f64[::1] g = np.empty(d)
    cdef f64[::1] delta = np.empty(d)
    cdef Py_ssize_t[::1] active = np.empty(k, dtype=np.intp)
    with nogil:
        while sweeps < max_sweeps:
            for i in range(k):
                _update_row(H, Z, R, w, lam, i, k, d, g, delta)
            if sweeps < n_trace:
                trace[sweeps] = _objective(C, Z, R, w, lam, k, d)
            sweeps += 1
            res = 0.0
            for i in range(k):
                v = _row_kkt(Z, R, lam * w[i], i, d)
                if v > res:
                    res = v
            if res <= tol:
                converged = True
                break
            n_active = 0
            for i in range(k):
                if _row_norm(Z, i, d) > 0.0:
                    active[n_active] = i
                    n_active += 1
            while sweeps < max_sweeps and n_active > 0:
                for a in range(n_active):
                    _update_row(H, Z, R, w, lam, active[a], k, d, g, delta)
                if sweeps < n_trace:
                    trace[sweeps] = _objective(C, Z, R, w, lam, k, d)
                sweeps += 1
                act_res = 0.0
                for a in range(n_active):
                    v = _row_kkt(Z, R, lam * w[active[a]], active[a], d)
                    if v > act_res:
                        act_res = v
                if act_res <= 0.5 * tol:
                    break
        if not converged:
            res = 0.0
            for i in range(k):
                v = _row_kkt(Z, R, lam * w[i], i, d)
                if v > res:
                    res = v
    return sweeps, converged, res
