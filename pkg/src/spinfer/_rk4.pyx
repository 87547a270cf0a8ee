# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled classical RK4 for the built-in models.

Mirrors :mod:`spinfer._rk4_py` exactly; see there for the calling convention.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport isfinite

cnp.import_array()

cdef enum:
    LV = 0
    TIV = 1
    MAXDIM = 4


cdef inline int _rhs(int model, const double* p, const double* y, double* dy) noexcept nogil:
    cdef double tv, den
    if model == LV:
        dy[0] = -y[0] + p[0] * y[0] * y[1]
        dy[1] = y[1] - p[1] * y[0] * y[1]
        return 0
    # p = [beta, rho, c, delta, K_d, kappa]
    den = p[4] + y[2]
    if den < 1e-300 and den > -1e-300:
        return 2
    tv = p[0] * y[0] * y[3]
    dy[0] = -tv
    dy[1] = tv - p[5] * y[1]
    dy[2] = p[5] * y[1] - p[3] * y[2] / den
    dy[3] = p[1] * y[2] - p[2] * y[3]
    return 0


def integrate(int model, double[::1] params, double[::1] y0, double[::1] nodes):
    """Integrate on ``nodes``; returns ``(states, fail_index, fail_code)``."""
    cdef Py_ssize_t n = nodes.shape[0]
    cdef int dim = 2 if model == LV else 4
    cdef Py_ssize_t i
    cdef int j, code = 0
    cdef double h
    cdef double y[MAXDIM]
    cdef double tmp[MAXDIM]
    cdef double k1[MAXDIM]
    cdef double k2[MAXDIM]
    cdef double k3[MAXDIM]
    cdef double k4[MAXDIM]
    if model != LV and model != TIV:
        raise ValueError(f"unknown compiled model id {model}")
    if y0.shape[0] != dim:
        raise ValueError("initial state has wrong dimension")
    out = np.empty((n, dim), dtype=np.float64)
    cdef double[:, ::1] S = out
    cdef const double* p = &params[0]
    cdef Py_ssize_t fail = -1
    for j in range(dim):
        y[j] = y0[j]
        S[0, j] = y[j]
    with nogil:
        for i in range(n - 1):
            h = nodes[i + 1] - nodes[i]
            code = _rhs(model, p, y, k1)
            if code:
                fail = i
                break
            for j in range(dim):
                tmp[j] = y[j] + 0.5 * h * k1[j]
            code = _rhs(model, p, tmp, k2)
            if code:
                fail = i
                break
            for j in range(dim):
                tmp[j] = y[j] + 0.5 * h * k2[j]
            code = _rhs(model, p, tmp, k3)
            if code:
                fail = i
                break
            for j in range(dim):
                tmp[j] = y[j] + h * k3[j]
            code = _rhs(model, p, tmp, k4)
            if code:
                fail = i
                break
            for j in range(dim):
                y[j] = y[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
                if not isfinite(y[j]):
                    code = 1
            if code:
                fail = i + 1
                break
            for j in range(dim):
                S[i + 1, j] = y[j]
    return out, fail, code
