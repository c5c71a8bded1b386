# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled mirror of the numpy reference kernel in _pure.py.

Same algorithm, same status codes, same projection rule; only the loop
scheduling differs. Agreement between the two is asserted by tests, so
any change here must be made in _pure.py first.
"""

import numpy as np


cdef double PROJECT_TOL = 1e-14
cdef double PROJECT_MAX_DIST = 0.5
cdef int PROJECT_MAX_ITER = 20

STATUS_OK = 0
STATUS_DIVERGED = 1
STATUS_PROJECTION = 2


cdef inline void _mul(const double* a, const double* b, double* out) noexcept nogil:
    # out = a @ b, row-major 3x3
    cdef Py_ssize_t i, j
    for i in range(3):
        for j in range(3):
            out[3 * i + j] = (
                a[3 * i] * b[j] + a[3 * i + 1] * b[3 + j] + a[3 * i + 2] * b[6 + j]
            )


cdef inline void _tmul(const double* a, const double* b, double* out) noexcept nogil:
    # out = a^T @ b
    cdef Py_ssize_t i, j
    for i in range(3):
        for j in range(3):
            out[3 * i + j] = a[i] * b[j] + a[3 + i] * b[3 + j] + a[6 + i] * b[6 + j]


cdef inline void _matvec(const double* a, const double* x, double* out) noexcept nogil:
    out[0] = a[0] * x[0] + a[1] * x[1] + a[2] * x[2]
    out[1] = a[3] * x[0] + a[4] * x[1] + a[5] * x[2]
    out[2] = a[6] * x[0] + a[7] * x[1] + a[8] * x[2]


cdef inline double _det3(const double* m) noexcept nogil:
    return (
        m[0] * (m[4] * m[8] - m[5] * m[7])
        - m[1] * (m[3] * m[8] - m[5] * m[6])
        + m[2] * (m[3] * m[7] - m[4] * m[6])
    )


cdef int _project3(double* m) noexcept nogil:
    # Newton iteration for the orthogonal polar factor of a 3x3 matrix
    # with positive determinant: x <- (x + x^-T) / 2. Overwrites m on
    # success; returns 0, or 2 when m is not salvageable.
    cdef double x[9]
    cdef double inv[9]
    cdef double det, defect, dist, e
    cdef Py_ssize_t i, j, it
    det = _det3(m)
    if not det > 0.0:  # also catches NaN
        return 2
    for i in range(9):
        x[i] = m[i]
    for it in range(PROJECT_MAX_ITER):
        defect = 0.0
        for i in range(3):
            for j in range(3):
                e = x[i] * x[j] + x[3 + i] * x[3 + j] + x[6 + i] * x[6 + j]
                if i == j:
                    e -= 1.0
                defect += e * e
        if defect <= PROJECT_TOL * PROJECT_TOL:
            break
        det = _det3(x)
        if not det > 1e-12:
            return 2
        inv[0] = (x[4] * x[8] - x[5] * x[7]) / det
        inv[1] = (x[2] * x[7] - x[1] * x[8]) / det
        inv[2] = (x[1] * x[5] - x[2] * x[4]) / det
        inv[3] = (x[5] * x[6] - x[3] * x[8]) / det
        inv[4] = (x[0] * x[8] - x[2] * x[6]) / det
        inv[5] = (x[2] * x[3] - x[0] * x[5]) / det
        inv[6] = (x[3] * x[7] - x[4] * x[6]) / det
        inv[7] = (x[1] * x[6] - x[0] * x[7]) / det
        inv[8] = (x[0] * x[4] - x[1] * x[3]) / det
        # x <- (x + inv^T) / 2
        for i in range(3):
            for j in range(3):
                x[3 * i + j] = 0.5 * (x[3 * i + j] + inv[3 * j + i])
    else:
        return 2
    dist = 0.0
    for i in range(9):
        e = x[i] - m[i]
        dist += e * e
    if dist > PROJECT_MAX_DIST * PROJECT_MAX_DIST:
        return 2
    for i in range(9):
        m[i] = x[i]
    return 0


cdef void _derivative(
    double[:, :, ::1] r,
    double[:, ::1] w,
    long long[::1] heads,
    long long[::1] tails,
    double[:, :, ::1] a_edges,
    double[:, ::1] a_leader,
    double[:, ::1] r0,
    Py_ssize_t leader,
    double k_r0,
    double k_r,
    double k_w,
    double[:, :, ::1] jmat,
    double[:, :, ::1] jinv,
    double[:, :, ::1] rdot,
    double[:, ::1] wdot,
    double[:, ::1] tau,
) noexcept nogil:
    cdef Py_ssize_t n = r.shape[0]
    cdef Py_ssize_t ne = heads.shape[0]
    cdef Py_ssize_t i, k, a, hh, tt
    cdef double rb[9]
    cdef double bb[9]
    cdef double ps[3]
    cdef double tmp[3]
    cdef double jw[3]
    cdef double rhs[3]
    cdef double w0, w1, w2
    for i in range(n):
        tau[i, 0] = -k_w * w[i, 0]
        tau[i, 1] = -k_w * w[i, 1]
        tau[i, 2] = -k_w * w[i, 2]
    _tmul(&r0[0, 0], &r[leader, 0, 0], rb)
    _mul(&a_leader[0, 0], rb, bb)
    tau[leader, 0] -= k_r0 * 0.5 * (bb[7] - bb[5])
    tau[leader, 1] -= k_r0 * 0.5 * (bb[2] - bb[6])
    tau[leader, 2] -= k_r0 * 0.5 * (bb[3] - bb[1])
    for k in range(ne):
        hh = heads[k]
        tt = tails[k]
        _tmul(&r[hh, 0, 0], &r[tt, 0, 0], rb)
        _mul(&a_edges[k, 0, 0], rb, bb)
        ps[0] = 0.5 * (bb[7] - bb[5])
        ps[1] = 0.5 * (bb[2] - bb[6])
        ps[2] = 0.5 * (bb[3] - bb[1])
        tau[tt, 0] -= k_r * ps[0]
        tau[tt, 1] -= k_r * ps[1]
        tau[tt, 2] -= k_r * ps[2]
        _matvec(rb, ps, tmp)
        tau[hh, 0] += k_r * tmp[0]
        tau[hh, 1] += k_r * tmp[1]
        tau[hh, 2] += k_r * tmp[2]
    for i in range(n):
        w0 = w[i, 0]
        w1 = w[i, 1]
        w2 = w[i, 2]
        _matvec(&jmat[i, 0, 0], &w[i, 0], jw)
        rhs[0] = tau[i, 0] - (w1 * jw[2] - w2 * jw[1])
        rhs[1] = tau[i, 1] - (w2 * jw[0] - w0 * jw[2])
        rhs[2] = tau[i, 2] - (w0 * jw[1] - w1 * jw[0])
        _matvec(&jinv[i, 0, 0], rhs, &wdot[i, 0])
        for a in range(3):
            rdot[i, a, 0] = r[i, a, 1] * w2 - r[i, a, 2] * w1
            rdot[i, a, 1] = r[i, a, 2] * w0 - r[i, a, 0] * w2
            rdot[i, a, 2] = r[i, a, 0] * w1 - r[i, a, 1] * w0


def rk4_run(
    double[:, :, ::1] r,
    double[:, ::1] w,
    long long[::1] heads,
    long long[::1] tails,
    double[:, :, ::1] a_edges,
    double[:, ::1] a_leader,
    double[:, ::1] r0,
    Py_ssize_t leader,
    double k_r0,
    double k_r,
    double k_w,
    double[:, :, ::1] jmat,
    double[:, :, ::1] jinv,
    double h,
    Py_ssize_t n_steps,
    double omega_max,
):
    """Advances (r, w) by n_steps RK4 steps in place; returns a status code."""
    cdef Py_ssize_t n = r.shape[0]
    k1r_a = np.empty((n, 3, 3))
    k2r_a = np.empty((n, 3, 3))
    k3r_a = np.empty((n, 3, 3))
    k4r_a = np.empty((n, 3, 3))
    rt_a = np.empty((n, 3, 3))
    k1w_a = np.empty((n, 3))
    k2w_a = np.empty((n, 3))
    k3w_a = np.empty((n, 3))
    k4w_a = np.empty((n, 3))
    wt_a = np.empty((n, 3))
    tau_a = np.empty((n, 3))
    cdef double[:, :, ::1] k1r = k1r_a
    cdef double[:, :, ::1] k2r = k2r_a
    cdef double[:, :, ::1] k3r = k3r_a
    cdef double[:, :, ::1] k4r = k4r_a
    cdef double[:, :, ::1] rt = rt_a
    cdef double[:, ::1] k1w = k1w_a
    cdef double[:, ::1] k2w = k2w_a
    cdef double[:, ::1] k3w = k3w_a
    cdef double[:, ::1] k4w = k4w_a
    cdef double[:, ::1] wt = wt_a
    cdef double[:, ::1] tau = tau_a
    cdef Py_ssize_t step, i, a, b
    cdef double h2 = 0.5 * h
    cdef double h6 = h / 6.0
    cdef double m2 = omega_max * omega_max
    cdef double ns
    cdef int status = 0
    with nogil:
        for step in range(n_steps):
            _derivative(
                r, w, heads, tails, a_edges, a_leader, r0, leader,
                k_r0, k_r, k_w, jmat, jinv, k1r, k1w, tau,
            )
            for i in range(n):
                for a in range(3):
                    for b in range(3):
                        rt[i, a, b] = r[i, a, b] + h2 * k1r[i, a, b]
                    wt[i, a] = w[i, a] + h2 * k1w[i, a]
            _derivative(
                rt, wt, heads, tails, a_edges, a_leader, r0, leader,
                k_r0, k_r, k_w, jmat, jinv, k2r, k2w, tau,
            )
            for i in range(n):
                for a in range(3):
                    for b in range(3):
                        rt[i, a, b] = r[i, a, b] + h2 * k2r[i, a, b]
                    wt[i, a] = w[i, a] + h2 * k2w[i, a]
            _derivative(
                rt, wt, heads, tails, a_edges, a_leader, r0, leader,
                k_r0, k_r, k_w, jmat, jinv, k3r, k3w, tau,
            )
            for i in range(n):
                for a in range(3):
                    for b in range(3):
                        rt[i, a, b] = r[i, a, b] + h * k3r[i, a, b]
                    wt[i, a] = w[i, a] + h * k3w[i, a]
            _derivative(
                rt, wt, heads, tails, a_edges, a_leader, r0, leader,
                k_r0, k_r, k_w, jmat, jinv, k4r, k4w, tau,
            )
            for i in range(n):
                for a in range(3):
                    for b in range(3):
                        r[i, a, b] = r[i, a, b] + h6 * (
                            k1r[i, a, b]
                            + 2.0 * k2r[i, a, b]
                            + 2.0 * k3r[i, a, b]
                            + k4r[i, a, b]
                        )
                    w[i, a] = w[i, a] + h6 * (
                        k1w[i, a] + 2.0 * k2w[i, a] + 2.0 * k3w[i, a] + k4w[i, a]
                    )
            # Projection of every agent first, then the divergence guard,
            # matching the order of checks in the numpy kernel.
            for i in range(n):
                if _project3(&r[i, 0, 0]) != 0:
                    status = 2
                    break
            if status == 0:
                for i in range(n):
                    ns = w[i, 0] * w[i, 0] + w[i, 1] * w[i, 1] + w[i, 2] * w[i, 2]
                    if not ns <= m2:
                        status = 1
                        break
            if status != 0:
                break
    return status
