# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled characteristic tracer for the built-in models.

Same Dormand-Prince 5(4) controller, cubic Hermite dense output and
composite Simpson rule as the pure-Python path in ``numerics``.
"""

from libc.math cimport exp, fabs, sqrt, pow, isfinite
from libc.stdlib cimport malloc, realloc, free

import numpy as np

from .errors import NonFiniteIntegrand, NonFiniteRhs, StepSizeUnderflow

BACKEND = "cython"

DEF EXP_RATIO = 0
DEF LOGISTIC = 1

cdef double C2 = 1.0 / 5, C3 = 3.0 / 10, C4 = 4.0 / 5, C5 = 8.0 / 9
cdef double A21 = 1.0 / 5
cdef double A31 = 3.0 / 40, A32 = 9.0 / 40
cdef double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9
cdef double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561
cdef double A54 = -212.0 / 729
cdef double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247
cdef double A64 = 49.0 / 176, A65 = -5103.0 / 18656
cdef double B1 = 35.0 / 384, B3 = 500.0 / 1113, B4 = 125.0 / 192
cdef double B5 = -2187.0 / 6784, B6 = 11.0 / 84
cdef double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920
cdef double E5 = -17253.0 / 339200, E6 = 22.0 / 525, E7 = -1.0 / 40


cdef struct Model:
    int code
    const double *x
    Py_ssize_t n


cdef void logistic_terms_c(Model *m, double psi, double lam,
                           double *slope, double *source) nogil:
    cdef double A = 0, B = 0, C = 0, dAp = 0, dBp = 0, dCp = 0, dCl = 0
    cdef double xi, p, w, dw
    cdef Py_ssize_t i
    for i in range(m.n):
        xi = m.x[i]
        p = 1.0 / (1.0 + exp(-(lam + psi * xi)))
        w = p * (1.0 - p)
        dw = w * (1.0 - 2.0 * p)
        A += w * xi * xi
        B += w * xi
        C += w
        dAp += dw * xi * xi * xi
        dBp += dw * xi * xi
        dCp += dw * xi
        dCl += dw
    cdef double dAl = dBp, dBl = dCp
    cdef double D = A * C - B * B
    cdef double dDp = dAp * C + A * dCp - 2.0 * B * dBp
    cdef double dDl = dAl * C + A * dCl - 2.0 * B * dBl
    cdef double u = C / D
    cdef double dup = (dCp * D - C * dDp) / (D * D)
    cdef double dul = (dCl * D - C * dDl) / (D * D)
    cdef double v = -B / D
    cdef double dvl = -(dBl * D - B * dDl) / (D * D)
    cdef double ru = sqrt(u)
    slope[0] = -B / C
    source[0] = -(dup / (2.0 * ru) + dvl / ru - v * dul / (2.0 * u * ru)) / ru


cdef inline void terms(Model *m, double s, double lam, double *slope,
                       double *source) nogil:
    if m.code == EXP_RATIO:
        slope[0] = 0.0
        source[0] = -1.0 / s
    else:
        logistic_terms_c(m, s, lam, slope, source)


cdef inline double rhs(Model *m, double s, double lam) nogil:
    cdef double sl, so
    terms(m, s, lam, &sl, &so)
    return sl


cdef struct Traj:
    double *grid
    double *y
    double *f
    Py_ssize_t size
    Py_ssize_t cap


cdef int traj_push(Traj *t, double s, double y, double f) nogil:
    cdef Py_ssize_t newcap
    cdef double *p
    if t.size == t.cap:
        newcap = 2 * t.cap
        p = <double *> realloc(t.grid, newcap * sizeof(double))
        if p == NULL:
            return -1
        t.grid = p
        p = <double *> realloc(t.y, newcap * sizeof(double))
        if p == NULL:
            return -1
        t.y = p
        p = <double *> realloc(t.f, newcap * sizeof(double))
        if p == NULL:
            return -1
        t.f = p
        t.cap = newcap
    t.grid[t.size] = s
    t.y[t.size] = y
    t.f[t.size] = f
    t.size += 1
    return 0


cdef int dopri(Model *m, double s0, double y0, double s_end, double rtol,
               double atol, Traj *t) nogil:
    """0 ok, 1 step underflow, 2 non-finite rhs, 3 allocation failure."""
    cdef double sign = 1.0 if s_end > s0 else -1.0
    cdef double span = fabs(s_end - s0)
    cdef double h_min = 1e-14 * span
    cdef double u = 0.0, y = y0, h, sc, d0, d1, d2, f1, h0, h1
    cdef double k1, k2, k3, k4, k5, k6, k7, y_new, u_new, err, err_norm, factor
    cdef bint last, rejected = False

    k1 = sign * rhs(m, s0, y)
    if not isfinite(k1):
        return 2
    if traj_push(t, s0, y, sign * k1) != 0:
        return 3

    sc = atol + rtol * fabs(y)
    d0 = fabs(y) / sc
    d1 = fabs(k1) / sc
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    if h0 > span:
        h0 = span
    f1 = sign * rhs(m, s0 + sign * h0, y + h0 * k1)
    d2 = fabs(f1 - k1) / sc / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = 1e-6 if h0 * 1e-3 < 1e-6 else h0 * 1e-3
    else:
        h1 = pow(0.01 / (d1 if d1 > d2 else d2), 0.2)
    h = 100 * h0
    if h1 < h:
        h = h1
    if span < h:
        h = span
    if h < 1e-6 * span:
        h = 1e-6 * span

    while u < span:
        if h < h_min:
            return 1
        last = u + h >= span
        if last:
            h = span - u
        k2 = sign * rhs(m, s0 + sign * (u + C2 * h), y + h * A21 * k1)
        k3 = sign * rhs(m, s0 + sign * (u + C3 * h), y + h * (A31 * k1 + A32 * k2))
        k4 = sign * rhs(m, s0 + sign * (u + C4 * h),
                        y + h * (A41 * k1 + A42 * k2 + A43 * k3))
        k5 = sign * rhs(m, s0 + sign * (u + C5 * h),
                        y + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4))
        k6 = sign * rhs(m, s0 + sign * (u + h),
                        y + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4
                                 + A65 * k5))
        y_new = y + h * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6)
        u_new = span if last else u + h
        k7 = sign * rhs(m, s0 + sign * u_new, y_new)
        if not (isfinite(k2) and isfinite(k3) and isfinite(k4)
                and isfinite(k5) and isfinite(k6) and isfinite(k7)):
            return 2
        err = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7)
        sc = atol + rtol * (fabs(y) if fabs(y) > fabs(y_new) else fabs(y_new))
        err_norm = fabs(err) / sc
        if err_norm <= 1.0:
            u = u_new
            y = y_new
            k1 = k7
            if traj_push(t, s_end if last else s0 + sign * u, y, sign * k7) != 0:
                return 3
            if err_norm == 0.0:
                factor = 5.0
            else:
                factor = 0.9 * pow(err_norm, -0.2)
                if factor > 5.0:
                    factor = 5.0
            if rejected and factor > 1.0:
                factor = 1.0
            rejected = False
            h = h * factor
            if h > span:
                h = span
        else:
            rejected = True
            factor = 0.9 * pow(err_norm, -0.2)
            if factor < 0.2:
                factor = 0.2
            h = h * factor
    return 0


cdef double hermite(Traj *t, double s) nogil:
    # grid is monotone in either direction
    cdef Py_ssize_t lo = 0, hi = t.size - 1, mid
    cdef bint inc = t.grid[hi] > t.grid[0]
    if t.size == 1:
        return t.y[0]
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if (t.grid[mid] <= s) == inc:
            lo = mid
        else:
            hi = mid
    cdef double h = t.grid[lo + 1] - t.grid[lo]
    cdef double th = (s - t.grid[lo]) / h
    cdef double th2 = th * th, th3 = th2 * th
    return ((2 * th3 - 3 * th2 + 1) * t.y[lo] + (th3 - 2 * th2 + th) * h * t.f[lo]
            + (-2 * th3 + 3 * th2) * t.y[lo + 1] + (th3 - th2) * h * t.f[lo + 1])


def char_trace(str code, x, double psi_star, double lam_start, double psi_anchor,
               double rtol, double atol, int n_panels, bint backward):
    """Compiled twin of ``_pykernels.char_trace``."""
    if fabs(psi_star - psi_anchor) < 1e-12:
        return float(lam_start), 0.0, 0
    if n_panels < 2 or n_panels % 2:
        raise ValueError("n_panels must be an even integer >= 2")
    cdef Model m
    cdef const double[::1] xv
    if code == "exp_ratio":
        m.code = EXP_RATIO
        m.x = NULL
        m.n = 0
    elif code == "logistic":
        xv = np.ascontiguousarray(x, dtype=np.float64)
        m.code = LOGISTIC
        m.x = &xv[0]
        m.n = xv.shape[0]
    else:
        raise ValueError(f"no kernel for {code!r}")

    cdef Traj t
    t.cap = 64
    t.size = 0
    t.grid = <double *> malloc(t.cap * sizeof(double))
    t.y = <double *> malloc(t.cap * sizeof(double))
    t.f = <double *> malloc(t.cap * sizeof(double))
    cdef int status
    cdef double lam_end, h, s, total, sl, so, lam
    cdef Py_ssize_t i, steps
    cdef bint finite = True
    try:
        if t.grid == NULL or t.y == NULL or t.f == NULL:
            raise MemoryError()
        with nogil:
            if backward:
                status = dopri(&m, psi_star, lam_start, psi_anchor, rtol, atol, &t)
            else:
                status = dopri(&m, psi_anchor, lam_start, psi_star, rtol, atol, &t)
        if status == 1:
            raise StepSizeUnderflow("step size underflow along the characteristic")
        if status == 2:
            raise NonFiniteRhs("non-finite slope along the characteristic")
        if status == 3:
            raise MemoryError()
        lam_end = t.y[t.size - 1]
        steps = t.size - 1
        h = (psi_star - psi_anchor) / n_panels
        total = 0.0
        with nogil:
            for i in range(n_panels + 1):
                if i == n_panels:
                    s = psi_star
                else:
                    s = psi_anchor + i * h
                lam = hermite(&t, s)
                terms(&m, s, lam, &sl, &so)
                if not isfinite(so):
                    finite = False
                    break
                if i == 0 or i == n_panels:
                    total += so
                elif i % 2:
                    total += 4.0 * so
                else:
                    total += 2.0 * so
        if not finite:
            raise NonFiniteIntegrand("non-finite d/a along the characteristic")
        return lam_end, total * h / 3.0, steps
    finally:
        free(t.grid)
        free(t.y)
        free(t.f)


def logistic_terms(x, double psi, double lam):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Model m
    m.code = LOGISTIC
    m.x = &xv[0]
    m.n = xv.shape[0]
    cdef double sl, so
    logistic_terms_c(&m, psi, lam, &sl, &so)
    return sl, so
