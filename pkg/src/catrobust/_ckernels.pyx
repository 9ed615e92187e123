# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled projection kernels; same signatures as ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, INFINITY, isfinite
from libc.stdlib cimport malloc, free, qsort

cnp.import_array()


cdef struct Breakpoint:
    double ratio
    double a
    double w


cdef int _cmp_desc(const void* x, const void* y) noexcept nogil:
    cdef double a = (<const double*>x)[0]
    cdef double b = (<const double*>y)[0]
    if a > b:
        return -1
    if a < b:
        return 1
    return 0


cdef int _cmp_bp_desc(const void* x, const void* y) noexcept nogil:
    cdef double a = (<const Breakpoint*>x).ratio
    cdef double b = (<const Breakpoint*>y).ratio
    if a > b:
        return -1
    if a < b:
        return 1
    return 0


cdef inline void _isort_desc(double* a, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double key
    for i in range(1, n):
        key = a[i]
        j = i - 1
        while j >= 0 and a[j] < key:
            a[j + 1] = a[j]
            j -= 1
        a[j + 1] = key


cdef inline void _isort_bp_desc(Breakpoint* a, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef Breakpoint key
    for i in range(1, n):
        key = a[i]
        j = i - 1
        while j >= 0 and a[j].ratio < key.ratio:
            a[j + 1] = a[j]
            j -= 1
        a[j + 1] = key


cdef void _simplex_block(double* v, Py_ssize_t n, double* buf) noexcept nogil:
    cdef Py_ssize_t j, rho = 0
    cdef double css = 0.0, theta = 0.0, run = 0.0
    for j in range(n):
        buf[j] = v[j]
    if n <= 32:
        _isort_desc(buf, n)
    else:
        qsort(buf, n, sizeof(double), _cmp_desc)
    for j in range(n):
        run += buf[j]
        if buf[j] - (run - 1.0) / (j + 1) > 0:
            rho = j
            css = run
    theta = (css - 1.0) / (rho + 1)
    for j in range(n):
        v[j] = v[j] - theta if v[j] > theta else 0.0


cdef void _simplex_row(double* v, const long* offsets, Py_ssize_t m, double* buf) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(m):
        _simplex_block(v + offsets[i], offsets[i + 1] - offsets[i], buf)


cdef void _wl1_row(double* v, const double* w, Py_ssize_t t, double eps, double cap,
                   Breakpoint* bp) noexcept nogil:
    cdef Py_ssize_t j, n = 0, k
    cdef double norm = 0.0, s1 = 0.0, s2 = 0.0, lam = 0.0, nxt, a
    for j in range(t):
        norm += w[j] * fabs(v[j])
    if norm <= eps:
        return
    # zero coordinates have breakpoint 0 and can never become active
    for j in range(t):
        if w[j] > 0 and v[j] != 0:
            bp[n].a = fabs(v[j])
            bp[n].w = w[j]
            bp[n].ratio = bp[n].a / w[j]
            n += 1
    if n <= 32:
        _isort_bp_desc(bp, n)
    else:
        qsort(bp, n, sizeof(Breakpoint), _cmp_bp_desc)
    for k in range(n):
        s1 += bp[k].w * bp[k].a
        s2 += bp[k].w * bp[k].w
        lam = (s1 - eps) / s2
        nxt = bp[k + 1].ratio if k + 1 < n else 0.0
        if lam >= nxt:
            break
    if lam < 0:
        lam = 0.0
    for j in range(t):
        if w[j] > 0:
            a = fabs(v[j]) - lam * w[j]
            if a <= 0:
                v[j] = 0.0
            elif v[j] < 0:
                v[j] = -a
            else:
                v[j] = a
            if w[j] >= cap and fabs(v[j]) < 1e-12:
                v[j] = 0.0


def simplex_project_blocks(V, offsets):
    cdef cnp.ndarray[double, ndim=2, mode="c"] out = np.array(V, dtype=np.float64, order="C", copy=True)
    cdef cnp.ndarray[long, ndim=1, mode="c"] off = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef Py_ssize_t n = out.shape[0], t = out.shape[1], m = off.shape[0] - 1, r
    cdef double* buf = <double*>malloc((t + 1) * sizeof(double))
    try:
        with nogil:
            for r in range(n):
                _simplex_row(&out[r, 0], &off[0], m, buf)
    finally:
        free(buf)
    return out


def wl1_project_rows(V, W, eps, double cap=INFINITY):
    cdef cnp.ndarray[double, ndim=2, mode="c"] out = np.array(V, dtype=np.float64, order="C", copy=True)
    cdef cnp.ndarray[double, ndim=2, mode="c"] w = np.ascontiguousarray(W, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] e = np.ascontiguousarray(
        np.broadcast_to(np.asarray(eps, dtype=np.float64), (out.shape[0],)))
    cdef Py_ssize_t n = out.shape[0], t = out.shape[1], r
    cdef Breakpoint* bp = <Breakpoint*>malloc((t + 1) * sizeof(Breakpoint))
    try:
        with nogil:
            for r in range(n):
                _wl1_row(&out[r, 0], &w[r, 0], t, e[r], cap, bp)
    finally:
        free(bp)
    return out


def dykstra_rows(Xt, D, W, eps, offsets, int d_steps, double cap=INFINITY):
    cdef cnp.ndarray[double, ndim=2, mode="c"] xt = np.ascontiguousarray(Xt, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] delta = np.array(D, dtype=np.float64, order="C", copy=True)
    cdef cnp.ndarray[double, ndim=2, mode="c"] w = np.ascontiguousarray(W, dtype=np.float64)
    cdef cnp.ndarray[long, ndim=1, mode="c"] off = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] e = np.ascontiguousarray(
        np.broadcast_to(np.asarray(eps, dtype=np.float64), (delta.shape[0],)))
    cdef Py_ssize_t n = delta.shape[0], t = delta.shape[1], m = off.shape[0] - 1
    cdef Py_ssize_t r, j, it
    cdef double* p = <double*>malloc(t * sizeof(double))
    cdef double* q = <double*>malloc(t * sizeof(double))
    cdef double* z = <double*>malloc(t * sizeof(double))
    cdef double* buf = <double*>malloc((t + 1) * sizeof(double))
    cdef Breakpoint* bp = <Breakpoint*>malloc((t + 1) * sizeof(Breakpoint))
    cdef double* d
    cdef const double* x
    try:
        with nogil:
            for r in range(n):
                d = &delta[r, 0]
                x = &xt[r, 0]
                for j in range(t):
                    p[j] = 0.0
                    q[j] = 0.0
                for it in range(d_steps):
                    for j in range(t):
                        z[j] = x[j] + d[j] + p[j]
                    _simplex_row(z, &off[0], m, buf)
                    for j in range(t):
                        z[j] = z[j] - x[j]
                        p[j] = d[j] + p[j] - z[j]
                        d[j] = z[j] + q[j]
                    _wl1_row(d, &w[r, 0], t, e[r], cap, bp)
                    for j in range(t):
                        q[j] = z[j] + q[j] - d[j]
    finally:
        free(p)
        free(q)
        free(z)
        free(buf)
        free(bp)
    return delta
