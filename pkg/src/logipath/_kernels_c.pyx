# cython: boundscheck=False, wraparound=False, cdivision=True
"""Fused single-pass kernels; signature twin of the numpy module."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp as c_exp
from libc.math cimport sqrt as c_sqrt
from libc.math cimport tanh as c_tanh

cnp.import_array()

NAME = "c"


def tanh_fwd(object x):
    arr = np.ascontiguousarray(x, dtype=np.float64)
    out = np.empty_like(arr)
    cdef double[::1] xv = arr.ravel()
    cdef double[::1] ov = out.ravel()
    cdef Py_ssize_t i, n = xv.shape[0]
    with nogil:
        for i in range(n):
            ov[i] = c_tanh(xv[i])
    return out


def tanh_bwd(object y, object g):
    ya = np.ascontiguousarray(y, dtype=np.float64)
    ga = np.ascontiguousarray(g, dtype=np.float64)
    out = np.empty_like(ya)
    cdef double[::1] yv = ya.ravel()
    cdef double[::1] gv = ga.ravel()
    cdef double[::1] ov = out.ravel()
    cdef Py_ssize_t i, n = yv.shape[0]
    with nogil:
        for i in range(n):
            ov[i] = gv[i] * (1.0 - yv[i] * yv[i])
    return out


def leaky_fwd(object x, double slope):
    arr = np.ascontiguousarray(x, dtype=np.float64)
    out = np.empty_like(arr)
    cdef double[::1] xv = arr.ravel()
    cdef double[::1] ov = out.ravel()
    cdef Py_ssize_t i, n = xv.shape[0]
    with nogil:
        for i in range(n):
            ov[i] = xv[i] if xv[i] > 0.0 else slope * xv[i]
    return out


def leaky_bwd(object x, object g, double slope):
    xa = np.ascontiguousarray(x, dtype=np.float64)
    ga = np.ascontiguousarray(g, dtype=np.float64)
    out = np.empty_like(xa)
    cdef double[::1] xv = xa.ravel()
    cdef double[::1] gv = ga.ravel()
    cdef double[::1] ov = out.ravel()
    cdef Py_ssize_t i, n = xv.shape[0]
    with nogil:
        for i in range(n):
            ov[i] = gv[i] if xv[i] > 0.0 else slope * gv[i]
    return out


def softmax_rows_fwd(object x):
    arr = np.ascontiguousarray(x, dtype=np.float64)
    out = np.empty_like(arr)
    cdef double[:, ::1] xv = arr
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j, n = xv.shape[0], m = xv.shape[1]
    cdef double mx, s
    with nogil:
        for i in range(n):
            mx = xv[i, 0]
            for j in range(1, m):
                if xv[i, j] > mx:
                    mx = xv[i, j]
            s = 0.0
            for j in range(m):
                ov[i, j] = c_exp(xv[i, j] - mx)
                s += ov[i, j]
            for j in range(m):
                ov[i, j] /= s
    return out


def softmax_rows_bwd(object y, object g):
    ya = np.ascontiguousarray(y, dtype=np.float64)
    ga = np.ascontiguousarray(g, dtype=np.float64)
    out = np.empty_like(ya)
    cdef double[:, ::1] yv = ya
    cdef double[:, ::1] gv = ga
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j, n = yv.shape[0], m = yv.shape[1]
    cdef double inner
    with nogil:
        for i in range(n):
            inner = 0.0
            for j in range(m):
                inner += gv[i, j] * yv[i, j]
            for j in range(m):
                ov[i, j] = yv[i, j] * (gv[i, j] - inner)
    return out


def layernorm_fwd(object x, object gamma, object beta, double eps):
    xa = np.ascontiguousarray(x, dtype=np.float64)
    gam = np.ascontiguousarray(gamma, dtype=np.float64)
    bet = np.ascontiguousarray(beta, dtype=np.float64)
    out = np.empty_like(xa)
    cdef Py_ssize_t n = xa.shape[0], d = xa.shape[1]
    mean = np.empty(n, dtype=np.float64)
    inv_std = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] xv = xa
    cdef double[:, ::1] ov = out
    cdef double[::1] gv = gam
    cdef double[::1] bv = bet
    cdef double[::1] mv = mean
    cdef double[::1] sv = inv_std
    cdef Py_ssize_t i, j
    cdef double mu, var, diff, inv
    with nogil:
        for i in range(n):
            mu = 0.0
            for j in range(d):
                mu += xv[i, j]
            mu /= d
            var = 0.0
            for j in range(d):
                diff = xv[i, j] - mu
                var += diff * diff
            var /= d
            inv = 1.0 / c_sqrt(var + eps)
            mv[i] = mu
            sv[i] = inv
            for j in range(d):
                ov[i, j] = (xv[i, j] - mu) * inv * gv[j] + bv[j]
    return out, mean, inv_std


def layernorm_bwd(object x, object gamma, object mean, object inv_std, object g):
    xa = np.ascontiguousarray(x, dtype=np.float64)
    gam = np.ascontiguousarray(gamma, dtype=np.float64)
    mu = np.ascontiguousarray(mean, dtype=np.float64)
    inv = np.ascontiguousarray(inv_std, dtype=np.float64)
    ga = np.ascontiguousarray(g, dtype=np.float64)
    cdef Py_ssize_t n = xa.shape[0], d = xa.shape[1]
    gx = np.empty_like(xa)
    ggamma = np.zeros(d, dtype=np.float64)
    gbeta = np.zeros(d, dtype=np.float64)
    cdef double[:, ::1] xv = xa
    cdef double[:, ::1] gv = ga
    cdef double[:, ::1] oxv = gx
    cdef double[::1] gamv = gam
    cdef double[::1] muv = mu
    cdef double[::1] invv = inv
    cdef double[::1] ogv = ggamma
    cdef double[::1] obv = gbeta
    cdef Py_ssize_t i, j
    cdef double xhat, gy, m1, m2
    with nogil:
        for i in range(n):
            m1 = 0.0
            m2 = 0.0
            for j in range(d):
                xhat = (xv[i, j] - muv[i]) * invv[i]
                gy = gv[i, j] * gamv[j]
                m1 += gy
                m2 += gy * xhat
                ogv[j] += gv[i, j] * xhat
                obv[j] += gv[i, j]
            m1 /= d
            m2 /= d
            for j in range(d):
                xhat = (xv[i, j] - muv[i]) * invv[i]
                gy = gv[i, j] * gamv[j]
                oxv[i, j] = invv[i] * (gy - m1 - xhat * m2)
    return gx, ggamma, gbeta
