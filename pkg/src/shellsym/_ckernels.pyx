# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled cell kernels for the weighted p-energy and q-mass.

Every cell is a cube of side h whose lower corner sits at flat index
``base[c]`` of the box array; ``s1, s2, s3`` are the flat strides of the
three axes.  Sums use Neumaier compensation and a fixed cell order, so the
result does not depend on anything but the inputs.
"""
from libc.math cimport pow, fabs

import numpy as np


cdef inline void _acc(double *s, double *c, double x) noexcept nogil:
    cdef double t = s[0] + x
    if fabs(s[0]) >= fabs(x):
        c[0] += (s[0] - t) + x
    else:
        c[0] += (x - t) + s[0]
    s[0] = t


def energy_grad(const double[::1] u, const long long[::1] base,
                long long s1, long long s2, long long s3,
                const double[::1] a11, const double[::1] a12, const double[::1] a22,
                const double[::1] w, double h, double p, double eps,
                double[::1] grad, bint want_grad):
    cdef Py_ssize_t c, nc = base.shape[0]
    cdef long long b
    cdef double u0, u1, u2, u3, u12, u13, u23, u123
    cdef double g1, g2, g3, t1, t2, t3, qf, coef
    cdef double inv4h = 0.25 / h
    cdef double half_p = 0.5 * p
    cdef double eps2 = eps * eps
    cdef double s = 0.0, comp = 0.0
    with nogil:
        for c in range(nc):
            b = base[c]
            u0 = u[b]
            u1 = u[b + s1]
            u2 = u[b + s2]
            u3 = u[b + s3]
            u12 = u[b + s1 + s2]
            u13 = u[b + s1 + s3]
            u23 = u[b + s2 + s3]
            u123 = u[b + s1 + s2 + s3]
            g1 = ((u1 - u0) + (u12 - u2) + (u13 - u3) + (u123 - u23)) * inv4h
            g2 = ((u2 - u0) + (u12 - u1) + (u23 - u3) + (u123 - u13)) * inv4h
            g3 = ((u3 - u0) + (u13 - u1) + (u23 - u2) + (u123 - u12)) * inv4h
            t1 = a11[c] * g1 + a12[c] * g2
            t2 = a12[c] * g1 + a22[c] * g2
            t3 = g3
            qf = g1 * t1 + g2 * t2 + g3 * t3 + eps2
            if qf <= 0.0:
                continue
            _acc(&s, &comp, w[c] * pow(qf, half_p))
            if want_grad:
                coef = w[c] * p * pow(qf, half_p - 1.0) * inv4h
                t1 = coef * t1
                t2 = coef * t2
                t3 = coef * t3
                grad[b] += -t1 - t2 - t3
                grad[b + s1] += t1 - t2 - t3
                grad[b + s2] += -t1 + t2 - t3
                grad[b + s3] += -t1 - t2 + t3
                grad[b + s1 + s2] += t1 + t2 - t3
                grad[b + s1 + s3] += t1 - t2 + t3
                grad[b + s2 + s3] += -t1 + t2 + t3
                grad[b + s1 + s2 + s3] += t1 + t2 + t3
    return s + comp


def mass_grad(const double[::1] u, const long long[::1] base,
              long long s1, long long s2, long long s3,
              const double[::1] w, double q, double[::1] grad, bint want_grad):
    cdef Py_ssize_t c, nc = base.shape[0]
    cdef long long b
    cdef double ub, a, coef
    cdef double s = 0.0, comp = 0.0
    with nogil:
        for c in range(nc):
            b = base[c]
            ub = 0.125 * (u[b] + u[b + s1] + u[b + s2] + u[b + s3]
                          + u[b + s1 + s2] + u[b + s1 + s3] + u[b + s2 + s3]
                          + u[b + s1 + s2 + s3])
            a = fabs(ub)
            if a == 0.0:
                continue
            _acc(&s, &comp, w[c] * pow(a, q))
            if want_grad:
                coef = 0.125 * w[c] * q * pow(a, q - 1.0)
                if ub < 0.0:
                    coef = -coef
                grad[b] += coef
                grad[b + s1] += coef
                grad[b + s2] += coef
                grad[b + s3] += coef
                grad[b + s1 + s2] += coef
                grad[b + s1 + s3] += coef
                grad[b + s2 + s3] += coef
                grad[b + s1 + s2 + s3] += coef
    return s + comp
