"""Pure numpy versions of the cell kernels (same signatures as the compiled ones)."""
from __future__ import annotations

import math

import numpy as np

# sign pattern of d(g1, g2, g3)/d(corner) * 4h for the eight corners, in the
# order 0, s1, s2, s3, s1+s2, s1+s3, s2+s3, s1+s2+s3
_SIGNS = np.array(
    [
        [-1, -1, -1],
        [1, -1, -1],
        [-1, 1, -1],
        [-1, -1, 1],
        [1, 1, -1],
        [1, -1, 1],
        [-1, 1, 1],
        [1, 1, 1],
    ],
    dtype=float,
)


def _offsets(s1: int, s2: int, s3: int) -> np.ndarray:
    return np.array([0, s1, s2, s3, s1 + s2, s1 + s3, s2 + s3, s1 + s2 + s3], dtype=np.int64)


def energy_grad(u, base, s1, s2, s3, a11, a12, a22, w, h, p, eps, grad, want_grad):
    u = np.asarray(u)
    idx = base[None, :] + _offsets(s1, s2, s3)[:, None]
    vals = u[idx]
    g = (_SIGNS.T @ vals) * (0.25 / h)
    t1 = a11 * g[0] + a12 * g[1]
    t2 = a12 * g[0] + a22 * g[1]
    t3 = g[2]
    qf = g[0] * t1 + g[1] * t2 + g[2] * t3 + eps * eps
    live = qf > 0.0
    dens = np.zeros_like(qf)
    dens[live] = w[live] * qf[live] ** (0.5 * p)
    if want_grad:
        coef = np.zeros_like(qf)
        coef[live] = w[live] * p * qf[live] ** (0.5 * p - 1.0) * (0.25 / h)
        t = np.vstack([coef * t1, coef * t2, coef * t3])
        contrib = _SIGNS @ t
        n = grad.shape[0]
        for j in range(8):
            grad += np.bincount(idx[j], weights=contrib[j], minlength=n)
    return math.fsum(dens)


def mass_grad(u, base, s1, s2, s3, w, q, grad, want_grad):
    u = np.asarray(u)
    idx = base[None, :] + _offsets(s1, s2, s3)[:, None]
    ub = u[idx].mean(axis=0)
    a = np.abs(ub)
    dens = w * a**q
    if want_grad:
        live = a > 0.0
        coef = np.zeros_like(a)
        coef[live] = 0.125 * w[live] * q * a[live] ** (q - 1.0) * np.sign(ub[live])
        n = grad.shape[0]
        for j in range(8):
            grad += np.bincount(idx[j], weights=coef, minlength=n)
    return math.fsum(dens)
