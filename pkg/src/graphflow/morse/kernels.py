"""Compiled RK4 loops for the catalog families.

Each kernel advances every row of ``X`` by ``n`` steps of size ``dt`` along
``sign * grad f`` and matches :func:`flow.rk4_step` step for step.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi


@njit(cache=True, nogil=True)
def _torus_grad(x, y, amp, shift, hc, hphase, harm, out):
    u = TWO_PI * (x - shift[0])
    v = TWO_PI * (y - shift[1])
    gx = -TWO_PI * amp[0] * math.sin(u)
    gy = -TWO_PI * amp[1] * math.sin(v)
    for k in range(hc.shape[0]):
        if hc[k] != 0.0:
            s = math.sin(TWO_PI * (x * harm[k, 0] + y * harm[k, 1]) + hphase[k]) * hc[k]
            gx -= TWO_PI * s * harm[k, 0]
            gy -= TWO_PI * s * harm[k, 1]
    out[0] = gx
    out[1] = gy


@njit(cache=True, nogil=True)
def torus_rk4(X, dt, n, sign, amp, shift, hc, hphase, harm):
    Y = X.copy()
    k1 = np.empty(2)
    k2 = np.empty(2)
    k3 = np.empty(2)
    k4 = np.empty(2)
    for i in range(Y.shape[0]):
        x = Y[i, 0]
        y = Y[i, 1]
        for _ in range(n):
            _torus_grad(x, y, amp, shift, hc, hphase, harm, k1)
            _torus_grad(x + 0.5 * dt * sign * k1[0], y + 0.5 * dt * sign * k1[1], amp, shift, hc, hphase, harm, k2)
            _torus_grad(x + 0.5 * dt * sign * k2[0], y + 0.5 * dt * sign * k2[1], amp, shift, hc, hphase, harm, k3)
            _torus_grad(x + dt * sign * k3[0], y + dt * sign * k3[1], amp, shift, hc, hphase, harm, k4)
            x += dt / 6.0 * sign * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            y += dt / 6.0 * sign * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        Y[i, 0] = x
        Y[i, 1] = y
    return Y


@njit(cache=True, nogil=True)
def _quad_grad(p, A, w, out):
    # tangential part of 2 A p + w
    g0 = 2.0 * (A[0, 0] * p[0] + A[0, 1] * p[1] + A[0, 2] * p[2]) + w[0]
    g1 = 2.0 * (A[1, 0] * p[0] + A[1, 1] * p[1] + A[1, 2] * p[2]) + w[1]
    g2 = 2.0 * (A[2, 0] * p[0] + A[2, 1] * p[1] + A[2, 2] * p[2]) + w[2]
    r = g0 * p[0] + g1 * p[1] + g2 * p[2]
    out[0] = g0 - r * p[0]
    out[1] = g1 - r * p[1]
    out[2] = g2 - r * p[2]


@njit(cache=True, nogil=True)
def _unit(q):
    s = math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2])
    q[0] /= s
    q[1] /= s
    q[2] /= s


@njit(cache=True, nogil=True)
def quadric_rk4(X, dt, n, sign, A, w):
    Y = X.copy()
    p = np.empty(3)
    q = np.empty(3)
    k1 = np.empty(3)
    k2 = np.empty(3)
    k3 = np.empty(3)
    k4 = np.empty(3)
    for i in range(Y.shape[0]):
        for j in range(3):
            p[j] = Y[i, j]
        for _ in range(n):
            _quad_grad(p, A, w, k1)
            for j in range(3):
                q[j] = p[j] + 0.5 * dt * sign * k1[j]
            _unit(q)
            _quad_grad(q, A, w, k2)
            for j in range(3):
                q[j] = p[j] + 0.5 * dt * sign * k2[j]
            _unit(q)
            _quad_grad(q, A, w, k3)
            for j in range(3):
                q[j] = p[j] + dt * sign * k3[j]
            _unit(q)
            _quad_grad(q, A, w, k4)
            for j in range(3):
                p[j] = p[j] + dt / 6.0 * sign * (k1[j] + 2 * k2[j] + 2 * k3[j] + k4[j])
            _unit(p)
        for j in range(3):
            Y[i, j] = p[j]
    return Y
