"""Fixed-step RK4 for the negative gradient flow, vectorized over points."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import MorseError

FORWARD, BACKWARD = "forward", "backward"


def _sign(direction):
    if direction == FORWARD:
        return -1.0
    if direction == BACKWARD:
        return 1.0
    raise ValueError(f"direction must be {FORWARD!r} or {BACKWARD!r}")


def rk4_step(manifold, grad, X, dt, sign):
    ren = manifold.renormalize
    k1 = sign * grad(X)
    k2 = sign * grad(ren(X + 0.5 * dt * k1))
    k3 = sign * grad(ren(X + 0.5 * dt * k2))
    k4 = sign * grad(ren(X + dt * k3))
    return ren(X + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))


def advance(manifold, grad, X, dt, n, sign, kernel=None):
    """``n`` RK4 steps; ``kernel(X, dt, n, sign)`` is a compiled equivalent."""
    if kernel is not None:
        return kernel(X, dt, n, sign)
    for _ in range(n):
        X = rk4_step(manifold, grad, X, dt, sign)
    return X


def n_steps(T, h):
    return max(1, math.ceil(T / h - 1e-9)) if T > 0 else 0


def flow_points(manifold, grad, X, T, direction=FORWARD, h=1e-3, kernel=None):
    """Time-``T`` flow of every row of ``X``; returns canonical points."""
    X = np.array(X, dtype=float, copy=True)
    if X.ndim == 1:
        X = X[None, :]
    sign = _sign(direction)
    n = n_steps(T, h)
    if n:
        X = advance(manifold, grad, X, T / n, n, sign, kernel)
        if not np.all(np.isfinite(X)):
            raise MorseError("flow produced non-finite values")
    return manifold.canonical(X)


def flow_samples(manifold, grad, X, T, direction=FORWARD, h=1e-3, kernel=None):
    """Like :func:`flow_points` but returns ``(times, samples)`` with samples of
    shape ``(steps+1, n, k)`` on the sphere lift (not canonicalized)."""
    X = np.array(X, dtype=float, copy=True)
    if X.ndim == 1:
        X = X[None, :]
    sign = _sign(direction)
    n = n_steps(T, h)
    out = [X]
    if n:
        dt = T / n
        for _ in range(n):
            X = advance(manifold, grad, X, dt, 1, sign, kernel)
            out.append(X)
        if not np.all(np.isfinite(X)):
            raise MorseError("flow produced non-finite values")
    times = np.linspace(0.0, T, n + 1) if n else np.zeros(1)
    return times, np.stack(out)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    points: np.ndarray
    function: str
    direction: str

    @property
    def samples(self):
        return list(zip(self.times.tolist(), self.points))

    def to_csv(self):
        k = self.points.shape[1]
        head = "t," + ",".join(f"x{i + 1}" for i in range(k))
        rows = [head]
        for t, p in zip(self.times, self.points):
            rows.append(",".join(f"{v:.12g}" for v in (t, *p)))
        return "\n".join(rows) + "\n"
