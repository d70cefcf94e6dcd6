"""Morse-function catalog with analytic gradients and Hessians.

Gradients are Riemannian (ambient tangent vectors); Hessians are returned in
the manifold's tangent frame, shape ``(n, 2, 2)``.
"""

from __future__ import annotations

import math

import numpy as np

from . import kernels
from .manifolds import get_manifold

TWO_PI = 2.0 * math.pi

_HARMONICS = np.array([[1, 0], [0, 1], [1, 1], [1, -1], [2, 1], [1, 2]], dtype=float)


class MorseFunction:
    family = "?"

    def __init__(self, manifold, params):
        self.manifold = manifold
        self.params = dict(params)

    def __repr__(self):
        ps = ", ".join(f"{k}={v:g}" for k, v in sorted(self.params.items()))
        return f"{type(self).__name__}({self.manifold.name}: {ps})"


class TorusCos(MorseFunction):
    """``a cos 2pi(x-sx) + b cos 2pi(y-sy)`` plus an optional harmonic perturbation."""

    family = "cos"
    defaults = dict(a=1.0, b=1.0, sx=0.0, sy=0.0, delta=0.0, seed=0.0)

    def __init__(self, manifold, params):
        p = dict(self.defaults, **params)
        super().__init__(manifold, p)
        self.amp = np.array([p["a"], p["b"]], dtype=float)
        self.shift = np.array([p["sx"], p["sy"]], dtype=float)
        rng = np.random.default_rng(int(p["seed"]))
        self.hc = p["delta"] * rng.normal(size=len(_HARMONICS))
        self.hphase = rng.uniform(0, TWO_PI, size=len(_HARMONICS))

    def _harm(self, p):
        return TWO_PI * p @ _HARMONICS.T + self.hphase

    def value(self, p):
        p = np.atleast_2d(p)
        u = TWO_PI * (p - self.shift)
        v = np.cos(u) @ self.amp
        if self.params["delta"]:
            v = v + np.cos(self._harm(p)) @ self.hc
        return v

    def grad(self, p):
        p = np.atleast_2d(p)
        u = TWO_PI * (p - self.shift)
        g = -TWO_PI * self.amp * np.sin(u)
        if self.params["delta"]:
            g = g - TWO_PI * (np.sin(self._harm(p)) * self.hc) @ _HARMONICS
        return g

    def advance(self, X, dt, n, sign):
        """``n`` RK4 steps of ``sign * grad`` (compiled)."""
        return kernels.torus_rk4(np.ascontiguousarray(X, dtype=float), dt, n, sign, self.amp,
                                 self.shift, self.hc, self.hphase, _HARMONICS)

    def hess(self, p):
        p = np.atleast_2d(p)
        u = TWO_PI * (p - self.shift)
        h = np.zeros((len(p), 2, 2))
        c = -(TWO_PI ** 2) * self.amp * np.cos(u)
        h[:, 0, 0] = c[:, 0]
        h[:, 1, 1] = c[:, 1]
        if self.params["delta"]:
            w = -(TWO_PI ** 2) * np.cos(self._harm(p)) * self.hc
            h = h + np.einsum("nk,ki,kj->nij", w, _HARMONICS, _HARMONICS)
        return h


def _rotation(rx, ry, rz):
    cx, sx, cy, sy, cz, sz = math.cos(rx), math.sin(rx), math.cos(ry), math.sin(ry), math.cos(rz), math.sin(rz)
    rxm = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    rym = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rzm = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rzm @ rym @ rxm


class SphereQuadric(MorseFunction):
    """``p.A.p + w.p`` restricted to the unit sphere.

    Families: ``height`` (A = 0, w = scale * n) and ``quadric``
    (A = R diag(a, b, c) R^T rotated by Euler angles).  On RP^2 only even
    terms are allowed.
    """

    def __init__(self, manifold, params, family):
        self.family = family
        if family == "height":
            p = dict(dict(nx=0.0, ny=0.0, nz=1.0, scale=1.0, delta=0.0, seed=0.0), **params)
            n = np.array([p["nx"], p["ny"], p["nz"]], dtype=float)
            n /= np.linalg.norm(n)
            A = np.zeros((3, 3))
            w = p["scale"] * n
        else:
            p = dict(dict(a=1.0, b=2.0, c=3.0, rx=0.0, ry=0.0, rz=0.0, delta=0.0, seed=0.0), **params)
            R = _rotation(p["rx"], p["ry"], p["rz"])
            A = R @ np.diag([p["a"], p["b"], p["c"]]) @ R.T
            w = np.zeros(3)
        super().__init__(manifold, p)
        if p["delta"]:
            rng = np.random.default_rng(int(p["seed"]))
            Q = rng.normal(size=(3, 3))
            A = A + p["delta"] * (Q + Q.T) / 2
            if manifold.name != "rp2":
                w = w + p["delta"] * rng.normal(size=3)
        if manifold.name == "rp2" and np.any(w):
            raise ValueError("functions on rp2 must be antipodally symmetric")
        self.A, self.w = A, w

    def value(self, p):
        p = np.atleast_2d(p)
        return np.einsum("ni,ij,nj->n", p, self.A, p) + p @ self.w

    def _ambient_grad(self, p):
        return 2.0 * p @ self.A + self.w

    def grad(self, p):
        p = np.atleast_2d(p)
        g = self._ambient_grad(p)
        return g - np.sum(g * p, axis=1, keepdims=True) * p

    def advance(self, X, dt, n, sign):
        return kernels.quadric_rk4(np.ascontiguousarray(X, dtype=float), dt, n, sign,
                                   np.ascontiguousarray(self.A), self.w)

    def hess(self, p):
        p = np.atleast_2d(p)
        E = self.manifold.frame(p)
        radial = np.sum(self._ambient_grad(p) * p, axis=1)
        h = 2.0 * np.einsum("nia,ij,njb->nab", E, self.A, E)
        return h - radial[:, None, None] * np.eye(2)


FAMILIES = {
    "torus": {"cos": lambda m, p: TorusCos(m, p)},
    "sphere": {"height": lambda m, p: SphereQuadric(m, p, "height"),
               "quadric": lambda m, p: SphereQuadric(m, p, "quadric")},
    "rp2": {"quadric": lambda m, p: SphereQuadric(m, p, "quadric")},
}

# Named instances usable as edge labels.  Parameters are chosen so that
# stable/unstable manifolds of distinct entries meet transversally.
CATALOG = {
    "torus": {
        "torus.cos": ("cos", {}),
        "t1": ("cos", dict(a=0.08, b=0.07, sx=0.05, sy=0.11)),
        "t2": ("cos", dict(a=0.07, b=0.09, sx=0.31, sy=0.23)),
        "t3": ("cos", dict(a=0.09, b=0.06, sx=0.57, sy=0.71)),
        "t4": ("cos", dict(a=0.06, b=0.08, sx=0.83, sy=0.43)),
        "t5": ("cos", dict(a=0.075, b=0.085, sx=0.19, sy=0.89)),
        "t6": ("cos", dict(a=0.085, b=0.065, sx=0.67, sy=0.37)),
    },
    "sphere": {
        "sphere.height": ("height", {}),
        "s1": ("height", dict(nx=0.1, ny=0.2, nz=1.0)),
        "s2": ("height", dict(nx=0.9, ny=-0.3, nz=0.2)),
        "s3": ("height", dict(nx=-0.4, ny=0.8, nz=-0.3)),
        "s4": ("height", dict(nx=-0.5, ny=-0.6, nz=0.55)),
        "s5": ("height", dict(nx=0.3, ny=0.7, nz=0.6)),
        "s6": ("height", dict(nx=-0.8, ny=0.1, nz=-0.5)),
    },
    "rp2": {
        "rp2.quadric": ("quadric", {}),
        "p1": ("quadric", dict(a=0.0, b=0.4, c=1.0, rx=0.3, ry=0.1, rz=0.2)),
        "p2": ("quadric", dict(a=0.0, b=0.5, c=0.9, rx=1.1, ry=-0.4, rz=0.7)),
        "p3": ("quadric", dict(a=0.0, b=0.45, c=1.1, rx=-0.6, ry=0.9, rz=-1.2)),
        "p4": ("quadric", dict(a=0.0, b=0.35, c=0.95, rx=2.0, ry=0.5, rz=1.6)),
        "p5": ("quadric", dict(a=0.0, b=0.55, c=1.05, rx=-1.4, ry=-1.0, rz=0.4)),
        "p6": ("quadric", dict(a=0.0, b=0.6, c=1.2, rx=0.8, ry=1.3, rz=-0.5)),
    },
}


def make_function(manifold, family, **params):
    m = get_manifold(manifold) if isinstance(manifold, str) else manifold
    try:
        factory = FAMILIES[m.name][family]
    except KeyError:
        raise ValueError(f"no function family {family!r} on {m.name}") from None
    return factory(m, {k: float(v) for k, v in params.items()})


def catalog_function(manifold, key, **overrides):
    m = get_manifold(manifold) if isinstance(manifold, str) else manifold
    entries = CATALOG[m.name]
    if key not in entries:
        raise KeyError(f"unknown catalog key {key!r} for {m.name}")
    family, params = entries[key]
    return make_function(m, family, **dict(params, **overrides))
