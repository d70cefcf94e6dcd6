"""Closed surfaces in the catalog and their chart arithmetic.

Points are stored as rows of an ``(n, k)`` array: torus points as
coordinates mod 1 (k=2), sphere and RP^2 points as unit 3-vectors.  RP^2
points carry the canonical sign (first nonzero coordinate positive); flows
on RP^2 run on the sphere lift.
"""

from __future__ import annotations

import numpy as np

DIM = 2


def _wrap(d):
    """Wrap to (-1/2, 1/2]."""
    return -np.remainder(-d + 0.5, 1.0) + 0.5


class Torus:
    name = "torus"
    dim = DIM
    ambient = 2
    euler = 0

    def normalize(self, p):
        return np.remainder(p, 1.0)

    def renormalize(self, p):
        return p

    canonical = normalize

    def frame(self, p):
        p = np.atleast_2d(p)
        e = np.zeros((len(p), 2, 2))
        e[:, 0, 0] = e[:, 1, 1] = 1.0
        return e

    def retract(self, p, v):
        """Move from ``p`` by frame coordinates ``v``."""
        return self.normalize(p + v)

    def chartdiff(self, p, q):
        """Frame coordinates at ``p`` of the short displacement to ``q``."""
        return _wrap(np.asarray(q) - np.asarray(p))

    def distance(self, p, q):
        return np.linalg.norm(self.chartdiff(p, q), axis=-1)

    def grid(self, n):
        s = (np.arange(n) + 0.5) / n
        x, y = np.meshgrid(s, s, indexing="ij")
        return np.column_stack([x.ravel(), y.ravel()])

    def random(self, n, rng):
        return rng.random((n, 2))

    def chart2d(self, p):
        return np.asarray(p)


class Sphere:
    name = "sphere"
    dim = DIM
    ambient = 3
    euler = 2

    def normalize(self, p):
        p = np.asarray(p, dtype=float)
        return p / np.linalg.norm(p, axis=-1, keepdims=True)

    renormalize = normalize
    canonical = normalize

    def frame(self, p):
        """Orthonormal tangent frame, shape ``(n, 3, 2)``.

        Built from the coordinate axis least aligned with each point, so it is
        smooth away from the switching set.
        """
        p = np.atleast_2d(p)
        k = np.argmin(np.abs(p), axis=1)
        a = np.zeros_like(p)
        a[np.arange(len(p)), k] = 1.0
        e1 = a - np.sum(a * p, axis=1, keepdims=True) * p
        e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
        e2 = np.cross(p, e1)
        return np.stack([e1, e2], axis=2)

    def retract(self, p, v):
        p = np.atleast_2d(p)
        return self.canonical(p + np.einsum("nij,nj->ni", self.frame(p), v))

    def _align(self, p, q):
        return q

    def log(self, p, q):
        """Logarithm map at ``p`` as an ambient tangent vector."""
        p = np.atleast_2d(p)
        q = self._align(p, np.atleast_2d(q))
        c = np.clip(np.sum(p * q, axis=1), -1.0, 1.0)
        w = q - c[:, None] * p
        nw = np.linalg.norm(w, axis=1)
        theta = np.arccos(c)
        scale = np.where(nw > 1e-300, theta / np.maximum(nw, 1e-300), 1.0)
        return w * scale[:, None]

    def chartdiff(self, p, q):
        p = np.atleast_2d(p)
        return np.einsum("nij,ni->nj", self.frame(p), self.log(p, q))

    def distance(self, p, q):
        p, q = np.atleast_2d(p), np.atleast_2d(q)
        q = self._align(p, q)
        return np.arccos(np.clip(np.sum(p * q, axis=1), -1.0, 1.0))

    def grid(self, n):
        """Cube-map grid: ``n x n`` samples on each of the six faces."""
        s = (np.arange(n) + 0.5) / n * 2 - 1
        u, v = np.meshgrid(s, s, indexing="ij")
        u, v = u.ravel(), v.ravel()
        one = np.ones_like(u)
        faces = []
        for axis in range(3):
            for sign in (1.0, -1.0):
                f = np.empty((len(u), 3))
                f[:, axis] = sign * one
                f[:, (axis + 1) % 3] = u
                f[:, (axis + 2) % 3] = v
                faces.append(f)
        return self.canonical(np.vstack(faces))

    def random(self, n, rng):
        return self.canonical(rng.normal(size=(n, 3)))

    def chart2d(self, p):
        p = np.atleast_2d(p)
        return np.column_stack([np.arctan2(p[:, 1], p[:, 0]), np.arcsin(np.clip(p[:, 2], -1, 1))])


class RP2(Sphere):
    name = "rp2"
    euler = 1

    def canonical(self, p):
        p = Sphere.normalize(self, p)
        p = np.atleast_2d(p)
        sign = np.ones(len(p))
        for k in (2, 1, 0):
            nz = np.abs(p[:, k]) > 1e-15
            sign = np.where(nz, np.sign(p[:, k]), sign)
        # first nonzero coordinate decides: scan from the last so x wins
        return p * sign[:, None]

    normalize = Sphere.normalize

    def _align(self, p, q):
        s = np.where(np.sum(p * q, axis=1) < 0, -1.0, 1.0)
        return q * s[:, None]

    def grid(self, n):
        g = Sphere.grid(self, n)
        return g[g[:, 0] > 0]


MANIFOLDS = {"torus": Torus, "sphere": Sphere, "rp2": RP2}


def get_manifold(name):
    try:
        return MANIFOLDS[name]()
    except KeyError:
        raise ValueError(f"unknown manifold {name!r}; choose from {sorted(MANIFOLDS)}") from None
