"""Morse backends: critical points, trajectories, limits, the Morse complex."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ..config import DEFAULT_TOL, Tolerances, read_kv
from ..errors import MorseError
from . import f2
from .flow import BACKWARD, FORWARD, Trajectory, advance, flow_points, flow_samples, _sign
from .functions import CATALOG, catalog_function, make_function
from .manifolds import get_manifold


@dataclass(frozen=True, eq=False)
class CriticalPoint:
    id: str
    location: np.ndarray
    index: int
    value: float
    hessian_eigs: tuple = ()

    def __repr__(self):
        loc = ", ".join(f"{v:.6g}" for v in self.location)
        return f"CriticalPoint({self.id}, index={self.index}, at=({loc}))"


class MorseBackend:
    """A manifold with one Morse function from the catalog."""

    def __init__(self, manifold, function, key=None, tol: Tolerances = DEFAULT_TOL):
        self.manifold = get_manifold(manifold) if isinstance(manifold, str) else manifold
        self.function = function
        self.key = key or function.family
        self.tol = tol
        self.kernel = getattr(function, "advance", None)

    @classmethod
    def from_catalog(cls, manifold, key, tol=DEFAULT_TOL, **params):
        return cls(manifold, catalog_function(manifold, key, **params), key, tol)

    def with_tol(self, tol):
        return MorseBackend(self.manifold, self.function, self.key, tol)

    def __repr__(self):
        return f"MorseBackend({self.manifold.name}, {self.key})"

    @property
    def d(self):
        return self.manifold.dim

    def value(self, p):
        return self.function.value(p)

    def grad(self, p):
        return self.function.grad(p)

    def hess(self, p):
        return self.function.hess(p)

    # -- critical points ---------------------------------------------------------

    @cached_property
    def critical_points(self):
        return find_critical_points(self)

    def critical_point(self, cid) -> CriticalPoint:
        for c in self.critical_points:
            if c.id == cid:
                return c
        raise KeyError(f"{cid!r} is not a critical point of {self.key}")

    @property
    def critical_ids(self):
        return [c.id for c in self.critical_points]

    # -- flows ---------------------------------------------------------------------

    def flow(self, X, T, direction=FORWARD, h=None):
        return flow_points(self.manifold, self.grad, X, T, direction, h or self.tol.h, self.kernel)

    def limits(self, X, direction=FORWARD, t_max=None):
        """Critical-point id reached by each row of ``X`` (``None`` if not by ``t_max``)."""
        m = self.manifold
        tol = self.tol
        t_max = tol.t_max if t_max is None else t_max
        crit = self.critical_points
        P = np.array([c.location for c in crit])
        X = np.array(np.atleast_2d(X), dtype=float, copy=True)
        out = [None] * len(X)
        active = np.arange(len(X))
        sign = _sign(direction)
        chunk = 10
        t = 0.0
        h = tol.h
        while True:
            D = np.stack([m.distance(X[active], np.broadcast_to(p, X[active].shape)) for p in P], axis=1)
            j = np.argmin(D, axis=1)
            hit = D[np.arange(len(active)), j] < tol.eps
            for a, jj in zip(active[hit], j[hit]):
                out[a] = crit[jj].id
            active = active[~hit]
            if not len(active) or t >= t_max:
                break
            Y = advance(m, self.grad, X[active], h, chunk, sign, self.kernel)
            if not np.all(np.isfinite(Y)):
                raise MorseError("flow produced non-finite values")
            X[active] = Y
            t += chunk * h
        return out

    def limit_critical_point(self, x, direction=FORWARD):
        (cid,) = self.limits(np.atleast_2d(x), direction)
        if cid is None:
            raise MorseError(f"no convergence by T_max={self.tol.t_max}")
        return cid

    # -- invariant manifolds of saddles ------------------------------------------------

    def eigendirections(self, c: CriticalPoint):
        """Ambient unit vectors ``(unstable, stable)`` lists for the flow of -grad f."""
        E = self.manifold.frame(c.location[None, :])[0]
        w, V = np.linalg.eigh(self.hess(c.location[None, :])[0])
        unstable = [E @ V[:, i] for i in range(len(w)) if w[i] < 0]
        stable = [E @ V[:, i] for i in range(len(w)) if w[i] > 0]
        return unstable, stable

    def branch_starts(self, c: CriticalPoint, kind):
        """Points just off ``c`` along its 1-d unstable (``kind='u'``) or stable curve."""
        unstable, stable = self.eigendirections(c)
        vecs = unstable if kind == "u" else stable
        if len(vecs) != 1:
            raise MorseError(f"{c.id} has no one-dimensional {'un' if kind == 'u' else ''}stable curve")
        v = vecs[0]
        x = c.location
        off = self.tol.branch_offset
        return self.manifold.renormalize(np.array([x + off * v, x - off * v]))

    @cached_property
    def _curves(self):
        return {}

    def invariant_curve(self, cid, kind):
        """Polyline of the unstable (``'u'``) or stable (``'s'``) curve of a saddle.

        Both branches are traced with RK4 until they come within the capture
        radius of another critical point; the result runs from the end of the
        second branch through the saddle to the end of the first, as an array
        of sphere-lift/chart points (torus points are left unwrapped).
        Returns ``(curve, (end_id_first, end_id_second))``.
        """
        key = (cid, kind)
        if key not in self._curves:
            self._trace_saddles(kind)
        return self._curves[key]

    def _trace_saddles(self, kind):
        saddles = [c for c in self.critical_points if c.index == 1]
        if not saddles:
            raise MorseError("no saddles to trace")
        starts = np.vstack([self.branch_starts(c, kind) for c in saddles])
        owners = [c.id for c in saddles for _ in range(2)]
        direction = FORWARD if kind == "u" else BACKWARD
        paths, ends = self._trace(starts, direction, owners)
        for i, c in enumerate(saddles):
            first, second = paths[2 * i], paths[2 * i + 1]
            curve = np.vstack([second[::-1], c.location[None, :], first])
            self._curves[(c.id, kind)] = (curve, (ends[2 * i], ends[2 * i + 1]))

    def _trace(self, X, direction, owners):
        """Integrate rows of ``X`` until each is captured by a critical point
        other than its owner; return the sample paths and the capturing ids."""
        m, tol = self.manifold, self.tol
        sign = _sign(direction)
        crit = self.critical_points
        P = np.array([c.location for c in crit])
        own = np.array([[c.id == o for c in crit] for o in owners])
        X = np.array(X, dtype=float)
        n = len(X)
        samples = [X]
        stop = np.full(n, -1)
        ends = [None] * n
        step, chunk = 0, 10
        max_steps = int(np.ceil(tol.t_max / tol.h))
        while step < max_steps and np.any(stop < 0):
            for _ in range(chunk):
                X = advance(m, self.grad, X, tol.h, 1, sign, self.kernel)
                samples.append(X)
            step += chunk
            C = m.canonical(X)
            D = np.stack([m.distance(C, np.broadcast_to(p, C.shape)) for p in P], axis=1)
            D[own] = np.inf
            j = np.argmin(D, axis=1)
            for i in np.nonzero((stop < 0) & (D[np.arange(n), j] < tol.eps))[0]:
                stop[i] = step
                ends[i] = crit[j[i]].id
        S = np.stack(samples)
        paths = [S[: (stop[i] if stop[i] >= 0 else len(S) - 1) + 1, i] for i in range(n)]
        return paths, ends

    def trajectory(self, x0, T, direction=FORWARD):
        return integrate_trajectory(self, x0, T, direction)


def integrate_trajectory(b: MorseBackend, x0, T, direction=FORWARD, h=None) -> Trajectory:
    if T < 0:
        raise MorseError("duration must be nonnegative")
    times, S = flow_samples(b.manifold, b.grad, np.asarray(x0, dtype=float)[None, :], T, direction,
                            h or b.tol.h, b.kernel)
    pts = b.manifold.canonical(S[:, 0, :])
    return Trajectory(times, pts, b.key, direction)


def find_critical_points(b: MorseBackend):
    """Newton iteration on grad f = 0 from a uniform seed grid."""
    m, tol = b.manifold, b.tol
    X = m.grid(tol.grid)
    max_step = 0.1 if m.name == "torus" else 0.3
    for _ in range(100):
        E = m.frame(X)
        g = b.grad(X)
        gf = np.einsum("nij,ni->nj", E, g) if m.ambient == 3 else g
        H = b.hess(X)
        det = H[:, 0, 0] * H[:, 1, 1] - H[:, 0, 1] * H[:, 1, 0]
        ok = np.abs(det) > 1e-14
        step = np.zeros_like(gf)
        step[ok] = -np.linalg.solve(H[ok], gf[ok][..., None])[..., 0]
        norm = np.linalg.norm(step, axis=1)
        scale = np.minimum(1.0, max_step / np.maximum(norm, 1e-300))
        X = m.retract(X, step * scale[:, None])
        if np.all(norm < 1e-15):
            break
    g = b.grad(X)
    gn = np.linalg.norm(g, axis=1)
    X = m.canonical(X[gn < tol.grad_tol])
    # merge duplicates
    reps = []
    for x in X:
        if not any(m.distance(x[None, :], r[None, :])[0] < tol.dedup for r in reps):
            reps.append(x)
    if not reps:
        raise MorseError("no critical points found")
    P = np.array(reps)
    H = b.hess(P)
    eigs = np.linalg.eigvalsh(H)
    if np.any(np.abs(eigs) < tol.degenerate):
        raise MorseError("degenerate critical point; adjust catalog parameters")
    idx = np.sum(eigs < 0, axis=1)
    vals = b.value(P)
    order = sorted(range(len(P)), key=lambda i: (idx[i], round(vals[i], 9), *np.round(P[i], 9)))
    out = []
    count = {}
    for i in order:
        k = int(idx[i])
        n = count.get(k, 0)
        count[k] = n + 1
        out.append(CriticalPoint(f"c{k}_{n}", P[i], k, float(vals[i]), tuple(eigs[i])))
    return out


def euler_from_critical_points(points):
    return sum((-1) ** c.index for c in points)


@dataclass
class MorseComplex:
    generators: dict                    # index -> [CriticalPoint]
    counts: dict = field(default_factory=dict)     # k -> integer matrix (index k-1 rows, index k cols)

    @property
    def boundary(self):
        return {k: (np.asarray(M) % 2).astype(np.uint8) for k, M in self.counts.items()}

    def check_d_squared(self):
        bd = self.boundary
        for k in bd:
            if k + 1 in bd:
                prod = (bd[k].astype(int) @ bd[k + 1].astype(int)) % 2
                if np.any(prod):
                    return False
        return True


def morse_boundary(b: MorseBackend) -> MorseComplex:
    """Count index-difference-one trajectories by shooting along saddle separatrices.

    For a saddle s, the two branches of its unstable curve are integrated
    forward and their limits give the column of the boundary into index 0;
    the two branches of its stable curve, integrated backward, give the
    entries from the index-2 points into s.
    """
    d = b.d
    gens = {k: [c for c in b.critical_points if c.index == k] for k in range(d + 1)}
    pos = {k: {c.id: i for i, c in enumerate(gens[k])} for k in gens}
    counts = {k: np.zeros((len(gens[k - 1]), len(gens[k])), dtype=np.int64) for k in range(1, d + 1)}
    for s in gens[1]:
        for kind, target in (("u", 0), ("s", 2)):
            for cid in b.invariant_curve(s.id, kind)[1]:
                if cid is None:
                    raise MorseError(f"separatrix of {s.id} did not converge by T_max")
                c = b.critical_point(cid)
                if c.index != target:
                    raise MorseError(f"transversality failure: {s.id} connects to {cid}; perturb parameters")
                if target == 0:
                    counts[1][pos[0][cid], pos[1][s.id]] += 1
                else:
                    counts[2][pos[1][s.id], pos[2][cid]] += 1
    cx = MorseComplex(gens, counts)
    if not cx.check_d_squared():
        raise MorseError("transversality failure: boundary does not square to zero; perturb parameters")
    return cx


def homology_ranks(c: MorseComplex):
    d = max(c.generators)
    bd = c.boundary
    ranks = []
    for k in range(d + 1):
        n = len(c.generators[k])
        r_out = f2.rank(bd[k]) if k in bd else 0
        r_in = f2.rank(bd[k + 1]) if k + 1 in bd else 0
        ranks.append(n - r_out - r_in)
    return tuple(ranks)


def backend_from_config(text, tol: Tolerances = DEFAULT_TOL) -> MorseBackend:
    """Backend config: ``manifold=``, ``function=``, ``param.<name>=``, ``tol.<name>=``."""
    kv = read_kv(text)
    known = {"manifold", "function"}
    for k in kv:
        if k not in known and not k.startswith(("param.", "tol.")):
            raise MorseError(f"unknown backend config key {k!r}")
    if "manifold" not in kv:
        raise MorseError("backend config needs manifold=torus|sphere|rp2")
    man = kv["manifold"]
    if man not in CATALOG:
        raise MorseError(f"unknown manifold {man!r}")
    key = kv.get("function", next(iter(CATALOG[man])))
    params = {k[6:]: float(v) for k, v in kv.items() if k.startswith("param.")}
    tol = tol.with_overrides(**{k[4:]: v for k, v in kv.items() if k.startswith("tol.")})
    try:
        if key in CATALOG[man]:
            return MorseBackend.from_catalog(man, key, tol, **params)
        return MorseBackend(man, make_function(man, key, **params), key, tol)
    except (KeyError, ValueError) as exc:
        raise MorseError(str(exc)) from None
