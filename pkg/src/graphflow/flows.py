"""Graph flows on a labeled metric graph.

The unknown is the value ``x`` at the basepoint.  Values at the other vertices
come from flowing along a spanning tree; every non-tree edge contributes a
closure residual, and constrained leaves contribute the distance from the
attaching vertex's value to the prescribed stable or unstable manifold.  Roots
are found by damped Newton from a grid of seeds.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.spatial import cKDTree

from .config import DEFAULT_TOL, Tolerances
from .errors import SolverError, StructureError
from .graphs import GraphMorphism, OrientedGraph, compute_automorphisms
from .metric import MetricStructure
from .morse.backend import MorseBackend, integrate_trajectory
from .morse.flow import BACKWARD, FORWARD, _sign, advance, n_steps
from .morse.functions import CATALOG
from .morse.manifolds import Sphere, _wrap

_BACKENDS: dict = {}


def catalog_backend(manifold, key, tol: Tolerances = DEFAULT_TOL) -> MorseBackend:
    """Shared backend per (manifold, key, tolerances); critical points and
    separatrices are computed once per process."""
    k = (manifold, key, tol)
    if k not in _BACKENDS:
        if key not in CATALOG.get(manifold, {}):
            raise StructureError(f"unknown catalog key {key!r} on {manifold}")
        _BACKENDS[k] = MorseBackend.from_catalog(manifold, key, tol)
    return _BACKENDS[k]


class Structure:
    """A metric structure with a Morse backend for each label."""

    def __init__(self, metric: MetricStructure, backends: Mapping[str, MorseBackend]):
        self.metric = metric
        self.backends = dict(backends)
        names = {b.manifold.name for b in self.backends.values()}
        if len(names) != 1:
            raise StructureError("labels must name functions on one manifold")
        self.manifold = next(iter(self.backends.values())).manifold
        for e in metric.graph.edges:
            lab = metric.labels.get(e.id)
            if lab is None:
                if not metric.is_half_infinite(e.id) and metric.lengths[e.id] > 0:
                    raise StructureError(f"edge {e.id} has no label")
            elif lab not in self.backends:
                raise StructureError(f"no backend for label {lab!r}")

    @classmethod
    def from_catalog(cls, metric: MetricStructure, manifold, tol: Tolerances = DEFAULT_TOL):
        keys = sorted(set(metric.labels.values()))
        if not keys:
            raise StructureError("structure has no labels")
        return cls(metric, {k: catalog_backend(manifold, k, tol) for k in keys})

    @property
    def graph(self) -> OrientedGraph:
        return self.metric.graph

    @property
    def d(self):
        return self.manifold.dim

    @property
    def tol(self) -> Tolerances:
        return next(iter(self.backends.values())).tol

    def backend(self, eid) -> MorseBackend:
        try:
            return self.backends[self.metric.labels[eid]]
        except KeyError:
            raise StructureError(f"edge {eid} has no label") from None

    def length(self, eid):
        return self.metric.length(eid)

    def permuted(self, aut: GraphMorphism) -> "Structure":
        """Transport lengths and labels along an automorphism."""
        em = aut.edge_map
        lengths = {em[e]: v for e, v in self.metric.lengths.items()}
        labels = {em[e]: k for e, k in self.metric.labels.items()}
        return Structure(MetricStructure(self.graph, lengths, labels), self.backends)


def _lift(m):
    """Manifold used for the Newton unknown: RP^2 iterates live on the sphere
    lift so that nothing jumps when the canonical sign flips."""
    return Sphere() if m.name == "rp2" else m


def _flow(b: MorseBackend, X, T, direction):
    """Time-``T`` flow without canonicalizing (sphere lift, unwrapped torus)."""
    if T == 0:
        return X
    n = n_steps(T, b.tol.h)
    return advance(b.manifold, b.grad, X, T / n, n, _sign(direction), b.kernel)


# -- spanning tree ---------------------------------------------------------------


@dataclass(frozen=True)
class CycleData:
    tree_edges: tuple
    cycle_edges: tuple  # (edge id, source v0, target v1)


def cycle_data(s: Structure | MetricStructure) -> CycleData:
    """Kruskal on the internal edges, zero-length edges first, then by id."""
    ms = s.metric if isinstance(s, Structure) else s
    g = ms.graph
    parent = {v: v for v in g.vertices}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    internal = [e for e in g.edges if e.id not in g.leaf_edges]
    internal.sort(key=lambda e: (ms.lengths[e.id] > 0, e.id))
    tree, cyc = [], []
    for e in internal:
        a, b = find(e.src), find(e.dst)
        if a == b:
            cyc.append((e.id, e.src, e.dst))
        else:
            parent[a] = b
            tree.append(e.id)
    return CycleData(tuple(sorted(tree)), tuple(sorted(cyc)))


def _tree_plan(s: Structure, cd: CycleData):
    """BFS order over the tree: ``(edge id, from, to, direction)``."""
    g = s.graph
    tree = set(cd.tree_edges)
    seen = {g.basepoint}
    plan = []
    queue = deque([g.basepoint])
    while queue:
        v = queue.popleft()
        for e in g.incident(v):
            if e.id not in tree:
                continue
            w, direction = (e.dst, FORWARD) if e.src == v else (e.src, BACKWARD)
            if w in seen:
                continue
            seen.add(w)
            plan.append((e.id, v, w, direction))
            queue.append(w)
    missing = set(g.vertices) - set(g.leaves) - seen
    if missing:
        raise SolverError(f"undetermined vertex {sorted(missing)[0]}")
    return plan


def _propagate(s: Structure, X, plan):
    vals = {s.graph.basepoint: X}
    for eid, v, w, direction in plan:
        T = s.length(eid)
        vals[w] = vals[v] if T == 0 else _flow(s.backend(eid), vals[v], T, direction)
    return vals


def _cycle_residual(s: Structure, vals, cd: CycleData):
    out = []
    m = s.manifold
    for eid, v0, v1 in cd.cycle_edges:
        T = s.length(eid)
        a = vals[v0] if T == 0 else _flow(s.backend(eid), vals[v0], T, FORWARD)
        out.append(m.chartdiff(vals[v1], a))
    n = len(next(iter(vals.values())))
    return np.hstack(out) if out else np.zeros((n, 0))


# -- flows -----------------------------------------------------------------------------


@dataclass(eq=False)
class GraphFlow:
    """A flow on the whole graph, determined by its basepoint value."""

    structure: Structure
    x: np.ndarray
    vertex_values: dict
    residual: float
    limits: dict = field(default_factory=dict)
    leaf_window: float = 1.0

    def edge_path(self, eid):
        s = self.structure
        g = s.graph
        e = g.edge(eid)
        if s.metric.is_half_infinite(eid):
            T = self.leaf_window
        else:
            T = s.length(eid)
        return integrate_trajectory(s.backend(eid), self.vertex_values[e.src], T, FORWARD)

    @property
    def edge_paths(self):
        s = self.structure
        return {e.id: self.edge_path(e.id) for e in s.graph.edges if e.id in s.metric.labels}


def _leaf_values(s: Structure, vals, window):
    g = s.graph
    out = {}
    for leaf in g.leaves:
        e = g.leaf_edge(leaf)
        if e.id not in s.metric.labels:
            continue
        if e.dst == leaf:
            out[leaf] = _flow(s.backend(e.id), vals[e.src], window, FORWARD)
        else:
            out[leaf] = _flow(s.backend(e.id), vals[e.dst], window, BACKWARD)
    return out


def propagate_tree_flow(s: Structure, x, leaf_window=1.0) -> GraphFlow:
    """Flow determined by ``x`` along the spanning tree.

    Leaf vertices are given the value at distance ``leaf_window`` along their
    half-infinite edge.  ``residual`` is the norm of the cycle residual.
    """
    m = s.manifold
    X = np.atleast_2d(np.asarray(x, dtype=float))
    cd = cycle_data(s)
    vals = _propagate(s, X, _tree_plan(s, cd))
    r = _cycle_residual(s, vals, cd)
    vals.update(_leaf_values(s, vals, leaf_window))
    values = {v: m.canonical(p)[0] for v, p in vals.items()}
    return GraphFlow(s, m.canonical(X)[0], values, float(np.linalg.norm(r)), leaf_window=leaf_window)


def cycle_residual(s: Structure, x):
    """Stacked closure defects of the non-tree edges, length ``b1 * d``."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    cd = cycle_data(s)
    vals = _propagate(s, X, _tree_plan(s, cd))
    return _cycle_residual(s, vals, cd)[0]


# -- leaf constraints --------------------------------------------------------------------


class _Curve:
    """Signed distance to a saddle's stable or unstable curve."""

    def __init__(self, manifold, curve):
        self.torus = manifold.name == "torus"
        pts = np.asarray(curve, dtype=float)
        L = len(pts)
        if manifold.name == "rp2":
            pts = np.vstack([pts, -pts])
        self.pts, self.L = pts, L
        if self.torus:
            self.tree = cKDTree(np.remainder(pts, 1.0), boxsize=1.0)
        else:
            self.tree = cKDTree(pts)

    def __call__(self, Q):
        if self.torus:
            _, i = self.tree.query(np.remainder(Q, 1.0))
        else:
            _, i = self.tree.query(Q / np.linalg.norm(Q, axis=1, keepdims=True))
        best_d = np.full(len(Q), np.inf)
        best_v = np.zeros(len(Q))
        for a, b, ok in ((i - 1, i, i % self.L != 0), (i, i + 1, i % self.L != self.L - 1)):
            a, b = np.where(ok, a, i), np.where(ok, b, i)
            A, B = self.pts[a], self.pts[b]
            t = B - A
            w = _wrap(Q - A) if self.torus else Q - A
            tt = np.maximum(np.sum(t * t, axis=1), 1e-300)
            u = np.clip(np.sum(w * t, axis=1) / tt, 0.0, 1.0)
            diff = w - u[:, None] * t
            if self.torus:
                nrm = np.column_stack([-t[:, 1], t[:, 0]])
            else:
                nrm = np.cross(A, t)
            nrm /= np.maximum(np.linalg.norm(nrm, axis=1, keepdims=True), 1e-300)
            dist = np.linalg.norm(diff, axis=1)
            val = np.sum(diff * nrm, axis=1)
            better = ok & (dist < best_d)
            best_d = np.where(better, dist, best_d)
            best_v = np.where(better, val, best_v)
        return best_v[:, None]


@dataclass(eq=False)
class LeafConstraint:
    """Leaf ``leaf`` must reach critical point ``cid`` of its edge function:
    incoming leaves lie on its unstable manifold, outgoing on its stable one."""

    leaf: str
    cid: str
    incoming: bool
    vertex: str
    backend: MorseBackend

    def __post_init__(self):
        c = self.backend.critical_point(self.cid)
        d = self.backend.d
        dim = c.index if self.incoming else d - c.index
        self.kind = "point" if dim == 0 else "open" if dim == d else "curve"
        self.codim = d - dim
        self.direction = BACKWARD if self.incoming else FORWARD
        self._point = c.location
        self._curve = None
        if self.kind == "curve":
            curve, _ = self.backend.invariant_curve(self.cid, "u" if self.incoming else "s")
            self._curve = _Curve(self.backend.manifold, curve)

    @property
    def equations(self):
        return 0 if self.kind == "open" else 1 if self.kind == "curve" else self.backend.d

    def residual(self, Q):
        if self.kind == "point":
            P = np.broadcast_to(self._point, Q.shape)
            return self.backend.manifold.chartdiff(P, Q)
        if self.kind == "curve":
            return self._curve(Q)
        return np.zeros((len(Q), 0))


def leaf_constraints(s: Structure, constraints: Mapping[str, str]):
    g = s.graph
    out = []
    for leaf, cid in sorted(constraints.items()):
        if leaf not in g.leaves:
            raise StructureError(f"constraint on {leaf!r}, which is not a leaf")
        e = g.leaf_edge(leaf)
        incoming = e.src == leaf
        try:
            out.append(LeafConstraint(leaf, cid, incoming, e.dst if incoming else e.src, s.backend(e.id)))
        except KeyError as exc:
            raise StructureError(str(exc.args[0])) from None
    return out


# -- solver ---------------------------------------------------------------------------------


class _System:
    """Residual map ``F: M^n -> R^{n x m}`` for a structure with constraints."""

    def __init__(self, s: Structure, constraints):
        self.s = s
        self.cd = cycle_data(s)
        self.plan = _tree_plan(s, self.cd)
        self.cons = leaf_constraints(s, constraints)
        self.m = len(self.cd.cycle_edges) * s.d + sum(c.equations for c in self.cons)

    def values(self, X):
        return _propagate(self.s, X, self.plan)

    def __call__(self, X):
        vals = self.values(X)
        parts = [_cycle_residual(self.s, vals, self.cd)]
        parts += [c.residual(vals[c.vertex]) for c in self.cons]
        return np.hstack(parts)

    def jacobian(self, X, lift, step):
        d = self.s.d
        n = len(X)
        pts = [X]
        for j in range(d):
            v = np.zeros((n, d))
            v[:, j] = step
            pts += [lift.retract(X, v), lift.retract(X, -v)]
        R = self(np.vstack(pts)).reshape(2 * d + 1, n, self.m)
        J = np.stack([(R[1 + 2 * j] - R[2 + 2 * j]) / (2 * step) for j in range(d)], axis=2)
        return R[0], J

    def limits_ok(self, X):
        """Leaf limits at each row of ``X``; ``ok`` where all match."""
        vals = self.values(X)
        ok = np.ones(len(X), dtype=bool)
        lims = [dict() for _ in range(len(X))]
        for c in self.cons:
            got = c.backend.limits(vals[c.vertex], c.direction)
            for i, cid in enumerate(got):
                lims[i][c.leaf] = cid
                ok[i] &= cid == c.cid
        return ok, lims


def _newton(F: _System, X, m, tol: Tolerances, max_step):
    """Damped Gauss-Newton on every row of ``X``.

    Rows that settle onto the same point as a lower-indexed row are merged
    into it (their residual becomes ``inf``); returns ``(X, res, merged)``.
    """
    lift = _lift(m)
    n = len(X)
    res = np.linalg.norm(F(X), axis=1)
    live = np.ones(n, dtype=bool)
    alive = np.ones(n, dtype=bool)
    merged = 0
    for _ in range(tol.newton_maxiter):
        act = np.nonzero(live & alive & (res > 1e-13))[0]
        if not len(act):
            break
        R, J = F.jacobian(X[act], lift, tol.fd_step)
        step = -np.einsum("nij,nj->ni", np.linalg.pinv(J), R)
        norm = np.linalg.norm(step, axis=1)
        step *= np.minimum(1.0, max_step / np.maximum(norm, 1e-300))[:, None]
        r0 = np.linalg.norm(R, axis=1)
        alpha = np.ones(len(act))
        todo = np.arange(len(act))
        newX = X[act].copy()
        newr = r0.copy()
        for _ in range(8):
            if not len(todo):
                break
            trial = lift.retract(X[act][todo], alpha[todo, None] * step[todo])
            rt = np.linalg.norm(F(trial), axis=1)
            good = rt < r0[todo]
            newX[todo[good]] = trial[good]
            newr[todo[good]] = rt[good]
            todo = todo[~good]
            alpha[todo] *= 0.5
        X[act] = newX
        res[act] = newr
        # rows that could not decrease are finished (converged or stuck)
        live[act[todo]] = False
        close = np.nonzero(alive & (res < 1e-4))[0]
        if len(close) > 1:
            keys = np.round(m.canonical(X[close]) * 1e7).astype(np.int64)
            seen = set()
            for i, k in zip(close, map(tuple, keys)):
                if k in seen:
                    alive[i] = False
                    merged += 1
                else:
                    seen.add(k)
    res[~alive] = np.inf
    return X, res, merged


def solver_seeds(manifold, n):
    """Seed grid: ``n x n`` on the torus, a cube map with comparable density
    on the sphere and RP^2."""
    if manifold.name == "torus":
        return manifold.grid(n)
    return manifold.grid(max(2, n // 2))


@dataclass(eq=False)
class SolveResult:
    structure: Structure
    constraints: dict
    flows: list
    dimension: int
    equations: int
    seeds: int
    converged: int
    orbits: int = 0
    message: str = ""

    @property
    def positive_dimensional(self):
        return self.dimension > 0

    @property
    def count(self):
        return len(self.flows)

    def summary(self):
        if self.positive_dimensional:
            return (f"status=positive-dimensional dimension={self.dimension} "
                    f"equations={self.equations} seeds={self.seeds}")
        return (f"status=ok solutions={self.count} orbits={self.orbits} mod2={self.count % 2} "
                f"equations={self.equations} seeds={self.seeds} converged={self.converged}")

    def to_csv(self):
        leaves = sorted(self.constraints)
        k = self.structure.manifold.ambient
        head = [f"x{i + 1}" for i in range(k)] + ["residual"] + [f"limit.{v}" for v in leaves]
        rows = [",".join(head)]
        for f in self.flows:
            vals = [f"{v:.12g}" for v in f.x] + [f"{f.residual:.12g}"]
            vals += [str(f.limits.get(v)) for v in leaves]
            rows.append(",".join(vals))
        return "\n".join(rows) + "\n"


def _rank(J, rel=1e-6):
    if J.shape[0] == 0:
        return 0
    sv = np.linalg.svd(J, compute_uv=False)
    return int(np.sum(sv > rel * max(1.0, sv[0])))


def solve_graph_flows(s: Structure, constraints: Mapping[str, str] | None = None,
                      tol: Tolerances | None = None, leaf_window=1.0) -> SolveResult:
    """All flows of ``s`` whose constrained leaves reach the given critical points.

    Returns isolated solutions, or, when the solution set is positive
    dimensional, a result with ``dimension > 0`` (estimated as ``d`` minus the
    Jacobian rank) and no flows.
    """
    tol = tol or s.tol
    constraints = dict(constraints or {})
    F = _System(s, constraints)
    m = s.manifold
    lift = _lift(m)
    d = s.d
    seeds = solver_seeds(m, tol.seed_grid)
    if F.m < d:
        return SolveResult(s, constraints, [], d - F.m, F.m, len(seeds), 0,
                           message="positive-dimensional solution set detected")
    max_step = 0.1 if m.name == "torus" else 0.2
    X, res, merged = _newton(F, seeds.copy(), m, tol, max_step)
    good = np.nonzero(res < tol.newton_tol)[0]
    converged = len(good) + merged
    sols = []
    if len(good):
        ok, lims = F.limits_ok(X[good])
        C = m.canonical(X[good])
        for j in np.nonzero(ok)[0]:
            if any(m.distance(C[j][None, :], C[k][None, :])[0] < tol.dedup_radius for k, _, _ in sols):
                continue
            sols.append((j, res[good[j]], lims[j]))
    if sols:
        idx = [good[j] for j, _, _ in sols]
        _, J = F.jacobian(X[idx], lift, tol.fd_step)
        rank = min(_rank(Ji) for Ji in J)
        if rank < d:
            return SolveResult(s, constraints, [], d - rank, F.m, len(seeds), converged,
                               message="positive-dimensional solution set detected")
    flows = []
    for j, r, lim in sols:
        f = propagate_tree_flow(s, X[good[j]], leaf_window)
        f.residual = float(r)
        f.limits = lim
        flows.append(f)
    flows.sort(key=lambda f: tuple(np.round(f.x, 9)))
    result = SolveResult(s, constraints, flows, 0, F.m, len(seeds), converged)
    result.orbits = len(aut_orbits(result))
    return result


# -- automorphisms --------------------------------------------------------------------------


def permute_constraints(constraints, aut: GraphMorphism):
    return {aut.vertex_map[v]: c for v, c in constraints.items()}


def is_accepted(s: Structure, constraints, x, tol: Tolerances | None = None):
    """Residual below tolerance and every constrained leaf reaches its target."""
    tol = tol or s.tol
    F = _System(s, constraints)
    X = np.atleast_2d(np.asarray(x, dtype=float))
    if np.linalg.norm(F(X)[0]) >= tol.newton_tol:
        return False
    ok, _ = F.limits_ok(X)
    return bool(ok[0])


def _image_x(f: GraphFlow, aut: GraphMorphism):
    inv = {w: v for v, w in aut.vertex_map.items()}
    return f.vertex_values[inv[f.structure.graph.basepoint]]


def aut_action_failures(result: SolveResult, group=None):
    """Automorphisms that send an accepted flow to a rejected one.

    An automorphism carries the structure (lengths, labels, constraints) along
    with the flow; the image must be accepted for the transported structure.
    """
    s = result.structure
    group = group or compute_automorphisms(s.graph)
    bad = []
    for k, aut in enumerate(group.elements):
        s2 = s.permuted(aut)
        c2 = permute_constraints(result.constraints, aut)
        for f in result.flows:
            if not is_accepted(s2, c2, _image_x(f, aut)):
                bad.append((k, tuple(np.round(f.x, 9))))
    return bad


def aut_orbits(result: SolveResult, group=None):
    """Orbits of the solutions under automorphisms preserving the structure."""
    s = result.structure
    group = group or compute_automorphisms(s.graph)
    m = s.manifold
    stab = [a for a in group.elements
            if dict(s.permuted(a).metric.labels) == dict(s.metric.labels)
            and all(math.isclose(s.permuted(a).metric.lengths[e], v) for e, v in s.metric.lengths.items())
            and permute_constraints(result.constraints, a) == result.constraints]
    flows = result.flows
    parent = list(range(len(flows)))

    def find(i):
        while parent[i] != i:
            i = parent[i]
        return i

    for a in stab:
        for i, f in enumerate(flows):
            y = np.atleast_2d(_image_x(f, a))
            for j, g in enumerate(flows):
                if m.distance(y, np.atleast_2d(g.x))[0] < s.tol.dedup_radius:
                    ri, rj = find(i), find(j)
                    parent[max(ri, rj)] = min(ri, rj)
    return sorted({find(i) for i in range(len(flows))})
