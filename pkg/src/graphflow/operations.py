"""Operation tables over Morse bases, dimension formulas, and the checks for
homotopy invariance and gluing."""

from __future__ import annotations

import itertools
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .config import Tolerances
from .errors import GraphFlowError, OperationError
from .flows import Structure, _lift, _newton, _rank, _System, solve_graph_flows, solver_seeds
from .graphs import GraphMorphism, OrientedGraph, betti_and_euler, glue, validate_morphism
from .metric import MetricStructure

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DimensionQuery:
    in_indices: tuple
    out_indices: tuple
    chi: int
    d: int

    def __post_init__(self):
        object.__setattr__(self, "in_indices", tuple(int(i) for i in self.in_indices))
        object.__setattr__(self, "out_indices", tuple(int(i) for i in self.out_indices))
        for i in self.in_indices + self.out_indices:
            if not 0 <= i <= self.d:
                raise OperationError(f"index {i} outside [0, {self.d}]")


def expected_dimension_loopspace(q: DimensionQuery) -> int:
    return sum(q.in_indices) - sum(q.out_indices) + q.chi * q.d


def expected_dimension_finite(q: DimensionQuery, p: int | None = None) -> int:
    """``d (chi - p) + sum(in) - sum(out)``; ``p`` defaults to the number of inputs."""
    p = len(q.in_indices) if p is None else p
    return q.d * (q.chi - p) + sum(q.in_indices) - sum(q.out_indices)


# -- tables --------------------------------------------------------------------------------


@dataclass(frozen=True)
class TableRow:
    inputs: tuple      # critical-point ids, one per incoming leaf
    outputs: tuple     # one per outgoing leaf
    in_indices: tuple
    out_indices: tuple
    expdim: int
    count: int | None  # raw number of isolated solutions
    status: str        # ok | positive-dimensional | failed
    detail: str = ""

    @property
    def mod2(self):
        return None if self.count is None else self.count % 2


@dataclass(eq=False)
class OperationTable:
    graph: OrientedGraph
    in_leaves: tuple
    out_leaves: tuple
    basis: dict        # leaf -> [(critical id, index)]
    rows: list = field(default_factory=list)
    d: int = 2

    @property
    def partial(self):
        return any(r.status != "ok" for r in self.rows)

    @property
    def entries(self):
        """``(inputs, outputs) -> count mod 2`` over the rows that solved."""
        return {(r.inputs, r.outputs): r.mod2 for r in self.rows if r.status == "ok"}

    def nonzero(self):
        return {k: v for k, v in self.entries.items() if v}

    def entry(self, inputs, outputs):
        """Count mod 2 at a tuple; tuples off the countable stratum are 0."""
        e = self.entries
        key = (tuple(inputs), tuple(outputs))
        if key in e:
            return e[key]
        idx = {leaf: dict(b) for leaf, b in self.basis.items()}
        q = DimensionQuery([idx[v][c] for v, c in zip(self.in_leaves, inputs)],
                           [idx[v][c] for v, c in zip(self.out_leaves, outputs)],
                           betti_and_euler(self.graph)[1], self.d)
        if expected_dimension_finite(q) != 0:
            return 0
        raise KeyError(f"tuple {key} was not solved")

    def by_leaf(self):
        """Entries keyed by ``frozenset`` of ``(leaf, critical id)`` pairs."""
        out = {}
        for (ins, outs), v in self.entries.items():
            out[frozenset(zip(self.in_leaves, ins)) | frozenset(zip(self.out_leaves, outs))] = v
        return out

    def to_csv(self):
        rows = ["in_tuple,out_tuple,in_indices,out_indices,expdim,count_mod2,status"]
        for r in self.rows:
            rows.append(",".join([
                " ".join(r.inputs), " ".join(r.outputs),
                " ".join(map(str, r.in_indices)), " ".join(map(str, r.out_indices)),
                str(r.expdim), "" if r.mod2 is None else str(r.mod2), r.status,
            ]))
        return "\n".join(rows) + "\n"


def _threads():
    try:
        return max(1, int(os.environ.get("GRAPHFLOW_THREADS", "1")))
    except ValueError:
        raise GraphFlowError("GRAPHFLOW_THREADS must be an integer") from None


def leaf_basis(s: Structure):
    g = s.graph
    basis = {}
    for leaf in list(g.in_leaves) + list(g.out_leaves):
        b = s.backend(g.leaf_edge(leaf).id)
        basis[leaf] = [(c.id, c.index) for c in b.critical_points]
    return basis


def _warm(s: Structure):
    """Compute critical points and saddle curves up front so worker threads
    only read shared caches."""
    g = s.graph
    for leaf in list(g.in_leaves) + list(g.out_leaves):
        b = s.backend(g.leaf_edge(leaf).id)
        if any(c.index == 1 for c in b.critical_points):
            b.invariant_curve(next(c.id for c in b.critical_points if c.index == 1),
                              "u" if leaf in g.in_leaves else "s")


def build_operation_table(s: Structure, tol: Tolerances | None = None, threads=None) -> OperationTable:
    """Mod-2 counts for every leaf tuple of expected dimension zero."""
    g = s.graph
    ins, outs = tuple(sorted(g.in_leaves)), tuple(sorted(g.out_leaves))
    basis = leaf_basis(s)
    chi = betti_and_euler(g)[1]
    jobs = []
    for combo in itertools.product(*(basis[v] for v in ins + outs)):
        a, b = combo[: len(ins)], combo[len(ins):]
        q = DimensionQuery([i for _, i in a], [i for _, i in b], chi, s.d)
        if expected_dimension_finite(q, len(ins)) == 0:
            jobs.append((a, b, q))
    _warm(s)

    def run(job):
        a, b, q = job
        cons = dict(zip(ins, (c for c, _ in a)))
        cons.update(zip(outs, (c for c, _ in b)))
        base = dict(inputs=tuple(c for c, _ in a), outputs=tuple(c for c, _ in b),
                    in_indices=q.in_indices, out_indices=q.out_indices, expdim=0)
        try:
            res = solve_graph_flows(s, cons, tol)
        except GraphFlowError as exc:
            log.warning("tuple %s failed: %s", cons, exc)
            return TableRow(count=None, status="failed", detail=str(exc), **base)
        if res.positive_dimensional:
            log.info("tuple %s: positive-dimensional (dimension %d), skipped", cons, res.dimension)
            return TableRow(count=None, status="positive-dimensional", detail=res.summary(), **base)
        return TableRow(count=res.count, status="ok", **base)

    n = threads or _threads()
    if n > 1:
        with ThreadPoolExecutor(n) as pool:
            rows = list(pool.map(run, jobs))
    else:
        rows = [run(j) for j in jobs]
    return OperationTable(g, ins, outs, basis, rows, s.d)


# -- dimension probe ------------------------------------------------------------------------


def dimension_probe(s: Structure, constraints: Mapping[str, str], tol: Tolerances | None = None):
    """Local dimension ``d - rank J`` at the first solution Newton reaches,
    or ``None`` when no seed converges to an admissible point."""
    tol = tol or s.tol
    F = _System(s, dict(constraints))
    m = s.manifold
    seeds = solver_seeds(m, tol.seed_grid)
    if F.m == 0:
        return s.d
    X, res, _ = _newton(F, seeds.copy(), m, tol, 0.1 if m.name == "torus" else 0.2)
    good = np.nonzero(res < tol.newton_tol)[0]
    if not len(good):
        return None
    ok, _ = F.limits_ok(X[good])
    if not ok.any():
        return None
    x = X[good[np.argmax(ok)]][None, :]
    _, J = F.jacobian(x, _lift(m), tol.fd_step)
    return s.d - _rank(J[0])


# -- homotopy invariance ---------------------------------------------------------------------


@dataclass
class CheckReport:
    equal: bool
    compared: int
    mismatches: list
    skipped: int = 0

    def summary(self):
        return (f"equal={str(self.equal).lower()} compared={self.compared} "
                f"mismatches={len(self.mismatches)} skipped={self.skipped}")


def _compare(left: dict, right: dict):
    keys = sorted(set(left) | set(right), key=lambda k: sorted(k))
    both = [k for k in keys if k in left and k in right]
    bad = [(sorted(k), left[k], right[k]) for k in both if left[k] != right[k]]
    return CheckReport(not bad, len(both), bad, len(keys) - len(both))


def push_forward(s: Structure, phi: GraphMorphism, lengths=None) -> Structure:
    """Structure on the target of ``phi``: labels of surviving edges carried
    over, lengths copied from preimages unless given."""
    if validate_morphism(phi):
        raise OperationError("morphism is not valid")
    if phi.source != s.graph:
        raise OperationError("morphism source is not the structure's graph")
    labels, lens = {}, {}
    for e, t in phi.edge_map.items():
        if t is None:
            continue
        if e in s.metric.labels:
            if labels.get(t, s.metric.labels[e]) != s.metric.labels[e]:
                raise OperationError("incompatible labelings")
            labels[t] = s.metric.labels[e]
        if e in s.metric.lengths:
            lens[t] = s.metric.lengths[e]
    if lengths:
        lens.update(lengths)
    tgt = phi.target
    lens = {e: v for e, v in lens.items() if e not in tgt.leaf_edges}
    return Structure(MetricStructure(tgt, lens, labels), s.backends)


def check_homotopy_invariance(phi: GraphMorphism, source: Structure, target: Structure | None = None,
                              tol=None, tables=None) -> CheckReport:
    """Tables of ``source`` and of its image agree after renaming leaves by ``phi``."""
    if target is None:
        target = push_forward(source, phi)
    else:
        pushed = push_forward(source, phi)
        for e, k in pushed.metric.labels.items():
            if target.metric.labels.get(e) != k:
                raise OperationError("incompatible labelings")
    t1, t2 = tables or (build_operation_table(source, tol), build_operation_table(target, tol))
    vm = phi.vertex_map
    left = {frozenset((vm[v], c) for v, c in k): val for k, val in t1.by_leaf().items()}
    return _compare(left, t2.by_leaf())


# -- gluing --------------------------------------------------------------------------------------


def glue_structures(s1: Structure, s2: Structure, matching: Mapping[str, str],
                    glue_length=0.5, prefix="g2.") -> Structure:
    """Structure on ``glue(g1, g2)``; the two leaf edges meeting at each glued
    vertex become internal edges of length ``glue_length``."""
    g1, g2 = s1.graph, s2.graph
    for o, i in matching.items():
        e1, e2 = g1.leaf_edge(o).id, g2.leaf_edge(i).id
        if s1.metric.labels.get(e1) != s2.metric.labels.get(e2):
            raise OperationError(f"basis mismatch at glued leaves {o} and {i}: different edge functions")
    g = glue(g1, g2, matching, prefix)
    lengths = {e: v for e, v in s1.metric.lengths.items() if e not in g1.leaf_edges}
    lengths.update({prefix + e: v for e, v in s2.metric.lengths.items() if e not in g2.leaf_edges})
    labels = dict(s1.metric.labels)
    labels.update({prefix + e: k for e, k in s2.metric.labels.items()})
    for o, i in matching.items():
        lengths[g1.leaf_edge(o).id] = glue_length
        lengths[prefix + g2.leaf_edge(i).id] = glue_length
    return Structure(MetricStructure(g, lengths, labels), {**s1.backends, **s2.backends})


def compose_tables(t1: OperationTable, t2: OperationTable, matching: Mapping[str, str], prefix="g2."):
    """F_2 composite: contract the outputs of ``t1`` with the matched inputs of ``t2``.

    Keyed like :meth:`OperationTable.by_leaf` for the glued graph.
    """
    out = {}
    e1, e2 = t1.by_leaf(), t2.by_leaf()
    back = {i: o for o, i in matching.items()}
    for k1, v1 in e1.items():
        if not v1:
            continue
        d1 = dict(k1)
        mid = {back_leaf: d1[o] for o, back_leaf in matching.items()}
        for k2, v2 in e2.items():
            if not v2:
                continue
            d2 = dict(k2)
            if any(d2[i] != mid[i] for i in mid):
                continue
            key = frozenset((v, c) for v, c in d1.items() if v not in matching)
            key |= frozenset((prefix + v, c) for v, c in d2.items() if v not in back)
            out[key] = (out.get(key, 0) + v1 * v2) % 2
    return out


def check_gluing(s1: Structure, s2: Structure, matching: Mapping[str, str], tol=None,
                 glue_length=0.5) -> CheckReport:
    """Composite of the two tables equals the table of the glued structure."""
    s = glue_structures(s1, s2, matching, glue_length)
    t1, t2 = build_operation_table(s1, tol), build_operation_table(s2, tol)
    tg = build_operation_table(s, tol)
    comp = compose_tables(t1, t2, matching)
    if t1.partial or t2.partial:
        raise OperationError("factor tables are partial; composite undefined")
    glued = tg.by_leaf()
    # every solved tuple of the glued table is compared; absent composite entries are 0
    left = {k: comp.get(k, 0) for k in glued}
    extra = [] if tg.partial else [k for k, v in comp.items() if v and k not in glued]
    rep = _compare(left, glued)
    if extra:
        rep.equal = False
        rep.mismatches += [(sorted(k), 1, None) for k in extra]
    return rep
