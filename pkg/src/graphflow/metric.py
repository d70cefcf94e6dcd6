"""Metrics from simplex coordinates, and Morse labels on edges."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .errors import StructureError
from .graphs import GraphMorphism, OrientedGraph, compose, parse_graph, validate_morphism


def _label_conflicts(g: OrientedGraph, labels):
    """Vertices where two incident edges carry the same label.

    A bivalent vertex with one incoming and one outgoing edge is a plain
    subdivision point; repeated labels are allowed there because the flow
    simply continues along the same function.
    """
    bad = []
    for v in g.vertices:
        inc = g.incident(v)
        keys = [labels[e.id] for e in inc if e.id in labels]
        if len(keys) == len(set(keys)):
            continue
        if len(inc) == 2 and sum(e.dst == v for e in inc) == 1 and sum(e.src == v for e in inc) == 1:
            continue
        bad.append(v)
    return bad


@dataclass(frozen=True, eq=False)
class MetricStructure:
    """Edge lengths and Morse labels on a graph.

    Leaf edges are half-infinite: any length given for them is kept only as a
    display window.  Internal edges may have length zero, which marks an edge
    collapsed at a simplex face.
    """

    graph: OrientedGraph
    lengths: Mapping[str, float]
    labels: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        g = self.graph
        ids = {e.id for e in g.edges}
        for e, v in self.lengths.items():
            if e not in ids:
                raise StructureError(f"length given for unknown edge {e}")
            if not (v >= 0) or not math.isfinite(v):
                raise StructureError(f"invalid length {v} on edge {e}")
        for e in g.edges:
            if e.id not in g.leaf_edges and e.id not in self.lengths:
                raise StructureError(f"edge {e.id} has no length")
        for e in self.labels:
            if e not in ids:
                raise StructureError(f"label given for unknown edge {e}")
        bad = _label_conflicts(g, self.labels)
        if bad:
            raise StructureError(f"labels not distinct at vertex {bad[0]}")

    def is_half_infinite(self, eid):
        return eid in self.graph.leaf_edges

    def length(self, eid):
        return math.inf if self.is_half_infinite(eid) else float(self.lengths[eid])

    @property
    def zero_length_edges(self):
        return sorted(e for e, v in self.lengths.items() if v == 0 and not self.is_half_infinite(e))

    def total_length(self):
        return sum(v for e, v in self.lengths.items() if not self.is_half_infinite(e))

    def with_lengths(self, lengths):
        return MetricStructure(self.graph, dict(self.lengths, **lengths), self.labels)

    def to_text(self):
        out = [self.graph.to_text().rstrip("\n")]
        out += [f"length {e} {v:.12g}" for e, v in sorted(self.lengths.items())]
        out += [f"label {e} {k}" for e, k in sorted(self.labels.items())]
        return "\n".join(out) + "\n"


def assign_labels(ms: MetricStructure, assignment: Mapping[str, str], catalog_keys=None) -> MetricStructure:
    if catalog_keys is not None:
        for e, k in sorted(assignment.items()):
            if k not in catalog_keys:
                raise StructureError(f"unknown catalog key {k!r} on edge {e}")
    return MetricStructure(ms.graph, ms.lengths, dict(assignment))


def parse_structure(text) -> MetricStructure:
    """Graph format plus ``length <edge-id> <float>`` and ``label <edge-id> <key>`` lines."""
    g, rest = parse_graph(text, extra=("length", "label", "cyclic", "mark"))
    lengths, labels = {}, {}
    for lineno, cols, tok in rest:
        if tok[0] in ("cyclic", "mark"):
            continue
        if len(tok) != 3:
            raise StructureError(f"line {lineno}: expected '{tok[0]} <edge-id> <value>'")
        if tok[0] == "length":
            try:
                lengths[tok[1]] = float(tok[2])
            except ValueError:
                raise StructureError(f"line {lineno}: bad length {tok[2]!r}") from None
        else:
            labels[tok[1]] = tok[2]
    return MetricStructure(g, lengths, labels)


@dataclass(frozen=True, eq=False)
class SimplexPoint:
    """Barycentric coordinates ``t`` and a chain ``Gamma_k -> ... -> Gamma_0``.

    ``chain[0]`` has source Gamma_k; ``chain[-1]`` has target Gamma_0.  For
    ``k = 0`` pass ``graph`` instead of a chain.
    """

    t: Sequence[float]
    chain: Sequence[GraphMorphism] = ()
    graph: OrientedGraph | None = None

    def __post_init__(self):
        t = tuple(float(x) for x in self.t)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "chain", tuple(self.chain))
        if any(x < 0 for x in t):
            raise StructureError("simplex coordinates must be nonnegative")
        if abs(sum(t) - 1.0) > 1e-12:
            raise StructureError("simplex coordinates must sum to 1")
        if len(t) != len(self.chain) + 1:
            raise StructureError(f"{len(t)} coordinates for a chain of length {len(self.chain)}")
        for a, b in zip(self.chain, self.chain[1:]):
            if a.target != b.source:
                raise StructureError("chain is not composable")
        for m in self.chain:
            if validate_morphism(m):
                raise StructureError("chain contains an invalid morphism")
        if not self.chain and self.graph is None:
            raise StructureError("a 0-simplex needs its graph")

    @property
    def k(self):
        return len(self.chain)

    @property
    def initial_graph(self):
        return self.chain[0].source if self.chain else self.graph


def simplex_metric(p: SimplexPoint, labels=None):
    """Edge lengths ``sum_i t_i * [E survives in Gamma_i]`` on the initial graph.

    Returns ``(metric, zero_length_edges)``; leaf edges get no length.
    """
    g = p.initial_graph
    k = p.k
    # survives[i][e]: is edge e of Gamma_k still an edge in Gamma_i
    survives = {k: {e.id: True for e in g.edges}}
    acc = None
    for j, m in enumerate(p.chain):
        acc = m if acc is None else compose(m, acc)
        survives[k - 1 - j] = {e: t is not None for e, t in acc.edge_map.items()}
    lengths = {}
    for e in g.edges:
        if e.id in g.leaf_edges:
            continue
        lengths[e.id] = sum(p.t[i] * (1.0 if survives[i][e.id] else 0.0) for i in range(k + 1))
    ms = MetricStructure(g, lengths, dict(labels or {}))
    return ms, ms.zero_length_edges
