"""Oriented graphs with leaves and a basepoint, their morphisms and automorphisms.

A graph is a finite directed multigraph.  Univalent vertices are leaves; an
incoming leaf sits at the source of its edge, an outgoing leaf at the target.
The basepoint is a vertex of valence at least two.
"""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import GraphError, GraphParseError

IN = "in"
OUT = "out"
COLLAPSED = None


@dataclass(frozen=True)
class Edge:
    id: str
    src: str
    dst: str

    @property
    def is_loop(self):
        return self.src == self.dst


@dataclass(frozen=True, eq=False)
class OrientedGraph:
    vertices: tuple
    edges: tuple
    basepoint: str
    leaves: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(sorted(set(self.vertices))))
        object.__setattr__(self, "edges", tuple(sorted(self.edges, key=lambda e: e.id)))
        object.__setattr__(self, "leaves", dict(sorted(self.leaves.items())))
        self._validate()

    # -- construction helpers -------------------------------------------------

    @classmethod
    def from_edges(cls, edges, basepoint, leaves=None, vertices=()):
        """Build from ``(id, src, dst)`` triples; vertices are inferred."""
        es = [e if isinstance(e, Edge) else Edge(*e) for e in edges]
        vs = set(vertices) | {e.src for e in es} | {e.dst for e in es} | {basepoint}
        return cls(tuple(vs), tuple(es), basepoint, dict(leaves or {}))

    def _validate(self):
        ids = [e.id for e in self.edges]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise GraphError(f"duplicate edge id {dup[0]}", "edge ids unique")
        vset = set(self.vertices)
        for e in self.edges:
            for v in (e.src, e.dst):
                if v not in vset:
                    raise GraphError(f"edge {e.id} references unknown vertex {v}", "unknown vertex")
        val = self.valence
        if not any(val[v] >= 2 for v in self.vertices):
            raise GraphError("no valid basepoint (graph has no nonunivalent vertex)", "no valid basepoint")
        if self.basepoint not in vset:
            raise GraphError(f"basepoint {self.basepoint} is not a vertex", "no valid basepoint")
        if val[self.basepoint] < 2:
            raise GraphError("basepoint is univalent", "basepoint is univalent")
        for v, kind in self.leaves.items():
            if v not in vset:
                raise GraphError(f"leaf {v} is not a vertex", "unknown vertex")
            if kind not in (IN, OUT):
                raise GraphError(f"leaf {v} has kind {kind!r}", "leaf kind")
            if val[v] != 1:
                raise GraphError(f"leaf {v} is not univalent", "leaf is not univalent")
            (e,) = self.incident(v)
            if kind == IN and e.src != v:
                raise GraphError(f"incoming leaf {v} must sit at the source of {e.id}", "leaf orientation")
            if kind == OUT and e.dst != v:
                raise GraphError(f"outgoing leaf {v} must sit at the target of {e.id}", "leaf orientation")
        for v in self.vertices:
            if val[v] == 1 and v not in self.leaves:
                raise GraphError(f"univalent vertex {v} is not declared as a leaf", "undeclared leaf")
        if not self._connected():
            raise GraphError("graph is disconnected", "disconnected graph")

    def _connected(self):
        adj = self.adjacency
        seen = {self.basepoint}
        todo = [self.basepoint]
        while todo:
            v = todo.pop()
            for w in adj[v]:
                if w not in seen:
                    seen.add(w)
                    todo.append(w)
        return len(seen) == len(self.vertices)

    # -- queries --------------------------------------------------------------

    @property
    def valence(self):
        val = {v: 0 for v in self.vertices}
        for e in self.edges:
            val[e.src] += 1
            val[e.dst] += 1
        return val

    @property
    def adjacency(self):
        adj = defaultdict(set)
        for e in self.edges:
            adj[e.src].add(e.dst)
            adj[e.dst].add(e.src)
        return adj

    def edge(self, eid) -> Edge:
        for e in self.edges:
            if e.id == eid:
                return e
        raise KeyError(eid)

    def incident(self, v):
        return [e for e in self.edges if v in (e.src, e.dst)]

    @property
    def in_leaves(self):
        return [v for v, k in self.leaves.items() if k == IN]

    @property
    def out_leaves(self):
        return [v for v, k in self.leaves.items() if k == OUT]

    def leaf_edge(self, v) -> Edge:
        (e,) = self.incident(v)
        return e

    @property
    def leaf_edges(self):
        return {self.leaf_edge(v).id for v in self.leaves}

    @property
    def internal_vertices(self):
        return [v for v in self.vertices if v not in self.leaves]

    def is_tree(self):
        return len(self.edges) == len(self.vertices) - 1

    def relabel(self, vmap=None, emap=None):
        vmap = vmap or {}
        emap = emap or {}
        rv = lambda v: vmap.get(v, v)
        return OrientedGraph(
            tuple(rv(v) for v in self.vertices),
            tuple(Edge(emap.get(e.id, e.id), rv(e.src), rv(e.dst)) for e in self.edges),
            rv(self.basepoint),
            {rv(v): k for v, k in self.leaves.items()},
        )

    def to_text(self):
        lines = []
        for v in self.vertices:
            lines.append(f"vertex {v}" + (" basepoint" if v == self.basepoint else ""))
        for e in self.edges:
            lines.append(f"edge {e.id} {e.src} {e.dst}")
        for v, k in self.leaves.items():
            lines.append(f"leaf {v} {k}")
        return "\n".join(lines) + "\n"

    def __eq__(self, other):
        if not isinstance(other, OrientedGraph):
            return NotImplemented
        return (self.vertices, self.edges, self.basepoint, self.leaves) == (
            other.vertices, other.edges, other.basepoint, other.leaves)

    def __hash__(self):
        return hash((self.vertices, self.edges, self.basepoint, tuple(self.leaves.items())))

    def __repr__(self):
        return f"OrientedGraph(|V|={len(self.vertices)}, |E|={len(self.edges)}, basepoint={self.basepoint!r})"


def betti_and_euler(g: OrientedGraph):
    """Return ``(b1, chi)`` for a connected graph."""
    chi = len(g.vertices) - len(g.edges)
    return 1 - chi, chi


# -- text format --------------------------------------------------------------

def iter_directives(text):
    """Yield ``(line_no, columns, tokens)`` for each non-blank, non-comment line."""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        tokens, cols = [], []
        i = 0
        while i < len(line):
            if line[i].isspace():
                i += 1
                continue
            j = i
            while j < len(line) and not line[j].isspace():
                j += 1
            tokens.append(line[i:j])
            cols.append(i + 1)
            i = j
        if tokens:
            yield lineno, cols, tokens


def parse_graph(text: str, extra: Iterable[str] = ()):
    """Parse the line-oriented graph format.

    Directives other than ``vertex``/``edge``/``leaf`` are rejected unless
    named in ``extra``; when ``extra`` is given the return value is the graph
    together with the list of the extra ``(line, cols, tokens)`` records.
    """
    extra = set(extra)
    vertices, edges, leaves = [], [], {}
    basepoints = []
    rest = []
    for lineno, cols, tok in iter_directives(text):
        head = tok[0]
        if head == "vertex":
            if len(tok) not in (2, 3) or (len(tok) == 3 and tok[2] != "basepoint"):
                raise GraphParseError("expected 'vertex <id> [basepoint]'", lineno, cols[-1])
            vertices.append(tok[1])
            if len(tok) == 3:
                basepoints.append((lineno, tok[1]))
        elif head == "edge":
            if len(tok) != 4:
                raise GraphParseError("expected 'edge <id> <src> <dst>'", lineno, cols[min(len(tok), 4) - 1])
            edges.append(Edge(tok[1], tok[2], tok[3]))
        elif head == "leaf":
            if len(tok) != 3 or tok[2] not in (IN, OUT):
                raise GraphParseError("expected 'leaf <vertex-id> in|out'", lineno, cols[min(len(tok), 3) - 1])
            if tok[1] in leaves:
                raise GraphParseError(f"leaf {tok[1]} declared twice", lineno, cols[1])
            leaves[tok[1]] = tok[2]
        elif head in extra:
            rest.append((lineno, cols, tok))
        else:
            raise GraphParseError(f"unknown directive {head!r}", lineno, cols[0])
    known = set(vertices)
    for e in edges:
        for v in (e.src, e.dst):
            if v not in known:
                raise GraphError(f"edge {e.id} references undeclared vertex {v}", "unknown vertex")
    if len(basepoints) > 1:
        raise GraphParseError("more than one basepoint", basepoints[1][0], 1)
    if not basepoints:
        # still report the more specific failure for graphs without any candidate
        val = defaultdict(int)
        for e in edges:
            val[e.src] += 1
            val[e.dst] += 1
        if not any(val[v] >= 2 for v in vertices):
            raise GraphError("no valid basepoint (graph has no nonunivalent vertex)", "no valid basepoint")
        raise GraphError("no basepoint declared", "no valid basepoint")
    g = OrientedGraph(tuple(vertices), tuple(edges), basepoints[0][1], leaves)
    if extra:
        return g, rest
    return g


# -- morphisms ------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    clause: str
    message: str
    witnesses: tuple = ()


@dataclass(frozen=True, eq=False)
class GraphMorphism:
    """Cellular map; ``edge_map[e]`` is a target edge id or ``None`` (collapsed)."""

    source: OrientedGraph
    target: OrientedGraph
    vertex_map: Mapping[str, str]
    edge_map: Mapping[str, str | None]

    def key(self):
        return (tuple(sorted(self.vertex_map.items())),
                tuple(sorted(self.edge_map.items(), key=lambda kv: kv[0])))

    def __eq__(self, other):
        return (isinstance(other, GraphMorphism) and self.source == other.source
                and self.target == other.target and self.key() == other.key())

    def __hash__(self):
        return hash(self.key())

    def collapsed(self):
        return sorted(e for e, t in self.edge_map.items() if t is COLLAPSED)


def identity(g: OrientedGraph) -> GraphMorphism:
    return GraphMorphism(g, g, {v: v for v in g.vertices}, {e.id: e.id for e in g.edges})


def compose(second: GraphMorphism, first: GraphMorphism) -> GraphMorphism:
    """``second ∘ first``."""
    if first.target != second.source:
        raise GraphError("morphisms are not composable", "not composable")
    vmap = {v: second.vertex_map[w] for v, w in first.vertex_map.items()}
    emap = {}
    for e, t in first.edge_map.items():
        emap[e] = COLLAPSED if t is COLLAPSED else second.edge_map[t]
    return GraphMorphism(first.source, second.target, vmap, emap)


def inverse(m: GraphMorphism) -> GraphMorphism:
    if m.collapsed():
        raise GraphError("morphism collapses edges and has no inverse", "not invertible")
    return GraphMorphism(m.target, m.source,
                         {w: v for v, w in m.vertex_map.items()},
                         {t: e for e, t in m.edge_map.items()})


def validate_morphism(m: GraphMorphism):
    """Check the four morphism clauses; return a list of violations (empty means ok)."""
    src, tgt = m.source, m.target
    out = []
    missing_v = [v for v in src.vertices if v not in m.vertex_map]
    missing_e = [e.id for e in src.edges if e.id not in m.edge_map]
    if missing_v or missing_e:
        return [Violation("total", "map is not defined on every cell", tuple(missing_v + missing_e))]
    tv = set(tgt.vertices)
    te = {e.id: e for e in tgt.edges}
    bad = [v for v, w in m.vertex_map.items() if w not in tv]
    bad += [e for e, t in m.edge_map.items() if t is not COLLAPSED and t not in te]
    if bad:
        return [Violation("total", "map sends cells outside the target", tuple(bad))]

    # (1) orientations
    wit = []
    for e in src.edges:
        t = m.edge_map[e.id]
        a, b = m.vertex_map[e.src], m.vertex_map[e.dst]
        if t is COLLAPSED:
            if a != b:
                wit.append(e.id)
        elif (a, b) != (te[t].src, te[t].dst):
            wit.append(e.id)
    if wit:
        out.append(Violation("orientation", "edge orientations or incidences are not preserved", tuple(wit)))

    # (2) preimage of every vertex is a tree
    pre_v = defaultdict(list)
    for v, w in m.vertex_map.items():
        pre_v[w].append(v)
    pre_e = defaultdict(list)
    for e in src.edges:
        if m.edge_map[e.id] is COLLAPSED and m.vertex_map[e.src] == m.vertex_map[e.dst]:
            pre_e[m.vertex_map[e.src]].append(e)
    for w in tgt.vertices:
        vs, es = pre_v.get(w, []), pre_e.get(w, [])
        if not vs:
            out.append(Violation("vertex preimage", f"vertex {w} has empty preimage", (w,)))
            continue
        if len(es) != len(vs) - 1 or not _spans(vs, es):
            kind = "collapsed subgraph contains a cycle" if len(es) >= len(vs) else "collapsed subgraph is disconnected"
            out.append(Violation("vertex preimage", kind, tuple(sorted(e.id for e in es)) or (w,)))

    # (3) preimage of every open edge is one open edge
    counts = defaultdict(list)
    for e, t in m.edge_map.items():
        if t is not COLLAPSED:
            counts[t].append(e)
    for t in te:
        if len(counts.get(t, [])) != 1:
            out.append(Violation("edge preimage", f"edge {t} has {len(counts.get(t, []))} preimages",
                                 tuple(counts.get(t, [])) or (t,)))

    # (4) basepoints
    if m.vertex_map[src.basepoint] != tgt.basepoint:
        out.append(Violation("basepoint", "basepoint is not preserved", (src.basepoint,)))
    return out


def _spans(vs, es):
    adj = defaultdict(set)
    for e in es:
        adj[e.src].add(e.dst)
        adj[e.dst].add(e.src)
    seen = {vs[0]}
    todo = [vs[0]]
    while todo:
        v = todo.pop()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                todo.append(w)
    return seen == set(vs)


def parse_morphism(text, source: OrientedGraph, target: OrientedGraph) -> GraphMorphism:
    """Morphism format: ``vmap <src-v> <tgt-v>`` and ``emap <src-e> <tgt-e>|collapse``."""
    vmap, emap = {}, {}
    for lineno, cols, tok in iter_directives(text):
        if tok[0] == "vmap" and len(tok) == 3:
            vmap[tok[1]] = tok[2]
        elif tok[0] == "emap" and len(tok) == 3:
            emap[tok[1]] = COLLAPSED if tok[2] == "collapse" else tok[2]
        else:
            raise GraphParseError("expected 'vmap <v> <w>' or 'emap <e> <f>|collapse'", lineno, cols[0])
    return GraphMorphism(source, target, vmap, emap)


# -- automorphisms ----------------------------------------------------------------

@dataclass(frozen=True)
class AutomorphismGroup:
    elements: tuple

    @property
    def order(self):
        return len(self.elements)

    def multiplication_table(self):
        index = {m.key(): i for i, m in enumerate(self.elements)}
        return [[index[compose(a, b).key()] for b in self.elements] for a in self.elements]

    def leaf_permutation(self, m: GraphMorphism):
        """Restriction to the (incoming, outgoing) leaves."""
        g = m.source
        return ({v: m.vertex_map[v] for v in g.in_leaves}, {v: m.vertex_map[v] for v in g.out_leaves})


def _edge_kind(g, e):
    if e.src in g.leaves:
        return ("leaf", IN)
    if e.dst in g.leaves:
        return ("leaf", OUT)
    return ("loop",) if e.is_loop else ("edge",)


def compute_automorphisms(g: OrientedGraph) -> AutomorphismGroup:
    """Enumerate Aut(g) by backtracking over edge bijections."""
    val = g.valence
    edges = list(g.edges)
    # most constrained first: edges touching the basepoint, then by BFS order
    order = _bfs_edge_order(g)
    edges = [g.edge(eid) for eid in order]
    kinds = {e.id: _edge_kind(g, e) for e in g.edges}
    found = []

    def vsig(v):
        return (val[v], g.leaves.get(v), v == g.basepoint)

    def extend(i, vmap, rev, used, emap):
        if i == len(edges):
            found.append(GraphMorphism(g, g, dict(vmap), dict(emap)))
            return
        e = edges[i]
        for t in g.edges:
            if t.id in used or kinds[t.id] != kinds[e.id]:
                continue
            pairs = [(e.src, t.src), (e.dst, t.dst)]
            added = []
            ok = True
            for a, b in pairs:
                if a in vmap:
                    if vmap[a] != b:
                        ok = False
                        break
                elif b in rev or vsig(a) != vsig(b):
                    ok = False
                    break
                else:
                    vmap[a] = b
                    rev[b] = a
                    added.append(a)
            if ok:
                used.add(t.id)
                emap[e.id] = t.id
                extend(i + 1, vmap, rev, used, emap)
                used.discard(t.id)
                del emap[e.id]
            for a in added:
                del rev[vmap.pop(a)]

    extend(0, {g.basepoint: g.basepoint}, {g.basepoint: g.basepoint}, set(), {})
    group = AutomorphismGroup(tuple(sorted(found, key=lambda m: m.key())))
    _check_group(group)
    return group


def _bfs_edge_order(g):
    seen_e = []
    seen_v = {g.basepoint}
    q = deque([g.basepoint])
    while q:
        v = q.popleft()
        for e in g.incident(v):
            if e.id not in seen_e:
                seen_e.append(e.id)
            w = e.dst if e.src == v else e.src
            if w not in seen_v:
                seen_v.add(w)
                q.append(w)
    return seen_e


def _check_group(group: AutomorphismGroup):
    keys = {m.key() for m in group.elements}
    for a in group.elements:
        if inverse(a).key() not in keys:
            raise AssertionError("automorphism set not closed under inverse")
        for b in group.elements:
            if compose(a, b).key() not in keys:
                raise AssertionError("automorphism set not closed under composition")


# -- gluing ---------------------------------------------------------------------

def glue(g1: OrientedGraph, g2: OrientedGraph, matching: Mapping[str, str], prefix="g2."):
    """Glue the outgoing leaves of ``g1`` to incoming leaves of ``g2``.

    ``matching`` sends each outgoing leaf of ``g1`` to a distinct incoming leaf
    of ``g2``; unmatched incoming leaves of ``g2`` stay incoming leaves of the
    result.  Cells of ``g2`` are renamed with ``prefix``; each glued vertex
    keeps the ``g1`` leaf id and becomes internal.
    """
    outs, ins = set(g1.out_leaves), set(g2.in_leaves)
    q = len(matching)
    if q == 0 or len(outs) != q or len(ins) < q:
        raise GraphError(f"arity mismatch: {len(outs)} outgoing vs {len(ins)} incoming leaves, "
                         f"matching of size {q}", "arity mismatch")
    if set(matching) != outs or not set(matching.values()) <= ins or len(set(matching.values())) != q:
        raise GraphError("matching is not a bijection from outgoing leaves onto incoming leaves",
                         "matching not a bijection")
    back = {w: v for v, w in matching.items()}
    ren = lambda v: back.get(v, prefix + v)
    vertices = list(g1.vertices) + [ren(v) for v in g2.vertices if v not in back]
    edges = list(g1.edges) + [Edge(prefix + e.id, ren(e.src), ren(e.dst)) for e in g2.edges]
    leaves = {v: k for v, k in g1.leaves.items() if v not in matching}
    leaves.update({ren(v): k for v, k in g2.leaves.items() if v not in back})
    return OrientedGraph(tuple(vertices), tuple(edges), g1.basepoint, leaves)
