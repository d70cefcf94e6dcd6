"""Fat (ribbon) graphs: cyclic orders, boundary cycles, surface invariants.

A half-edge is ``(edge_id, end)`` with ``end`` either ``"+"`` (source end) or
``"-"`` (target end).  The oriented edge leaving a vertex through a half-edge
is identified with that half-edge, so ``(A, "+")`` is A and ``(A, "-")`` is
its reversal.  The involution is the end swap.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .errors import FatGraphError
from .graphs import Edge, OrientedGraph, betti_and_euler, parse_graph

SRC, DST = "+", "-"
IN, OUT = "in", "out"


def reverse(h):
    return (h[0], DST if h[1] == SRC else SRC)


def half_edge_key(h):
    return (h[0], 0 if h[1] == SRC else 1)


def fmt_oriented(h):
    return h[0] if h[1] == SRC else "~" + h[0]


def parse_half_edge(token):
    if len(token) < 2 or token[-1] not in (SRC, DST):
        raise FatGraphError(f"bad half-edge token {token!r}; expected <edge-id>+ or <edge-id>-")
    return (token[:-1], token[-1])


@dataclass(frozen=True, eq=False)
class FatGraph:
    underlying: OrientedGraph
    cyclic_orders: Mapping[str, tuple]
    require_trivalent: bool = True

    def __post_init__(self):
        g = self.underlying
        orders = {v: tuple(hs) for v, hs in self.cyclic_orders.items()}
        for v in g.leaves:
            if v not in orders:
                e = g.leaf_edge(v)
                orders[v] = ((e.id, SRC if e.src == v else DST),)
        object.__setattr__(self, "cyclic_orders", dict(sorted(orders.items())))
        self._validate()

    def _validate(self):
        g = self.underlying
        expected = {}
        for e in g.edges:
            expected[(e.id, SRC)] = e.src
            expected[(e.id, DST)] = e.dst
        seen = {}
        for v, hs in self.cyclic_orders.items():
            if v not in g.vertices:
                raise FatGraphError(f"cyclic order given for unknown vertex {v}")
            for h in hs:
                if h not in expected:
                    raise FatGraphError(f"unknown half-edge {fmt_half(h)} at vertex {v}")
                if h in seen:
                    raise FatGraphError(f"half-edge {fmt_half(h)} appears twice")
                if expected[h] != v:
                    raise FatGraphError(f"half-edge {fmt_half(h)} is not incident to {v}")
                seen[h] = v
        missing = sorted(set(expected) - set(seen), key=half_edge_key)
        if missing:
            raise FatGraphError(f"half-edge {fmt_half(missing[0])} missing from every cyclic order")
        if self.require_trivalent:
            for v in g.internal_vertices:
                if len(self.cyclic_orders[v]) < 3:
                    raise FatGraphError(f"vertex {v} is not at least trivalent")

    @property
    def half_edges(self):
        return sorted((h for hs in self.cyclic_orders.values() for h in hs), key=half_edge_key)

    def successor(self):
        succ = {}
        for hs in self.cyclic_orders.values():
            for i, h in enumerate(hs):
                succ[h] = hs[(i + 1) % len(hs)]
        return succ

    def relabel(self, vmap=None, emap=None):
        vmap, emap = vmap or {}, emap or {}
        g = self.underlying.relabel(vmap, emap)
        orders = {vmap.get(v, v): tuple((emap.get(e, e), end) for e, end in hs)
                  for v, hs in self.cyclic_orders.items()}
        return FatGraph(g, orders, self.require_trivalent)

    def rotate(self, shifts: Mapping[str, int]):
        orders = {}
        for v, hs in self.cyclic_orders.items():
            k = shifts.get(v, 0) % len(hs)
            orders[v] = hs[k:] + hs[:k]
        return FatGraph(self.underlying, orders, self.require_trivalent)


def fmt_half(h):
    return f"{h[0]}{h[1]}"


@dataclass(frozen=True)
class BoundaryCyclePartition:
    cycles: tuple
    marks: tuple = ()

    def cycle_of(self):
        return {h: i for i, c in enumerate(self.cycles) for h in c}

    def with_marks(self, marks):
        marks = tuple(marks)
        if len(marks) != len(self.cycles):
            raise FatGraphError(f"{len(marks)} marks for {len(self.cycles)} boundary cycles")
        return BoundaryCyclePartition(self.cycles, marks)

    def format(self):
        return " ".join("(" + ",".join(fmt_oriented(h) for h in c) + ")" for c in self.cycles)


def _canonical(cycle):
    k = min(range(len(cycle)), key=lambda i: half_edge_key(cycle[i]))
    return tuple(cycle[k:] + cycle[:k])


def boundary_cycles(fg: FatGraph) -> BoundaryCyclePartition:
    """Partition the oriented edges into boundary cycles.

    From an oriented edge go to its target vertex and continue with the
    successor, in that vertex's cyclic order, of the reversed edge.
    """
    succ = fg.successor()
    unused = set(succ)
    cycles = []
    for start in fg.half_edges:
        if start not in unused:
            continue
        cyc = []
        h = start
        while True:
            cyc.append(h)
            unused.discard(h)
            h = succ[reverse(h)]
            if h == start:
                break
            if h not in unused:
                raise FatGraphError("boundary traversal is not a permutation")
        cycles.append(_canonical(cyc))
    cycles.sort(key=lambda c: half_edge_key(c[0]))
    return BoundaryCyclePartition(tuple(cycles))


def surface_invariants(fg: FatGraph):
    """Return ``(genus, n_boundary, chi)`` of the thickened surface."""
    _, chi = betti_and_euler(fg.underlying)
    n = len(boundary_cycles(fg).cycles)
    twice_genus = 2 - chi - n
    if twice_genus % 2:
        raise FatGraphError("(2-chi-n) odd: corrupted cyclic-order structure")
    if twice_genus < 0:
        raise FatGraphError("negative genus: corrupted cyclic-order structure")
    return twice_genus // 2, n, chi


@dataclass(frozen=True)
class ChordCheck:
    ok: bool
    witness: tuple = ()

    def __bool__(self):
        return self.ok


def is_chord_diagram(fg: FatGraph, marks: Sequence[str], partition=None) -> ChordCheck:
    """Incoming/outgoing chord-diagram test; witness lists offending edge ids."""
    part = (partition or boundary_cycles(fg)).with_marks(marks)
    for i, m in enumerate(part.marks):
        if m not in (IN, OUT):
            raise FatGraphError(f"boundary cycle {i} is unmarked")
    where = part.cycle_of()
    bad = []
    for h in fg.half_edges:
        on_in = part.marks[where[h]] == IN
        rev_out = part.marks[where[reverse(h)]] == OUT
        if on_in != rev_out and h[0] not in bad:
            bad.append(h[0])
    return ChordCheck(not bad, tuple(bad))


@dataclass(frozen=True)
class Cylinder:
    side: str
    circumference: float
    word: tuple  # ((oriented edge, start, end), ...)


@dataclass(frozen=True)
class CylinderComplex:
    cylinders: tuple

    def to_text(self):
        lines = []
        for i, c in enumerate(self.cylinders):
            span = "(-inf,0]" if c.side == IN else "[0,+inf)"
            word = " ".join(f"{fmt_oriented(h)}[{a:.12g},{b:.12g})" for h, a, b in c.word)
            lines.append(f"cylinder {i} side={c.side} t={span} circumference={c.circumference:.12g} word={word}")
        return "\n".join(lines) + "\n"


def build_mapping_cylinder(fg: FatGraph, lengths: Mapping[str, float], marks) -> CylinderComplex:
    """One half-infinite cylinder per boundary cycle, glued along its attaching word.

    The phase of each attaching word starts at the least oriented edge of the
    cycle.
    """
    for e in fg.underlying.edges:
        if e.id not in lengths:
            raise FatGraphError(f"edge {e.id} has no length")
        if not lengths[e.id] > 0:
            raise FatGraphError(f"nonpositive length on edge {e.id}")
    part = boundary_cycles(fg)
    chk = is_chord_diagram(fg, marks, part)
    if not chk:
        raise FatGraphError(f"not a chord diagram (edges {', '.join(chk.witness)})")
    cyls = []
    for cyc, side in zip(part.cycles, marks):
        pos = 0.0
        word = []
        for h in cyc:
            nxt = pos + float(lengths[h[0]])
            word.append((h, pos, nxt))
            pos = nxt
        cyls.append(Cylinder(side, pos, tuple(word)))
    return CylinderComplex(tuple(cyls))


def parse_fat_graph(text, require_trivalent=True):
    """Graph format plus ``cyclic``, ``mark`` and ``length`` lines.

    Returns ``(fat_graph, marks, lengths)``; marks are indexed by the
    canonical boundary-cycle order (0-based).
    """
    g, rest = parse_graph(text, extra=("cyclic", "mark", "length"))
    orders, marks, lengths = {}, {}, {}
    for lineno, cols, tok in rest:
        if tok[0] == "cyclic":
            if len(tok) < 3:
                raise FatGraphError(f"line {lineno}: expected 'cyclic <vertex> <half-edge>...'")
            orders[tok[1]] = tuple(parse_half_edge(t) for t in tok[2:])
        elif tok[0] == "mark":
            if len(tok) != 3 or tok[2] not in (IN, OUT):
                raise FatGraphError(f"line {lineno}: expected 'mark <cycle-index> in|out'")
            marks[int(tok[1])] = tok[2]
        else:
            if len(tok) != 3:
                raise FatGraphError(f"line {lineno}: expected 'length <edge-id> <float>'")
            lengths[tok[1]] = float(tok[2])
    fg = FatGraph(g, orders, require_trivalent)
    mark_list = None
    if marks:
        n = len(boundary_cycles(fg).cycles)
        if sorted(marks) != list(range(n)):
            raise FatGraphError(f"marks must cover cycles 0..{n - 1}")
        mark_list = [marks[i] for i in range(n)]
    return fg, mark_list, lengths


def random_fat_graph(n_edges, rng: random.Random, max_tries=1000) -> FatGraph:
    """Random connected fat graph with every vertex at least trivalent.

    Half-edges are grouped into vertices of random valence >= 3 and paired at
    random; loops and multiple edges are allowed.
    """
    for _ in range(max_tries):
        total = 2 * n_edges
        valences = []
        left = total
        while left:
            if left < 6:
                valences.append(left)
                break
            k = rng.randint(3, min(left - 3, 8)) if left >= 6 else left
            valences.append(k)
            left -= k
        slots = [(f"v{i}", j) for i, k in enumerate(valences) for j in range(k)]
        rng.shuffle(slots)
        edges = []
        halves = {}
        for i in range(n_edges):
            (a, ja), (b, jb) = slots[2 * i], slots[2 * i + 1]
            eid = f"e{i:02d}"
            edges.append(Edge(eid, a, b))
            halves[(a, ja)] = (eid, SRC)
            halves[(b, jb)] = (eid, DST)
        vs = [f"v{i}" for i in range(len(valences))]
        try:
            g = OrientedGraph(tuple(vs), tuple(edges), vs[0], {})
        except Exception:
            continue
        orders = {}
        for i, k in enumerate(valences):
            hs = [halves[(f"v{i}", j)] for j in range(k)]
            rng.shuffle(hs)
            orders[f"v{i}"] = tuple(hs)
        return FatGraph(g, orders)
    raise FatGraphError("could not generate a connected fat graph")
