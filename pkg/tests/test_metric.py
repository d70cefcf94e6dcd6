import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import fixture_text, load_graph
from graphflow.errors import StructureError
from graphflow.graphs import COLLAPSED, GraphMorphism, OrientedGraph, compose, identity, parse_morphism
from graphflow.metric import MetricStructure, SimplexPoint, assign_labels, parse_structure, simplex_metric
from graphflow.morse import CATALOG

# caterpillar -> (e collapsed) -> (e, f collapsed) = five-leaf star
CAT = OrientedGraph.from_edges(
    [("a", "i1", "c1"), ("b", "i2", "c1"), ("e", "c1", "c2"), ("c", "i3", "c2"),
     ("f", "c2", "c3"), ("g", "i4", "c3"), ("d", "c3", "o")],
    "c1", {"i1": "in", "i2": "in", "i3": "in", "i4": "in", "o": "out"})
MID = OrientedGraph.from_edges(
    [("a", "i1", "c1"), ("b", "i2", "c1"), ("c", "i3", "c1"),
     ("f", "c1", "c3"), ("g", "i4", "c3"), ("d", "c3", "o")],
    "c1", {"i1": "in", "i2": "in", "i3": "in", "i4": "in", "o": "out"})
STAR = OrientedGraph.from_edges(
    [("a", "i1", "s"), ("b", "i2", "s"), ("c", "i3", "s"), ("g", "i4", "s"), ("d", "s", "o")],
    "s", {"i1": "in", "i2": "in", "i3": "in", "i4": "in", "o": "out"})
LEAVES = {v: v for v in ("i1", "i2", "i3", "i4", "o")}
M1 = GraphMorphism(CAT, MID, dict(LEAVES, c1="c1", c2="c1", c3="c3"),
                   dict(a="a", b="b", c="c", d="d", e=COLLAPSED, f="f", g="g"))
M2 = GraphMorphism(MID, STAR, dict(LEAVES, c1="s", c3="s"),
                   dict(a="a", b="b", c="c", d="d", f=COLLAPSED, g="g"))
CHAIN = (M1, M2)


def simplex(t):
    return SimplexPoint(t, CHAIN)


barycentric = st.lists(st.floats(0.0, 1.0), min_size=3, max_size=3).filter(lambda v: sum(v) > 1e-3).map(
    lambda v: tuple(np.asarray(v) / sum(v)))


def fix_sum(t):
    t = list(t)
    t[-1] = 1.0 - sum(t[:-1])
    return tuple(max(x, 0.0) for x in t)


def test_one_simplex_example():
    src, tgt = load_graph("tree4_left.graph"), load_graph("star4.graph")
    m = parse_morphism(fixture_text("collapse_left.morph"), src, tgt)
    ms, zero = simplex_metric(SimplexPoint((0.3, 0.7), (m,)))
    assert ms.lengths == {"e": 0.7}
    assert zero == []


def test_zero_simplex_unit_lengths():
    g = load_graph("lollipop.graph")
    ms, _ = simplex_metric(SimplexPoint((1.0,), graph=g))
    assert ms.lengths == {"A": 1.0, "B": 1.0}


def test_two_simplex_example():
    ms, _ = simplex_metric(simplex((0.2, 0.3, 0.5)))
    assert math.isclose(ms.lengths["f"], 0.8)
    assert math.isclose(ms.lengths["e"], 0.5)


def test_face_reports_zero_edges():
    _, zero = simplex_metric(simplex((0.5, 0.5, 0.0)))
    assert zero == ["e"]


def test_simplex_point_validation():
    with pytest.raises(StructureError, match="sum to 1"):
        simplex((0.5, 0.6, 0.0))
    with pytest.raises(StructureError, match="nonnegative"):
        simplex((-0.1, 0.6, 0.5))
    with pytest.raises(StructureError, match="not composable"):
        SimplexPoint((0.2, 0.3, 0.5), (M2, M1))
    with pytest.raises(StructureError, match="coordinates"):
        SimplexPoint((0.5, 0.5), CHAIN)


@given(barycentric, barycentric)
def test_affine_in_t(t, u):
    t, u = fix_sum(t), fix_sum(u)
    mid = fix_sum(tuple((a + b) / 2 for a, b in zip(t, u)))
    lt = simplex_metric(simplex(t))[0].lengths
    lu = simplex_metric(simplex(u))[0].lengths
    lm = simplex_metric(simplex(mid))[0].lengths
    for e in lm:
        assert math.isclose(lm[e], (lt[e] + lu[e]) / 2, abs_tol=1e-12)


@given(barycentric)
def test_total_length(t):
    t = fix_sum(t)
    ms, _ = simplex_metric(simplex(t))
    internal = [e.id for e in CAT.edges if e.id not in CAT.leaf_edges]
    graphs = {2: {e: True for e in internal},
              1: {e: M1.edge_map[e] is not COLLAPSED for e in internal},
              0: {e: compose(M2, M1).edge_map[e] is not COLLAPSED for e in internal}}
    expected = sum(t[i] * sum(graphs[i].values()) for i in range(3))
    assert math.isclose(ms.total_length(), expected, abs_tol=1e-12)


@given(st.floats(0.0, 1.0))
def test_face_consistency(s):
    # t0 = 0: drop Gamma_0
    full = simplex_metric(simplex((0.0, s, 1.0 - s)))[0].lengths
    face = simplex_metric(SimplexPoint((s, 1.0 - s), (M1,)))[0].lengths
    assert all(math.isclose(full[e], face[e], abs_tol=1e-12) for e in full)
    # t1 = 0: compose around Gamma_1
    full = simplex_metric(simplex((s, 0.0, 1.0 - s)))[0].lengths
    face = simplex_metric(SimplexPoint((s, 1.0 - s), (compose(M2, M1),)))[0].lengths
    assert all(math.isclose(full[e], face[e], abs_tol=1e-12) for e in full)
    # t2 = 0: the top graph collapses onto Gamma_1; surviving edges agree
    full = simplex_metric(simplex((s, 1.0 - s, 0.0)))[0].lengths
    face = simplex_metric(SimplexPoint((s, 1.0 - s), (M2,)))[0].lengths
    assert full["e"] == 0.0
    for e, t in M1.edge_map.items():
        if t is not COLLAPSED and t in face:
            assert math.isclose(full[e], face[t], abs_tol=1e-12)


# -- labels -----------------------------------------------------------------------


def test_y_labels_distinct():
    g = load_graph("y_graph.graph")
    ms = MetricStructure(g, {}, {"a": "t1", "b": "t2", "d": "t3"})
    assert ms.length("a") == math.inf
    with pytest.raises(StructureError, match="labels not distinct at vertex c"):
        MetricStructure(g, {}, {"a": "t1", "b": "t1", "d": "t3"})


def test_lollipop_labels():
    ms = parse_structure(fixture_text("lollipop_torus.struct"))
    assert ms.lengths == {"A": 0.7, "B": 0.5}
    assert len(set(ms.labels.values())) == 3


def test_bivalent_through_vertex_may_repeat():
    g = load_graph("path2.graph")
    MetricStructure(g, {}, {"a": "t1", "d": "t1"})


def test_assign_labels_checks_catalog():
    ms = parse_structure(fixture_text("y_product_torus.struct"))
    with pytest.raises(StructureError, match="unknown catalog key"):
        assign_labels(ms, {"a": "nope", "b": "t2", "d": "t3"}, CATALOG["torus"])
    out = assign_labels(ms, {"a": "t4", "b": "t2", "d": "t3"}, CATALOG["torus"])
    assert out.labels["a"] == "t4"


def test_metric_validation():
    g = load_graph("lollipop.graph")
    with pytest.raises(StructureError, match="has no length"):
        MetricStructure(g, {"A": 1.0})
    with pytest.raises(StructureError, match="invalid length"):
        MetricStructure(g, {"A": 1.0, "B": -1.0})
    with pytest.raises(StructureError, match="unknown edge"):
        MetricStructure(g, {"A": 1.0, "B": 1.0, "Z": 1.0})


def test_structure_text_round_trip():
    ms = parse_structure(fixture_text("tree4_left_torus.struct"))
    again = parse_structure(ms.to_text())
    assert again.lengths == ms.lengths and again.labels == ms.labels
    assert again.graph == ms.graph


def test_identity_chain():
    g = load_graph("tree3.graph")
    ms, _ = simplex_metric(SimplexPoint((0.4, 0.6), (identity(g),)))
    assert ms.lengths == {"e": 1.0}
