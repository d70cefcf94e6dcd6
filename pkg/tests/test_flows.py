import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from conftest import load_graph, load_structure, make_structure
from graphflow.errors import StructureError
from graphflow.flows import (
    Structure,
    aut_action_failures,
    aut_orbits,
    catalog_backend,
    cycle_data,
    cycle_residual,
    is_accepted,
    propagate_tree_flow,
    solve_graph_flows,
)
from graphflow.graphs import compute_automorphisms
from graphflow.metric import MetricStructure
from graphflow.morse import MorseBackend
from graphflow.morse.manifolds import _wrap

Y_LABELS = {"a": "t1", "b": "t2", "d": "t3"}


@pytest.fixture(scope="module")
def y_torus():
    return make_structure("y_graph.graph", {}, Y_LABELS, "torus")


@pytest.fixture(scope="module")
def lollipop_torus():
    return load_structure("lollipop_torus.struct", "torus")


@pytest.fixture(scope="module")
def lollipop_solution(lollipop_torus):
    top = catalog_backend("torus", "t1").critical_points[-1].id
    return solve_graph_flows(lollipop_torus, {"l": top})


def y_leaf_oracle(X, window):
    return {"i": oracles.torus_flow("t1", X, -window),
            "o1": oracles.torus_flow("t2", X, window),
            "o2": oracles.torus_flow("t3", X, window)}


# -- tree propagation -------------------------------------------------------------------


def test_y_leaf_values_example(y_torus):
    x = np.array([0.25, 0.25])
    f = propagate_tree_flow(y_torus, x)
    ref = y_leaf_oracle(x[None, :], 1.0)
    for leaf, p in ref.items():
        assert y_torus.manifold.distance(f.vertex_values[leaf][None, :], p)[0] < 1e-6
    assert f.residual == 0.0


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0.05, 2.0))
def test_y_leaf_values_random(x, y, window):
    s = make_structure("y_graph.graph", {}, Y_LABELS, "torus")
    X = np.array([x, y])
    f = propagate_tree_flow(s, X, leaf_window=window)
    for leaf, p in y_leaf_oracle(X[None, :], window).items():
        assert s.manifold.distance(f.vertex_values[leaf][None, :], p)[0] < 1e-6
    # basepoint is stored in the canonical chart [0, 1)
    assert np.array_equal(f.vertex_values["c"], X % 1.0)


def test_tree_has_empty_residual(y_torus):
    assert cycle_residual(y_torus, [0.3, 0.4]).shape == (0,)
    assert cycle_data(y_torus).cycle_edges == ()


def test_zero_length_edge_is_identity():
    s = make_structure("tree3.graph", {"e": 0.0}, {"a": "t1", "b": "t2", "e": "t4", "d": "t3"}, "torus")
    f = propagate_tree_flow(s, [0.37, 0.81])
    assert np.array_equal(f.vertex_values["c1"], f.vertex_values["c2"])


def test_distinct_basepoints_give_distinct_flows(y_torus):
    a = propagate_tree_flow(y_torus, [0.1, 0.2])
    b = propagate_tree_flow(y_torus, [0.1, 0.2 + 1e-6])
    assert not np.array_equal(a.vertex_values["c"], b.vertex_values["c"])


# -- cycle residual -----------------------------------------------------------------------------


def test_lollipop_residual_matches_closed_form(lollipop_torus):
    rng = np.random.default_rng(3)
    X = rng.random((40, 2))
    for x in X:
        r = cycle_residual(lollipop_torus, x)
        a = oracles.torus_flow("t2", x[None, :], 0.7)[0]
        b = oracles.torus_flow("t3", x[None, :], 0.5)[0]
        assert np.abs(r - _wrap(b - a)).max() < 1e-6


def test_lollipop_residual_vanishes_at_common_critical_point():
    g = load_graph("lollipop.graph")
    ms = MetricStructure(g, {"A": 0.7, "B": 0.5}, {"L": "f", "A": "g", "B": "h"})
    backends = {"f": MorseBackend.from_catalog("torus", "t1"),
                "g": MorseBackend.from_catalog("torus", "t2"),
                "h": MorseBackend.from_catalog("torus", "t3", sx=0.31, sy=0.23)}
    s = Structure(ms, backends)
    for c in backends["g"].critical_points:
        assert np.abs(cycle_residual(s, c.location)).max() < 1e-12


def _renamed_lollipop(s, old, new):
    g = s.graph.relabel(emap={old: new})
    ren = lambda d: {new if k == old else k: v for k, v in d.items()}
    return Structure(MetricStructure(g, ren(s.metric.lengths), ren(s.metric.labels)), s.backends)


def test_spanning_tree_choice(lollipop_torus, lollipop_solution):
    # renaming A to Z puts B into the spanning tree instead
    other = _renamed_lollipop(lollipop_torus, "A", "Z")
    assert cycle_data(lollipop_torus).tree_edges != cycle_data(other).tree_edges
    assert lollipop_solution.count > 0
    for f in lollipop_solution.flows:
        assert is_accepted(other, lollipop_solution.constraints, f.x)
    again = solve_graph_flows(other, lollipop_solution.constraints)
    assert again.count == lollipop_solution.count


# -- solver ---------------------------------------------------------------------------------


def test_lollipop_count_matches_fixed_point_oracle(lollipop_solution):
    assert lollipop_solution.count == oracles.lollipop_fixed_points("torus", "t2", 0.7, "t3", 0.5)
    assert lollipop_solution.count % 2 == 0


def test_edge_paths_close_up(lollipop_solution):
    for f in lollipop_solution.flows:
        s = f.structure
        m = s.manifold
        for e in s.graph.edges:
            if s.metric.is_half_infinite(e.id):
                continue
            end = f.edge_path(e.id).points[-1]
            assert m.distance(end[None, :], f.vertex_values[e.dst][None, :])[0] < 1e-6


def test_tree_without_constraints_is_full_dimensional(y_torus):
    r = solve_graph_flows(y_torus)
    assert r.positive_dimensional and r.dimension == 2
    assert r.summary().startswith("status=positive-dimensional dimension=2")


def test_open_constraint_is_positive_dimensional(y_torus):
    top = catalog_backend("torus", "t1").critical_points[-1]
    assert top.index == 2
    r = solve_graph_flows(y_torus, {"i": top.id})
    assert r.positive_dimensional and r.dimension == 2


def test_saddle_constraint_gives_curve(y_torus):
    sad = [c for c in catalog_backend("torus", "t1").critical_points if c.index == 1][0]
    r = solve_graph_flows(y_torus, {"i": sad.id})
    assert r.positive_dimensional and r.dimension == 1


def test_unknown_constraint_target(y_torus):
    with pytest.raises(StructureError):
        solve_graph_flows(y_torus, {"i": "c9_9"})
    with pytest.raises(StructureError, match="not a leaf"):
        solve_graph_flows(y_torus, {"c": "c0_0"})


def test_y_point_solution():
    s = load_structure("y_product_torus.struct", "torus")
    r = solve_graph_flows(s, {"i1": "c1_0", "i2": "c1_0", "o": "c0_0"})
    assert r.count == 1 and r.orbits == 1
    (f,) = r.flows
    assert f.limits == {"i1": "c1_0", "i2": "c1_0", "o": "c0_0"}
    assert r.summary().startswith("status=ok solutions=1 orbits=1 mod2=1")
    lines = r.to_csv().splitlines()
    assert lines[0] == "x1,x2,residual,limit.i1,limit.i2,limit.o"
    assert lines[1].endswith("c1_0,c1_0,c0_0")


def test_solver_deterministic():
    s = load_structure("y_product_torus.struct", "torus")
    c = {"i1": "c1_1", "i2": "c1_1", "o": "c0_0"}
    assert solve_graph_flows(s, c).to_csv() == solve_graph_flows(s, c).to_csv()


# -- automorphisms -----------------------------------------------------------------------------


def test_lollipop_aut_action(lollipop_solution):
    assert aut_action_failures(lollipop_solution) == []
    group = compute_automorphisms(lollipop_solution.structure.graph)
    assert len(aut_orbits(lollipop_solution)) == lollipop_solution.orbits
    # every automorphism fixes the basepoint, so each orbit is a single flow
    for a in group.elements:
        for f in lollipop_solution.flows:
            assert np.array_equal(f.vertex_values[a.vertex_map[f.structure.graph.basepoint]], f.x)
    assert lollipop_solution.orbits == lollipop_solution.count


def test_symmetric_lollipop_swap():
    # equal labels and lengths on A and B: the swap lies in the stabilizer
    g = load_graph("lollipop.graph")
    ms = MetricStructure(g, {"A": 0.6, "B": 0.6}, {"L": "t1", "A": "t2", "B": "t3"})
    s = Structure.from_catalog(ms, "torus")
    swapped = s.permuted(compute_automorphisms(g).elements[1])
    assert swapped.metric.labels["A"] == "t3"
    top = catalog_backend("torus", "t1").critical_points[-1].id
    r = solve_graph_flows(s, {"l": top})
    assert aut_action_failures(r) == []


def test_permuted_structure_round_trip(lollipop_torus):
    for a in compute_automorphisms(lollipop_torus.graph).elements:
        back = lollipop_torus.permuted(a).permuted(a)
        assert dict(back.metric.labels) == dict(lollipop_torus.metric.labels)
        assert all(math.isclose(back.metric.lengths[e], v) for e, v in lollipop_torus.metric.lengths.items())
