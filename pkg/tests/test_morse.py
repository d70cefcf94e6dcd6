import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from conftest import fixture_text
from graphflow.config import DEFAULT_TOL
from graphflow.errors import MorseError
from graphflow.flows import catalog_backend
from graphflow.morse import (
    BACKWARD,
    CATALOG,
    FORWARD,
    MorseBackend,
    backend_from_config,
    euler_from_critical_points,
    homology_ranks,
    integrate_trajectory,
    morse_boundary,
)
from graphflow.morse.f2 import rank, row_reduce, solve

ENTRIES = [(m, k) for m in CATALOG for k in CATALOG[m]]
CHI = {"torus": 0, "sphere": 2, "rp2": 1}


def analytic_points(manifold, key):
    if manifold == "torus":
        return oracles.torus_critical_points(key)
    if CATALOG[manifold][key][0] == "height":
        return oracles.sphere_critical_points(key)
    return oracles.quadric_critical_points(manifold, key)


def fd_grad(b, X, h=1e-6):
    m = b.manifold
    out = np.empty((len(X), 2))
    for i in range(2):
        v = np.zeros((len(X), 2))
        v[:, i] = h
        out[:, i] = (b.value(m.retract(X, v)) - b.value(m.retract(X, -v))) / (2 * h)
    return out


# fourth-order central weights; second differences alone cannot reach 1e-6
STENCIL = {-2: 1 / 12, -1: -8 / 12, 1: 8 / 12, 2: -1 / 12}


def fd_hess(b, X, h=1e-3):
    m = b.manifold
    H = np.zeros((len(X), 2, 2))
    for i in range(2):
        for j in range(2):
            for a, wa in STENCIL.items():
                for c, wc in STENCIL.items():
                    v = np.zeros((len(X), 2))
                    v[:, i] += a * h
                    v[:, j] += c * h
                    H[:, i, j] += wa * wc * b.value(m.retract(X, v))
    return H / (h * h)


def frame_grad(b, X):
    g = b.grad(X)
    if b.manifold.ambient == 2:
        return g
    return np.einsum("nij,ni->nj", b.manifold.frame(X), g)


# -- critical points and homology ------------------------------------------------------


@pytest.mark.parametrize("manifold,key", ENTRIES)
def test_critical_points_match_formulas(manifold, key):
    b = catalog_backend(manifold, key)
    ref = analytic_points(manifold, key)
    assert len(b.critical_points) == len(ref)
    for p, idx in ref:
        d = [b.manifold.distance(c.location[None, :], p[None, :])[0] for c in b.critical_points]
        j = int(np.argmin(d))
        assert d[j] < 1e-6
        assert b.critical_points[j].index == idx
    assert euler_from_critical_points(b.critical_points) == CHI[manifold]


def test_standard_inventories():
    t = catalog_backend("torus", "torus.cos")
    assert sorted(c.index for c in t.critical_points) == [0, 1, 1, 2]
    s = catalog_backend("sphere", "sphere.height")
    assert sorted(c.index for c in s.critical_points) == [0, 2]
    r = catalog_backend("rp2", "rp2.quadric")
    assert sorted(c.index for c in r.critical_points) == [0, 1, 2]


@pytest.mark.parametrize("manifold,key,ranks", [
    ("torus", "torus.cos", (1, 2, 1)),
    ("torus", "t3", (1, 2, 1)),
    ("sphere", "sphere.height", (1, 0, 1)),
    ("sphere", "s4", (1, 0, 1)),
    ("rp2", "rp2.quadric", (1, 1, 1)),
    ("rp2", "p2", (1, 1, 1)),
])
def test_homology(manifold, key, ranks):
    b = catalog_backend(manifold, key)
    cx = morse_boundary(b)
    assert cx.check_d_squared()
    assert homology_ranks(cx) == ranks


def test_torus_counts_are_two():
    cx = morse_boundary(catalog_backend("torus", "torus.cos"))
    assert np.all(cx.counts[1] == 2) and np.all(cx.counts[2] == 2)


def test_rp2_boundary_even():
    cx = morse_boundary(catalog_backend("rp2", "rp2.quadric"))
    assert cx.counts[1].sum() == 2 and cx.counts[2].sum() == 2
    assert not cx.boundary[1].any() and not cx.boundary[2].any()


def test_f2_elimination():
    M = np.array([[1, 1, 0], [0, 1, 1], [1, 0, 1]], dtype=np.uint8)
    assert rank(M) == 2
    R, pivots = row_reduce(M)[:2]
    assert len(pivots) == 2
    x = solve(M, np.array([1, 0, 1], dtype=np.uint8))
    assert np.array_equal(M.astype(int) @ x % 2, [1, 0, 1])


# -- derivatives ---------------------------------------------------------------------


@pytest.mark.parametrize("manifold,key", ENTRIES)
def test_gradient_and_hessian_finite_differences(manifold, key):
    b = catalog_backend(manifold, key)
    rng = np.random.default_rng(7)
    X = b.manifold.random(1000, rng)
    g, fg = frame_grad(b, X), fd_grad(b, X)
    rel = np.abs(g - fg) / np.maximum(np.abs(g), 1.0)
    assert rel.max() <= 1e-6
    H, fH = b.hess(X), fd_hess(b, X)
    relh = np.abs(H - fH) / np.maximum(np.abs(H), 1.0)
    assert relh.max() <= 1e-6


def test_perturbed_functions_keep_derivatives():
    b = MorseBackend.from_catalog("torus", "torus.cos", delta=0.05, seed=3)
    X = b.manifold.random(200, np.random.default_rng(1))
    assert np.abs(frame_grad(b, X) - fd_grad(b, X)).max() < 1e-6
    q = MorseBackend.from_catalog("sphere", "s2", delta=0.05, seed=4)
    Y = q.manifold.random(200, np.random.default_rng(2))
    assert np.abs(frame_grad(q, Y) - fd_grad(q, Y)).max() < 1e-6


def test_rp2_functions_are_even():
    from graphflow.morse.functions import make_function
    f = make_function("rp2", "quadric", delta=0.1, seed=2)
    assert not np.any(f.w)
    with pytest.raises(ValueError, match="no function family"):
        make_function("rp2", "height")


# -- flows --------------------------------------------------------------------------------


@pytest.mark.parametrize("manifold,key", [("torus", "t1"), ("torus", "torus.cos"), ("sphere", "s2"),
                                          ("sphere", "sphere.height"), ("rp2", "p1"), ("rp2", "rp2.quadric")])
@pytest.mark.parametrize("direction,sign", [(FORWARD, 1), (BACKWARD, -1)])
def test_flow_matches_closed_form(manifold, key, direction, sign):
    b = catalog_backend(manifold, key)
    X = b.manifold.random(100, np.random.default_rng(11))
    for T in (0.1, 0.7, 2.0):
        Y = b.flow(X, T, direction)
        Z = oracles.closed_form_flow(manifold, key, X, sign * T)
        if b.manifold.ambient == 3:
            # compare chord length: arccos loses precision near zero
            if manifold == "rp2":
                Z = Z * np.where(np.sum(Y * Z, axis=1) < 0, -1.0, 1.0)[:, None]
            err = np.linalg.norm(Y - Z, axis=1)
        else:
            err = b.manifold.distance(Y, Z)
        assert err.max() < 1e-6


def test_trajectory_examples():
    b = catalog_backend("torus", "torus.cos")
    tr = integrate_trajectory(b, [0.25, 0.25], 0.0)
    assert len(tr.samples) == 1 and tr.samples[0][0] == 0.0
    tr = integrate_trajectory(b, [0.25, 0.25], 10.0)
    assert b.manifold.distance(tr.points[-1:], np.array([[0.5, 0.5]]))[0] < 1e-4
    s = catalog_backend("sphere", "sphere.height")
    tr = integrate_trajectory(s, [1.0, 0.0, 0.0], 30.0)
    assert np.linalg.norm(tr.points[-1] - [0, 0, -1]) < 1e-6
    with pytest.raises(MorseError):
        integrate_trajectory(b, [0.1, 0.1], -1.0)


def test_limit_examples():
    b = catalog_backend("torus", "torus.cos")
    at = {tuple(np.round(c.location, 6)): c.id for c in b.critical_points}
    assert b.limit_critical_point([0.25, 0.25], FORWARD) == at[(0.5, 0.5)]
    assert b.limit_critical_point([0.25, 0.25], BACKWARD) == at[(0.0, 0.0)]
    # y is already critical: forward stays on the x axis and ends at the saddle
    assert b.limit_critical_point([0.25, 0.0], FORWARD) == at[(0.5, 0.0)]
    assert b.limit_critical_point([0.25, 0.0], BACKWARD) == at[(0.0, 0.0)]
    for c in b.critical_points:
        assert b.limit_critical_point(c.location, FORWARD) == c.id
        assert b.limit_critical_point(c.location, BACKWARD) == c.id


@given(st.floats(0, 1), st.floats(0, 1), st.sampled_from(["t1", "t4", "torus.cos"]))
def test_value_nonincreasing_along_torus_flows(x, y, key):
    b = catalog_backend("torus", key)
    tr = integrate_trajectory(b, [x, y], 1.0)
    assert np.all(np.diff(b.value(tr.points)) <= 1e-12)


@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 0.1),
       st.sampled_from([("sphere", "s3"), ("rp2", "p2")]))
def test_value_nonincreasing_along_sphere_flows(v, entry):
    b = catalog_backend(*entry)
    x = np.asarray(v) / np.linalg.norm(v)
    tr = integrate_trajectory(b, x, 1.0)
    assert np.all(np.diff(b.value(tr.points)) <= 1e-12)


@pytest.mark.parametrize("manifold,key", [("torus", "torus.cos"), ("torus", "t2"), ("sphere", "s1"),
                                          ("rp2", "rp2.quadric"), ("rp2", "p3")])
def test_limits_stable_under_halved_step(manifold, key):
    b = catalog_backend(manifold, key)
    fine = b.with_tol(DEFAULT_TOL.with_overrides(h=DEFAULT_TOL.h / 2))
    X = b.manifold.random(1000, np.random.default_rng(5))
    for direction in (FORWARD, BACKWARD):
        a, c = b.limits(X, direction), fine.limits(X, direction)
        assert sum(p != q for p, q in zip(a, c)) <= 1


def test_invariant_curves_end_at_neighbors():
    b = catalog_backend("torus", "t1")
    for c in b.critical_points:
        if c.index != 1:
            continue
        _, ends_u = b.invariant_curve(c.id, "u")
        _, ends_s = b.invariant_curve(c.id, "s")
        assert [b.critical_point(e).index for e in ends_u] == [0, 0]
        assert [b.critical_point(e).index for e in ends_s] == [2, 2]


# -- configuration ---------------------------------------------------------------------------


def test_backend_config_files():
    for name, man in (("torus.cfg", "torus"), ("sphere.cfg", "sphere"), ("rp2.cfg", "rp2")):
        b = backend_from_config(fixture_text(name))
        assert b.manifold.name == man
    b = backend_from_config("manifold=torus\nfunction=cos\nparam.a=2\ntol.h=5e-4\n")
    assert b.tol.h == 5e-4 and b.function.params["a"] == 2.0
    with pytest.raises(MorseError, match="unknown backend config key"):
        backend_from_config("manifold=torus\ncolor=red\n")
