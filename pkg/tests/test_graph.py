import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sppdm.errors import DisconnectedGraph, DuplicateEdge, GraphError, NonFinite, SelfLoop
from sppdm.graph import (
    build_graph,
    circle,
    complete,
    from_edges,
    incidence_matrices,
    metropolis_weights,
    path,
    random_connected,
    spectral_norm,
)


def test_circle3_is_triangle():
    g = circle(3)
    assert set(g.edges) == {(0, 1), (1, 2), (0, 2)}
    assert list(g.degrees) == [2, 2, 2]


def test_path2():
    g = path(2)
    assert g.edges == ((0, 1),)
    assert list(g.degrees) == [1, 1]


def test_circle20():
    g = circle(20)
    assert g.n_edges == 20
    assert np.all(g.degrees == 2)


def test_complete_degrees():
    g = complete(5)
    assert g.n_edges == 10 and np.all(g.degrees == 4)


def test_edges_canonical_and_sorted():
    g = from_edges(4, [(3, 2), (1, 0), (2, 1)])
    assert g.edges == ((0, 1), (1, 2), (2, 3))


@pytest.mark.parametrize(
    "n,edges,exc",
    [
        (3, [(0, 1)], DisconnectedGraph),
        (2, [(0, 0), (0, 1)], SelfLoop),
        (2, [(0, 1), (1, 0)], DuplicateEdge),
    ],
)
def test_invalid_graphs(n, edges, exc):
    with pytest.raises(exc):
        from_edges(n, edges)


def test_build_graph_descriptors():
    assert build_graph("circle(4)") == circle(4)
    assert build_graph(("path", 3)) == path(3)
    assert build_graph(("edges", 3), "0-1, 1-2").edges == path(3).edges
    with pytest.raises(GraphError):
        build_graph("torus(3)")


def test_incidence_path2():
    pair = incidence_matrices(path(2))
    assert pair.A.tolist() == [[1, -1]]
    assert pair.B.tolist() == [[1, 1]]


def test_incidence_circle3_laplacian():
    pair = incidence_matrices(circle(3))
    assert (pair.A.T @ pair.A).tolist() == [[2, -1, -1], [-1, 2, -1], [-1, -1, 2]]
    assert np.array_equal(pair.gram_sum(), 2 * np.diag([2, 2, 2]))


def test_incidence_rows():
    pair = incidence_matrices(random_connected(8, 0.4, np.random.default_rng(3)))
    assert np.all(pair.A.sum(axis=1) == 0)
    assert np.all((pair.A == 1).sum(axis=1) == 1) and np.all((pair.A == -1).sum(axis=1) == 1)
    assert np.all(pair.B.sum(axis=1) == 2)


def test_incidence_rebuild_bit_exact():
    g = random_connected(9, 0.3, np.random.default_rng(1))
    a, b = incidence_matrices(g), incidence_matrices(from_edges(9, list(reversed(g.edges))))
    assert np.array_equal(a.A, b.A) and np.array_equal(a.B, b.B)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(2, 12), p=st.floats(0, 1), seed=st.integers(0, 2**31))
def test_gram_identity_random_graphs(n, p, seed):
    g = random_connected(n, p, np.random.default_rng(seed))
    pair = incidence_matrices(g)
    assert pair.A.dtype.kind == "i"
    assert np.array_equal(pair.gram_sum(), 2 * np.diag(g.degrees))
    assert np.array_equal(pair.A.T @ pair.A, g.laplacian())


def test_metropolis_examples():
    assert np.allclose(metropolis_weights(path(2)), [[0.5, 0.5], [0.5, 0.5]])
    assert np.allclose(metropolis_weights(circle(3)), np.full((3, 3), 1 / 3))
    W = metropolis_weights(circle(4))
    assert W[0, 1] == pytest.approx(1 / 3) and W[0, 2] == 0 and W[0, 0] == pytest.approx(1 / 3)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 12), p=st.floats(0, 1), seed=st.integers(0, 2**31))
def test_metropolis_properties(n, p, seed):
    g = random_connected(n, p, np.random.default_rng(seed))
    W = metropolis_weights(g)
    assert np.array_equal(W, W.T)
    assert np.max(np.abs(W.sum(axis=1) - 1)) <= 1e-15
    assert np.all(np.diag(W) >= 0)
    off = (W != 0) & ~np.eye(n, dtype=bool)
    adj = np.zeros((n, n), dtype=bool)
    for i, j in g.edges:
        adj[i, j] = adj[j, i] = True
    assert np.array_equal(off, adj)


def test_spectral_norm_examples():
    assert spectral_norm(np.eye(3)) == pytest.approx(1.0, rel=1e-10)
    assert spectral_norm(incidence_matrices(path(2)).A) == pytest.approx(np.sqrt(2), rel=1e-10)
    # oracle: dense eigensolve of the triangle Laplacian
    lap = incidence_matrices(circle(3)).A.astype(float)
    ref = np.sqrt(np.linalg.eigvalsh(lap.T @ lap).max())
    assert spectral_norm(lap) == pytest.approx(ref, rel=1e-10)
    assert ref == pytest.approx(np.sqrt(3), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 12), p=st.floats(0, 1), seed=st.integers(0, 2**31))
def test_spectral_norm_matches_svd(n, p, seed):
    A = incidence_matrices(random_connected(n, p, np.random.default_rng(seed))).A
    assert spectral_norm(A) == pytest.approx(np.linalg.svd(A.astype(float), compute_uv=False)[0], rel=1e-10)


def test_spectral_norm_nonfinite():
    with pytest.raises(NonFinite):
        spectral_norm(np.array([[1.0, np.nan]]))
