"""Network topologies and the matrices derived from them.

A :class:`Graph` is an undirected, connected, simple graph on nodes
``0..N-1``.  Edges are kept in canonical form ``(i, j)`` with ``i < j`` and
sorted lexicographically, so the row order of the incidence matrices is a
pure function of the edge set.

The Kronecker-extended operators acting on stacked agent vectors are never
formed; every operator here is ``N``-dimensional and is applied to ``(N, n)``
arrays row-wise.
"""
from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Tuple, Union

import numpy as np

from .errors import DisconnectedGraph, DuplicateEdge, GraphError, NonFinite, SelfLoop

__all__ = [
    "Graph",
    "IncidencePair",
    "build_graph",
    "circle",
    "path",
    "complete",
    "from_edges",
    "random_connected",
    "incidence_matrices",
    "metropolis_weights",
    "spectral_norm",
]

Edge = Tuple[int, int]


@dataclass(frozen=True)
class Graph:
    """Undirected connected simple graph.

    Construction validates the edge list; use :func:`build_graph` or one of
    the topology helpers rather than calling this directly.  A single node
    with no edges is accepted as the degenerate one-agent network.
    """

    n_nodes: int
    edges: Tuple[Edge, ...]
    name: str = "edges"
    degrees: np.ndarray = field(init=False, repr=False, compare=False)
    neighbors: Tuple[Tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = int(self.n_nodes)
        if n < 1:
            raise GraphError("graph needs at least one node")
        canon = []
        seen = set()
        for e in self.edges:
            i, j = int(e[0]), int(e[1])
            if i == j:
                raise SelfLoop(f"self-loop at node {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise GraphError(f"edge ({i}, {j}) references a node outside 0..{n - 1}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise DuplicateEdge(f"duplicate edge {key}")
            seen.add(key)
            canon.append(key)
        canon.sort()
        nbrs = [[] for _ in range(n)]
        for i, j in canon:
            nbrs[i].append(j)
            nbrs[j].append(i)
        neighbors = tuple(tuple(sorted(v)) for v in nbrs)
        degrees = np.array([len(v) for v in neighbors], dtype=np.int64)
        degrees.setflags(write=False)

        object.__setattr__(self, "n_nodes", n)
        object.__setattr__(self, "edges", tuple(canon))
        object.__setattr__(self, "neighbors", neighbors)
        object.__setattr__(self, "degrees", degrees)

        if n > 1:
            if not _is_connected(n, neighbors):
                raise DisconnectedGraph(f"graph {self.name!r} on {n} nodes is not connected")

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def max_degree(self) -> int:
        return int(self.degrees.max()) if self.n_nodes > 0 else 0

    def adjacency_csr(self):
        """Neighbour lists flattened as ``(indptr, indices)`` int64 arrays.

        Neighbours of node ``i`` are ``indices[indptr[i]:indptr[i+1]]`` in
        increasing order; the compiled kernels sum neighbour rows in exactly
        this order.
        """
        indptr = np.zeros(self.n_nodes + 1, dtype=np.int64)
        indptr[1:] = np.cumsum(self.degrees)
        indices = np.fromiter(
            (j for nb in self.neighbors for j in nb), dtype=np.int64, count=int(indptr[-1])
        )
        return indptr, indices

    def laplacian(self) -> np.ndarray:
        lap = np.diag(self.degrees.astype(np.int64))
        for i, j in self.edges:
            lap[i, j] -= 1
            lap[j, i] -= 1
        return lap

    def describe(self) -> str:
        return self.name


def _is_connected(n, neighbors):
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in neighbors[u]:
            if not seen[v]:
                seen[v] = True
                queue.append(v)
    return bool(seen.all())


def circle(n: int) -> Graph:
    if n < 2:
        raise GraphError("circle needs N >= 2")
    if n == 2:
        return Graph(2, ((0, 1),), name="circle(2)")
    edges = [(i, (i + 1) % n) for i in range(n)]
    return Graph(n, tuple(edges), name=f"circle({n})")


def path(n: int) -> Graph:
    if n < 2:
        raise GraphError("path needs N >= 2")
    return Graph(n, tuple((i, i + 1) for i in range(n - 1)), name=f"path({n})")


def complete(n: int) -> Graph:
    if n < 2:
        raise GraphError("complete graph needs N >= 2")
    edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    return Graph(n, tuple(edges), name=f"complete({n})")


def single() -> Graph:
    """The one-agent network (no edges)."""
    return Graph(1, (), name="single")


def from_edges(n: int, edges: Iterable[Sequence[int]]) -> Graph:
    return Graph(n, tuple(tuple(e) for e in edges), name="edges")


def random_connected(n: int, extra_edge_prob: float, rng: np.random.Generator) -> Graph:
    """Random spanning tree plus independent extra edges."""
    order = rng.permutation(n)
    edges = set()
    for k in range(1, n):
        parent = order[rng.integers(0, k)]
        child = order[k]
        edges.add((min(parent, child), max(parent, child)))
    for i in range(n):
        for j in range(i + 1, n):
            if (i, j) not in edges and rng.random() < extra_edge_prob:
                edges.add((i, j))
    return Graph(n, tuple(sorted(edges)), name=f"random({n})")


_TOPOLOGY_RE = re.compile(r"^\s*(circle|path|complete|single)\s*(?:\(\s*(\d*)\s*\))?\s*$")
_EDGE_RE = re.compile(r"(\d+)\s*-\s*(\d+)")

TopologySpec = Union[str, Graph, Tuple[str, int]]


def build_graph(spec: TopologySpec, edges: Iterable[Sequence[int]] | None = None) -> Graph:
    """Build a graph from a topology descriptor.

    Accepted forms: ``"circle(5)"``, ``"path(4)"``, ``"complete(3)"``,
    ``("circle", 5)``, or ``"edges(4)"`` / ``("edges", 4)`` together with
    an explicit edge list (pairs, or a string such as ``"0-1, 1-2"``).

    >>> build_graph("circle(3)").edges
    ((0, 1), (0, 2), (1, 2))
    """
    if isinstance(spec, Graph):
        return spec
    if isinstance(spec, tuple):
        kind, n = spec[0], int(spec[1])
    else:
        text = str(spec).strip()
        m = re.match(r"^\s*edges\s*\(\s*(\d+)\s*\)\s*$", text)
        if m:
            kind, n = "edges", int(m.group(1))
        else:
            m = _TOPOLOGY_RE.match(text)
            if not m:
                raise GraphError(f"unrecognised topology {spec!r}")
            kind = m.group(1)
            n = int(m.group(2)) if m.group(2) else 1
    if kind == "circle":
        return circle(n)
    if kind == "path":
        return path(n)
    if kind == "complete":
        return complete(n)
    if kind == "single":
        return single()
    if kind == "edges":
        if edges is None:
            raise GraphError("edge-list topology needs an edge list")
        if isinstance(edges, str):
            edges = [(int(a), int(b)) for a, b in _EDGE_RE.findall(edges)]
        return from_edges(n, edges)
    raise GraphError(f"unknown topology kind {kind!r}")


@dataclass(frozen=True)
class IncidencePair:
    """Signed (``A``) and signless (``B``) incidence matrices, ``|E| x N`` int64."""

    A: np.ndarray
    B: np.ndarray

    def gram_sum(self) -> np.ndarray:
        return self.A.T @ self.A + self.B.T @ self.B


def incidence_matrices(g: Graph) -> IncidencePair:
    """Row ``l`` for edge ``(i, j)``, ``i < j``: ``A[l, i] = 1``, ``A[l, j] = -1``."""
    A = np.zeros((g.n_edges, g.n_nodes), dtype=np.int64)
    for row, (i, j) in enumerate(g.edges):
        A[row, i] = 1
        A[row, j] = -1
    B = np.abs(A)
    A.setflags(write=False)
    B.setflags(write=False)
    return IncidencePair(A, B)


def metropolis_weights(g: Graph) -> np.ndarray:
    """Symmetric doubly stochastic mixing matrix with Metropolis weights."""
    N = g.n_nodes
    W = np.zeros((N, N))
    d = g.degrees
    for i, j in g.edges:
        w = 1.0 / (max(d[i], d[j]) + 1)
        W[i, j] = w
        W[j, i] = w
    for i in range(N):
        W[i, i] = 1.0 - W[i].sum()
    return W


def spectral_norm(m, tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Largest singular value by power iteration on ``m.T @ m``.

    The start vector is a fixed-seed draw from ``U[1, 2]^n``.  The all-ones
    vector lies in the kernel of every incidence matrix, and structured
    perturbations of it can be orthogonal to the top singular vector of a
    symmetric graph, so a generic but reproducible vector is used instead.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim == 1:
        m = m[None, :]
    if not np.all(np.isfinite(m)):
        raise NonFinite("matrix has non-finite entries")
    if m.size == 0:
        return 0.0
    n = m.shape[1]
    v = np.random.default_rng(0x5EED).uniform(1.0, 2.0, size=n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = m.T @ (m @ v)
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            return 0.0
        lam_new = float(v @ w)
        v = w / norm_w
        # the eigenvalue tail after a small step can be much larger than the
        # step itself when the top two eigenvalues are close
        if abs(lam_new - lam) <= 1e-3 * tol * abs(lam_new):
            lam = lam_new
            break
        lam = lam_new
    # one Rayleigh refinement on the converged direction
    lam = float(v @ (m.T @ (m @ v)))
    return float(np.sqrt(max(lam, 0.0)))
