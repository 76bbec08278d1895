"""Connectivity measures for comparing trees with better-connected graphs."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import networkx as nx
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from networkx.algorithms.flow import shortest_augmenting_path
from scipy.sparse.csgraph import connected_components

from .graph import WeightedGraph
from .operators import laplacian

__all__ = [
    "ConnectivityReport",
    "DisconnectedGraph",
    "connectivity_report",
    "algebraic_connectivity",
    "normalized_algebraic_connectivity",
    "laplacian_low_spectrum",
    "vertex_connectivity",
    "edge_connectivity",
    "average_connectivity",
    "to_networkx",
]

DENSE_SPECTRUM_LIMIT = 2000


class DisconnectedGraph(ValueError):
    pass


@dataclass(frozen=True)
class ConnectivityReport:
    vertex_conn: int
    edge_conn: float
    algebraic: float
    normalized_algebraic: float
    average: float
    average_weighted: float

    def to_dict(self) -> dict:
        return asdict(self)


def to_networkx(graph: WeightedGraph) -> nx.Graph:
    G = nx.Graph()
    G.add_nodes_from(range(graph.n))
    G.add_weighted_edges_from(graph.edges)
    return G


def _components(graph: WeightedGraph) -> int:
    A = sp.csr_matrix((graph.w, (graph.u, graph.v)), shape=(graph.n, graph.n))
    return connected_components(A, directed=False)[0]


def _is_tree(graph: WeightedGraph) -> bool:
    return graph.n_edges == graph.n - 1 and _components(graph) == 1


def _low_eigs(m, k: int) -> np.ndarray:
    n = m.shape[0]
    if n <= DENSE_SPECTRUM_LIMIT:
        return np.linalg.eigvalsh(m.toarray() if sp.issparse(m) else m)[:k]
    # shift-invert just below zero; m is positive semidefinite
    vals = spla.eigsh(sp.csc_matrix(m), k=k, sigma=-1e-5, which="LM", return_eigenvectors=False)
    return np.sort(vals)


def laplacian_low_spectrum(graph: WeightedGraph, k: int = 2) -> np.ndarray:
    """The ``k`` smallest eigenvalues of ``D - A``."""
    return _low_eigs(-laplacian(graph, sparse=True), k)


def algebraic_connectivity(graph: WeightedGraph) -> float:
    """Second-smallest eigenvalue of ``D - A`` (Fiedler value)."""
    return float(laplacian_low_spectrum(graph, 2)[1])


def normalized_algebraic_connectivity(graph: WeightedGraph) -> float:
    """Second-smallest eigenvalue of ``I - D^-1/2 A D^-1/2``."""
    deg = graph.degrees()
    if np.any(deg == 0):
        raise DisconnectedGraph("isolated vertex")
    s = 1.0 / np.sqrt(deg)
    A = sp.csr_matrix((graph.w, (graph.u, graph.v)), shape=(graph.n, graph.n))
    A = A + A.T
    N = sp.identity(graph.n, format="csr") - sp.diags(s) @ A @ sp.diags(s)
    return float(_low_eigs(N, 2)[1])


def vertex_connectivity(graph: WeightedGraph) -> int:
    """Minimum number of vertices whose removal disconnects the graph."""
    if graph.n <= 2 or _is_tree(graph):
        return 1
    if graph.n_edges == graph.n * (graph.n - 1) // 2:
        return graph.n - 1
    return int(nx.node_connectivity(to_networkx(graph), flow_func=shortest_augmenting_path))


def edge_connectivity(graph: WeightedGraph) -> float:
    """Weight of a global minimum cut (Stoer-Wagner); the lightest edge on a tree."""
    if _is_tree(graph):
        return float(graph.w.min())
    value, _ = nx.stoer_wagner(to_networkx(graph), weight="weight")
    return float(value)


def _pairwise_min_mean(n: int, u, v, w) -> float:
    """Mean over vertex pairs of the bottleneck weight on their tree path.

    Kruskal order, heaviest first: the edge that first joins two components
    is the bottleneck for every pair it connects.
    """
    parent = list(range(n))
    size = [1] * n

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    total = 0.0
    for k in np.argsort(-np.asarray(w), kind="stable"):
        a, b = find(int(u[k])), find(int(v[k]))
        if a == b:
            continue
        total += float(w[k]) * size[a] * size[b]
        if size[a] < size[b]:
            a, b = b, a
        parent[b] = a
        size[a] += size[b]
    return total / (n * (n - 1) / 2)


def average_connectivity(graph: WeightedGraph, weighted: bool = False) -> float:
    """Mean pairwise max-flow; unit edge capacities unless ``weighted``.

    All-pairs flows come from a Gomory-Hu tree (exact for every pair), and
    a tree is its own Gomory-Hu tree.
    """
    w = graph.w if weighted else np.ones(graph.n_edges)
    if _is_tree(graph):
        return _pairwise_min_mean(graph.n, graph.u, graph.v, w)
    G = nx.Graph()
    G.add_nodes_from(range(graph.n))
    for a, b, c in zip(graph.u.tolist(), graph.v.tolist(), w.tolist()):
        G.add_edge(a, b, capacity=c)
    T = nx.gomory_hu_tree(G, capacity="capacity", flow_func=shortest_augmenting_path)
    tu, tv, tw = zip(*[(a, b, d["weight"]) for a, b, d in T.edges(data=True)])
    return _pairwise_min_mean(graph.n, tu, tv, tw)


def connectivity_report(graph: WeightedGraph) -> ConnectivityReport:
    if graph.n < 2:
        raise ValueError("need at least two vertices")
    if _components(graph) != 1:
        raise DisconnectedGraph("connectivity report needs a connected graph")
    return ConnectivityReport(
        vertex_conn=vertex_connectivity(graph),
        edge_conn=edge_connectivity(graph),
        algebraic=algebraic_connectivity(graph),
        normalized_algebraic=normalized_algebraic_connectivity(graph),
        average=average_connectivity(graph),
        average_weighted=average_connectivity(graph, weighted=True),
    )
