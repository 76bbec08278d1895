from __future__ import annotations

import math

import numpy as np
import pytest

from cayley_search.connectivity import (
    DisconnectedGraph,
    algebraic_connectivity,
    average_connectivity,
    connectivity_report,
    edge_connectivity,
    laplacian_low_spectrum,
    normalized_algebraic_connectivity,
    vertex_connectivity,
)
from cayley_search.experiments import fit_power_law
from cayley_search.graph import CayleySpec, WeightedGraph, build_cayley, build_joined_complete


def complete(n: int) -> WeightedGraph:
    iu, iv = np.triu_indices(n, 1)
    return WeightedGraph(n, iu, iv, np.ones(len(iu)))


def random_graph(n: int, p: float, seed: int):
    rng = np.random.default_rng(seed)
    iu, iv = np.triu_indices(n, 1)
    keep = (rng.random(len(iu)) < p) | (iv == iu + 1)
    return WeightedGraph(n, iu[keep], iv[keep], np.ones(keep.sum())), rng


def with_random_extra_edge(g: WeightedGraph, rng) -> WeightedGraph:
    present = set(zip(g.u.tolist(), g.v.tolist()))
    missing = [(a, b) for a in range(g.n) for b in range(a + 1, g.n) if (a, b) not in present]
    a, b = missing[rng.integers(len(missing))]
    return WeightedGraph(g.n, [*g.u, a], [*g.v, b], [*g.w, 1.0])


@pytest.mark.parametrize("spec", [CayleySpec(1, 2), CayleySpec(2, 4), CayleySpec(3, 3)])
def test_trees_have_unit_vertex_and_edge_connectivity(spec):
    rep = connectivity_report(build_cayley(spec))
    assert rep.vertex_conn == 1
    assert rep.edge_conn == 1.0
    assert rep.average == 1.0


def test_weighted_tree_edge_connectivity_is_lightest_edge():
    g = build_cayley(CayleySpec(2, 4, (4.0, 1.0)))
    assert edge_connectivity(g) == 1.0
    assert vertex_connectivity(g) == 1


def test_complete_graph_k4():
    g = complete(4)
    assert algebraic_connectivity(g) == pytest.approx(4.0, abs=1e-12)
    assert vertex_connectivity(g) == 3
    assert edge_connectivity(g) == 3.0
    assert average_connectivity(g) == 3.0


def test_complete_graph_through_flow_path():
    # drop one edge so the complete-graph shortcut does not apply
    g = complete(5)
    keep = ~((g.u == 0) & (g.v == 1))
    h = WeightedGraph(5, g.u[keep], g.v[keep], g.w[keep])
    assert vertex_connectivity(h) == 3
    assert edge_connectivity(h) == 3.0


@pytest.mark.parametrize("n", [8, 64])
def test_joined_complete_has_a_bridge(n):
    rep = connectivity_report(build_joined_complete(n))
    assert rep.vertex_conn == 1
    assert rep.edge_conn == 1.0
    assert 0 < rep.algebraic < 1


def test_uniform_tree_algebraic_scaling_at_m100():
    g = build_cayley(CayleySpec(2, 100))
    n = g.n
    assert n == 10101
    lam = algebraic_connectivity(g)
    assert 0.5 / math.sqrt(n) <= lam <= 2 / math.sqrt(n)
    nlam = normalized_algebraic_connectivity(g)
    assert 0.5 / (2 * math.sqrt(n)) <= nlam <= 2 / (2 * math.sqrt(n))


def test_sparse_and_dense_spectra_agree(monkeypatch):
    import cayley_search.connectivity as c

    g = build_cayley(CayleySpec(2, 20))
    dense = algebraic_connectivity(g)
    monkeypatch.setattr(c, "DENSE_SPECTRUM_LIMIT", 10)
    assert algebraic_connectivity(g) == pytest.approx(dense, rel=1e-8)


def test_zero_eigenvalue_multiplicity_counts_components():
    # three disjoint paths
    u = [0, 1, 3, 4, 6, 7]
    v = [1, 2, 4, 5, 7, 8]
    g = WeightedGraph(9, u, v, np.ones(6))
    low = laplacian_low_spectrum(g, 4)
    assert np.sum(np.abs(low) < 1e-10) == 3
    assert low[3] > 1e-3


def test_disconnected_input_rejected():
    g = WeightedGraph(4, [0, 2], [1, 3], [1.0, 1.0])
    with pytest.raises(DisconnectedGraph):
        connectivity_report(g)


def test_algebraic_positive_iff_connected():
    g, _ = random_graph(10, 0.3, 0)
    assert algebraic_connectivity(g) > 1e-8
    h = WeightedGraph(4, [0, 2], [1, 3], [1.0, 1.0])
    assert abs(algebraic_connectivity(h)) < 1e-10


@pytest.mark.parametrize("seed", range(20))
def test_structural_measures_monotone_under_edge_addition(seed):
    g, rng = random_graph(9, 0.3, seed)
    h = with_random_extra_edge(g, rng)
    a, b = connectivity_report(g), connectivity_report(h)
    assert b.vertex_conn >= a.vertex_conn
    assert b.edge_conn >= a.edge_conn
    assert b.algebraic >= a.algebraic - 1e-12
    assert b.average >= a.average
    assert b.average_weighted >= a.average_weighted


def test_all_four_measures_monotone_under_edge_addition():
    drops = []
    for seed in range(20):
        g, rng = random_graph(9, 0.3, seed)
        h = with_random_extra_edge(g, rng)
        a, b = connectivity_report(g), connectivity_report(h)
        for key in ("vertex_conn", "edge_conn", "algebraic", "normalized_algebraic", "average"):
            if getattr(b, key) < getattr(a, key) - 1e-12:
                drops.append((seed, key))
    assert drops == []


def test_average_connectivity_matches_pairwise_flows():
    import networkx as nx

    g, _ = random_graph(8, 0.4, 3)
    G = nx.Graph()
    G.add_edges_from(zip(g.u.tolist(), g.v.tolist()), capacity=1.0)
    flows = [nx.maximum_flow_value(G, s, t) for s in range(8) for t in range(s + 1, 8)]
    assert average_connectivity(g) == pytest.approx(np.mean(flows))


def test_weighted_average_on_tree_uses_bottleneck():
    # path 0 -(3)- 1 -(1)- 2: pairs carry 3, 1, 1
    g = WeightedGraph(3, [0, 1], [1, 2], [3.0, 1.0])
    assert average_connectivity(g, weighted=True) == pytest.approx(5 / 3)
    assert average_connectivity(g) == 1.0


def test_algebraic_connectivity_exponent_for_height_two_trees():
    Ms = [10, 20, 40, 70, 100]
    ns, lams = [], []
    for M in Ms:
        g = build_cayley(CayleySpec(2, M))
        ns.append(g.n)
        lams.append(algebraic_connectivity(g))
    slope, _ = fit_power_law(ns, lams)
    assert abs(slope + 0.5) < 0.1


def test_report_round_trip():
    rep = connectivity_report(build_joined_complete(8))
    d = rep.to_dict()
    assert set(d) == {"vertex_conn", "edge_conn", "algebraic", "normalized_algebraic", "average", "average_weighted"}
