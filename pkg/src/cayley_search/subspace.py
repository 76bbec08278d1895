"""Invariant-subspace reduction of search Hamiltonians on Cayley trees.

Each orbit group contributes one basis state, the normalised uniform
superposition over its members.  On an unperturbed (layer-weighted) tree the
span of these states contains both ``|s>`` and ``|a>`` and is closed under
``H``, so the walk can be simulated in ``(r+1)(r+2)/2`` dimensions no matter
how many vertices the tree has.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .graph import PAPER_LETTERS, CayleySpec, WeightedGraph, orbit_layout, orbit_size
from .operators import laplacian, search_hamiltonian

__all__ = [
    "SymmetryBroken",
    "OrbitBasis",
    "ReducedSystem",
    "orbit_reduce",
    "reduce_partition",
    "label_basis",
    "equitable_partition",
    "verify_closure",
    "lift",
    "reduced_dimension",
    "lanczos_closure_dim",
]

CLOSURE_TOL = 1e-8


class SymmetryBroken(RuntimeError):
    """The orbit basis is not invariant under H; use full-space evolution."""

    def __init__(self, residual: float):
        super().__init__(f"orbit basis not closed under H (residual {residual:.3e})")
        self.residual = residual


def reduced_dimension(r: int) -> int:
    return (r + 1) * (r + 2) // 2


@dataclass(frozen=True)
class OrbitBasis:
    """Ordered vertex groups; basis state ``i`` is uniform over ``members[i]``.

    ``members`` is ``None`` when the basis was derived from a ``CayleySpec``
    alone (the tree itself may be far too large to enumerate).
    """

    tags: tuple[str, ...]
    sizes: tuple[int, ...]
    a_index: int = 0
    members: tuple[np.ndarray, ...] | None = None

    @property
    def dim(self) -> int:
        return len(self.tags)

    @property
    def coefficients(self) -> np.ndarray:
        return 1.0 / np.sqrt(np.asarray(self.sizes, dtype=float))

    def index(self, name: str) -> int:
        """Position of a basis state by tag (``"P2"``) or letter (``"b"``, r=2 only)."""
        if name in self.tags:
            return self.tags.index(name)
        if len(self.tags) == 6:
            for tag, letter in PAPER_LETTERS.items():
                if letter == name and tag in self.tags:
                    return self.tags.index(tag)
        raise KeyError(f"no basis state named {name!r}")

    def projector(self, n: int) -> sp.csr_matrix:
        """Sparse ``n x dim`` isometry whose columns are the basis states."""
        if self.members is None:
            raise ValueError("basis has no vertex membership; build it from a graph")
        rows = np.concatenate(self.members)
        cols = np.repeat(np.arange(self.dim), [len(g) for g in self.members])
        vals = np.repeat(self.coefficients, [len(g) for g in self.members])
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, self.dim))


@dataclass(frozen=True)
class ReducedSystem:
    """Search Hamiltonian restricted to an invariant orbit subspace.

    ``laplacian`` is the reduced ``L``; ``h_eff`` is rebuilt from it for the
    stored ``gamma`` so that :meth:`at` can re-target another jumping rate
    without redoing the reduction.
    """

    basis: OrbitBasis
    laplacian: np.ndarray
    gamma: float
    s_reduced: np.ndarray
    n_full: int

    @property
    def a_index(self) -> int:
        return self.basis.a_index

    @property
    def dim(self) -> int:
        return self.basis.dim

    @property
    def h_eff(self) -> np.ndarray:
        h = -self.gamma * self.laplacian
        h[self.a_index, self.a_index] -= 1.0
        return h

    def at(self, gamma: float) -> ReducedSystem:
        return replace(self, gamma=float(gamma))

    def vector(self, name: str | np.ndarray) -> np.ndarray:
        """Reduced state for ``"s"``, an orbit tag or letter, or pass-through."""
        if not isinstance(name, str):
            return np.asarray(name)
        if name == "s":
            return self.s_reduced.copy()
        e = np.zeros(self.dim)
        e[self.basis.index(name)] = 1.0
        return e


def _analytic(spec: CayleySpec, gamma: float) -> ReducedSystem:
    r, M, w = spec.r, spec.M, spec.layer_weights
    layout = orbit_layout(r)
    idx = {(k, d): i for i, (_, k, d) in enumerate(layout)}
    dim = len(layout)
    A = np.zeros((dim, dim))
    deg = np.zeros(dim)
    for i, (_, k, d) in enumerate(layout):
        deg[i] = (w[d - 1] if d > 0 else 0.0) + (M * w[d] if d < r else 0.0)
    for d in range(r):
        pairs = [
            (idx[(d, d)], idx[(d + 1, d + 1)], w[d]),
            (idx[(d, d)], idx[(d, d + 1)], w[d] * math.sqrt(M - 1)),
        ]
        pairs += [(idx[(k, d)], idx[(k, d + 1)], w[d] * math.sqrt(M)) for k in range(d)]
        for i, j, val in pairs:
            A[i, j] = A[j, i] = val
    sizes = tuple(orbit_size(M, k, d) for _, k, d in layout)
    n = spec.n
    s = np.array([math.sqrt(sz / n) for sz in sizes])
    basis = OrbitBasis(tags=tuple(t for t, _, _ in layout), sizes=sizes, a_index=0)
    return ReducedSystem(basis=basis, laplacian=A - np.diag(deg), gamma=float(gamma), s_reduced=s, n_full=n)


def label_basis(graph: WeightedGraph, marked: int | None = None) -> OrbitBasis:
    """Orbit basis read off the group labels carried by a tree graph."""
    marked = graph.marked if marked is None else marked
    groups = graph.groups()
    tags = tuple(groups)
    members = tuple(groups[t] for t in tags)
    hits = [i for i, g in enumerate(members) if marked in set(g.tolist())]
    if not hits or len(members[hits[0]]) != 1:
        raise SymmetryBroken(float("inf"))
    return OrbitBasis(tags=tags, sizes=tuple(len(g) for g in members), a_index=hits[0], members=members)


def reduce_partition(graph: WeightedGraph, gamma: float, basis: OrbitBasis) -> ReducedSystem:
    """Project the graph Laplacian onto an arbitrary orbit basis."""
    P = basis.projector(graph.n)
    L = laplacian(graph, sparse=True)
    L_eff = (P.T @ (L @ P)).toarray()
    L_eff = 0.5 * (L_eff + L_eff.T)
    s = np.asarray(P.T @ np.full(graph.n, 1.0 / math.sqrt(graph.n))).ravel()
    return ReducedSystem(basis=basis, laplacian=L_eff, gamma=float(gamma), s_reduced=s, n_full=graph.n)


def verify_closure(graph: WeightedGraph, gamma: float, marked: int | None, basis: OrbitBasis) -> float:
    """Frobenius norm of ``(I - P) H P`` on the full graph.

    Computed as the spread of ``H @ indicator`` inside each cell, scaled by
    the column normalisation, so integer weights give an exact zero instead
    of cancellation noise from ``1/sqrt(size)`` products.
    """
    if basis.members is None:
        raise ValueError("basis has no vertex membership; build it from a graph")
    H = search_hamiltonian(graph, gamma, marked, sparse=True)
    sizes = np.array([len(m) for m in basis.members])
    cell = np.full(graph.n, -1)
    for i, m in enumerate(basis.members):
        cell[m] = i
    inside = cell >= 0
    S = sp.csr_matrix((np.ones(inside.sum()), (np.flatnonzero(inside), cell[inside])), shape=(graph.n, basis.dim))
    C = (H @ S).toarray()
    means = np.zeros((basis.dim, basis.dim))
    np.add.at(means, cell[inside], C[inside])
    means /= sizes[:, None]
    C[inside] -= means[cell[inside]]
    return float(np.linalg.norm(C / np.sqrt(sizes)[None, :]))


def orbit_reduce(tree: CayleySpec | WeightedGraph, gamma: float = 1.0, marked: int | None = None) -> ReducedSystem:
    """Reduce ``H(gamma)`` on a Cayley tree to its orbit subspace.

    A ``CayleySpec`` (or an untouched builder output, after a closure check
    on the full matrix) is reduced in closed form from group sizes and layer
    weights.  A modified labelled graph is
    projected onto its label groups; if that basis is not closed under H
    :class:`SymmetryBroken` is raised.
    """
    if isinstance(tree, CayleySpec):
        if marked is not None and marked != tree.marked:
            raise ValueError("the closed-form reduction assumes the lowest-indexed leaf is marked")
        return _analytic(tree, gamma)
    graph = tree
    marked = graph.marked if marked is None else marked
    if marked is None:
        raise ValueError("no marked vertex given")
    if graph.cayley is not None and marked == graph.marked:
        red = _analytic(graph.cayley, gamma)
        groups = graph.groups()
        basis = replace(red.basis, members=tuple(groups[t] for t in red.basis.tags))
        residual = verify_closure(graph, gamma, marked, basis)
        if residual > CLOSURE_TOL:
            raise SymmetryBroken(residual)
        return replace(red, basis=basis)
    if not graph.labelled:
        raise ValueError("graph has no orbit labels; use equitable_partition instead")
    basis = label_basis(graph, marked)
    residual = verify_closure(graph, gamma, marked, basis)
    if residual > CLOSURE_TOL:
        raise SymmetryBroken(residual)
    return reduce_partition(graph, gamma, basis)


def equitable_partition(graph: WeightedGraph, marked: int | None = None, max_cells: int = 400) -> OrbitBasis | None:
    """Coarsest weighted equitable partition that isolates the marked vertex.

    Colour refinement: a cell splits until every vertex of a cell sees the
    same total edge weight into every other cell.  The resulting cell states
    span an H-invariant subspace containing ``|s>`` and ``|a>``.  Returns
    ``None`` once the refinement exceeds ``max_cells`` cells.
    """
    marked = graph.marked if marked is None else marked
    n = graph.n
    W = sp.csr_matrix(
        (np.concatenate([graph.w, graph.w]), (np.concatenate([graph.u, graph.v]), np.concatenate([graph.v, graph.u]))),
        shape=(n, n),
    )
    scale = float(graph.w.max()) if graph.n_edges else 1.0
    colors = np.zeros(n, dtype=np.int64)
    colors[marked] = 1
    k = 2
    while True:
        C = sp.csr_matrix((np.ones(n), (np.arange(n), colors)), shape=(n, k))
        S = np.round((W @ C).toarray() / scale, 9)
        _, new = np.unique(np.column_stack([colors, S]), axis=0, return_inverse=True)
        new = new.ravel()
        k_new = int(new.max()) + 1
        if k_new == k:
            break
        colors, k = new, k_new
        if k > max_cells:
            return None
    order = np.argsort(colors, kind="stable")
    bounds = np.searchsorted(colors[order], np.arange(k + 1))
    cells = [order[bounds[i] : bounds[i + 1]] for i in range(k)]
    cells.sort(key=lambda c: (c[0] != marked, int(c[0])))
    return OrbitBasis(
        tags=tuple(f"cell{i}" for i in range(k)),
        sizes=tuple(len(c) for c in cells),
        a_index=0,
        members=tuple(cells),
    )


def lift(basis: OrbitBasis, reduced_state: np.ndarray, n: int) -> np.ndarray:
    """Embed a reduced state: amplitude ``c_i / sqrt(|g_i|)`` on each member."""
    if basis.members is None:
        raise ValueError("basis has no vertex membership")
    reduced_state = np.asarray(reduced_state)
    full = np.zeros(n, dtype=np.result_type(reduced_state, float))
    for amp, coef, members in zip(reduced_state, basis.coefficients, basis.members):
        full[members] = amp * coef
    return full


def lanczos_closure_dim(h: np.ndarray, vectors: Sequence[np.ndarray], tol: float = 1e-9) -> int:
    """Dimension of the smallest H-invariant span containing ``vectors``.

    Plain Gram-Schmidt Krylov closure; used as an independent check of the
    orbit dimension count.
    """
    basis: list[np.ndarray] = []

    def add(x):
        for b in basis:
            x = x - (b @ x) * b
        for b in basis:
            x = x - (b @ x) * b
        nrm = np.linalg.norm(x)
        if nrm > tol:
            basis.append(x / nrm)
            return True
        return False

    for v in vectors:
        add(np.asarray(v, dtype=float))
    frontier = list(basis)
    while frontier:
        nxt = []
        for x in frontier:
            if add(h @ x):
                nxt.append(basis[-1])
        frontier = nxt
    return len(basis)
