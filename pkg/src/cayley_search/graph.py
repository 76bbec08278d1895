"""Weighted Cayley trees, comparison graphs and their perturbed variants.

Vertices of a Cayley tree are numbered breadth-first (heap order), so the
children of vertex ``v`` are ``M*v + 1 .. M*v + M``.  The marked vertex is
the lowest-indexed leaf; the root-to-marked path is therefore the chain of
first children.  Every tree vertex carries an orbit tag relative to that
path:

* ``P{d}`` -- the path vertex at depth ``d`` (``P{r}`` is the marked leaf),
* ``D{k}.{d}`` -- vertices at depth ``d`` whose ancestry leaves the path
  right below depth ``k``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Union

import numpy as np

__all__ = [
    "GraphError",
    "CayleySpec",
    "WeightedGraph",
    "orbit_layout",
    "PAPER_LETTERS",
    "build_cayley",
    "build_geometric_cayley",
    "build_joined_complete",
    "ConnectGroupToRoot",
    "ResizeGroup",
    "ReweighEdge",
    "ResizeHalfGroups",
    "ConnectHalfGroupsToRoot",
    "RandomBinaryWeights",
    "Perturbation",
    "perturb",
    "add_gaussian_noise",
    "bottom_groups",
    "half_groups",
    "default_reweigh_edge",
    "graph_from_spec",
    "perturbation_from_dict",
    "write_edge_list",
    "read_edge_list",
]

NOISE_FLOOR = 1e-9

# Letters used for the six orbit states of a height-2 tree.
PAPER_LETTERS = {"P2": "a", "D1.2": "b", "D0.2": "c", "P1": "d", "D0.1": "e", "P0": "f"}


class GraphError(ValueError):
    """Invalid graph specification or perturbation request."""


@dataclass(frozen=True)
class CayleySpec:
    """Height, branching factor and per-layer edge weights of a Cayley tree.

    ``layer_weights[k]`` is the weight of every edge joining depth ``k`` to
    depth ``k + 1`` (depth 0 is the root).  ``None`` means all ones.
    """

    r: int
    M: int
    layer_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if int(self.r) != self.r or self.r < 1:
            raise GraphError(f"height r must be an integer >= 1, got {self.r!r}")
        if int(self.M) != self.M or self.M < 2:
            raise GraphError(f"branching factor M must be an integer >= 2, got {self.M!r}")
        object.__setattr__(self, "r", int(self.r))
        object.__setattr__(self, "M", int(self.M))
        weights = (1.0,) * self.r if self.layer_weights is None else tuple(float(w) for w in self.layer_weights)
        if len(weights) != self.r:
            raise GraphError(f"need {self.r} layer weights, got {len(weights)}")
        if not all(w > 0 and math.isfinite(w) for w in weights):
            raise GraphError(f"layer weights must be positive and finite: {weights}")
        object.__setattr__(self, "layer_weights", weights)

    @classmethod
    def geometric(cls, r: int, M: int, omega: float) -> CayleySpec:
        """Weights ``1, omega, omega**2, ...`` counted from the leaves upward."""
        if not omega > 0:
            raise GraphError(f"omega must be positive, got {omega!r}")
        return cls(r, M, tuple(float(omega) ** (r - 1 - k) for k in range(r)))

    @property
    def n(self) -> int:
        return (self.M ** (self.r + 1) - 1) // (self.M - 1)

    @property
    def uniform(self) -> bool:
        return all(w == 1.0 for w in self.layer_weights)

    def layer_start(self, d: int) -> int:
        """Index of the first vertex at depth ``d`` (also the path vertex)."""
        return (self.M**d - 1) // (self.M - 1)

    @property
    def marked(self) -> int:
        return self.layer_start(self.r)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "cayley", "r": self.r, "M": self.M, "layer_weights": list(self.layer_weights)}


def orbit_layout(r: int) -> list[tuple[str, int, int]]:
    """Ordered orbit groups ``(tag, k, d)`` of a height-``r`` tree.

    Deepest layer first; inside a layer the path vertex comes first, then
    off-path groups by decreasing divergence depth.  For ``r = 2`` this is
    the ordering a, b, c, d, e, f.  Path groups have ``k == d``.
    """
    out = []
    for d in range(r, -1, -1):
        out.append((f"P{d}", d, d))
        for k in range(d - 1, -1, -1):
            out.append((f"D{k}.{d}", k, d))
    return out


def orbit_size(M: int, k: int, d: int) -> int:
    return 1 if k == d else (M - 1) * M ** (d - k - 1)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True, order="C")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Undirected graph with positive edge weights, stored as ``u < v`` arrays.

    Tree builders also fill the label arrays (``depth``, ``group`` indexing
    into ``group_tags``, tree ``parent``) and the ``marked`` vertex.
    ``cayley`` is kept only while the graph is an untouched builder output;
    any perturbation clears it.
    """

    n: int
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    depth: np.ndarray | None = None
    group: np.ndarray | None = None
    group_tags: tuple[str, ...] = ()
    parent: np.ndarray | None = None
    marked: int | None = None
    cayley: CayleySpec | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.int64)
        v = np.asarray(self.v, dtype=np.int64)
        w = np.asarray(self.w, dtype=float)
        if not (u.shape == v.shape == w.shape) or u.ndim != 1:
            raise GraphError("edge arrays must be 1-d and of equal length")
        if len(u):
            if u.min() < 0 or v.min() < 0 or u.max() >= self.n or v.max() >= self.n:
                raise GraphError("vertex index out of range")
            if np.any(u == v):
                raise GraphError("self-loops are not allowed")
            if not np.all(w > 0) or not np.all(np.isfinite(w)):
                raise GraphError("edge weights must be positive and finite")
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        key = lo * self.n + hi
        if len(np.unique(key)) != len(key):
            raise GraphError("duplicate edge")
        object.__setattr__(self, "u", _readonly(lo))
        object.__setattr__(self, "v", _readonly(hi))
        object.__setattr__(self, "w", _readonly(w))
        for name in ("depth", "group", "parent"):
            arr = getattr(self, name)
            if arr is not None:
                object.__setattr__(self, name, _readonly(np.asarray(arr, dtype=np.int64)))
        if self.marked is not None and not 0 <= self.marked < self.n:
            raise GraphError("marked vertex out of range")

    @property
    def edges(self) -> list[tuple[int, int, float]]:
        return list(zip(self.u.tolist(), self.v.tolist(), self.w.tolist()))

    @property
    def n_edges(self) -> int:
        return len(self.u)

    @property
    def labelled(self) -> bool:
        return self.group is not None

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n)
        np.add.at(deg, self.u, self.w)
        np.add.at(deg, self.v, self.w)
        return deg

    def weight(self, a: int, b: int) -> float:
        lo, hi = min(a, b), max(a, b)
        hit = np.flatnonzero((self.u == lo) & (self.v == hi))
        return float(self.w[hit[0]]) if len(hit) else 0.0

    def children(self, vertex: int) -> np.ndarray:
        if self.parent is None:
            raise GraphError("graph carries no tree structure")
        return np.flatnonzero(self.parent == vertex)

    def with_weights(self, w: np.ndarray, **meta) -> WeightedGraph:
        return replace(self, w=np.asarray(w, dtype=float), cayley=None, meta={**self.meta, **meta})

    def fingerprint(self) -> str:
        """Hash of vertex count, edges and labels; used to check purity."""
        h = hashlib.sha256()
        h.update(str(self.n).encode())
        for arr in (self.u, self.v, self.w, self.depth, self.group, self.parent):
            if arr is not None:
                h.update(np.ascontiguousarray(arr).tobytes())
        h.update(repr((self.group_tags, self.marked)).encode())
        return h.hexdigest()

    def groups(self) -> dict[str, np.ndarray]:
        """Orbit tag -> member vertices, in layout order, empty groups dropped."""
        if self.group is None:
            raise GraphError("graph carries no group labels")
        order = np.argsort(self.group, kind="stable")
        bounds = np.searchsorted(self.group[order], np.arange(len(self.group_tags) + 1))
        return {
            tag: order[bounds[i] : bounds[i + 1]]
            for i, tag in enumerate(self.group_tags)
            if bounds[i + 1] > bounds[i]
        }


def build_cayley(spec: CayleySpec) -> WeightedGraph:
    """Rooted Cayley tree with per-layer weights and orbit labels."""
    r, M = spec.r, spec.M
    n = spec.n
    child = np.arange(1, n, dtype=np.int64)
    parent = np.concatenate([[-1], (child - 1) // M])
    starts = np.array([spec.layer_start(d) for d in range(r + 2)])
    depth = np.searchsorted(starts, np.arange(n), side="right") - 1
    weights = np.asarray(spec.layer_weights)[depth[parent[1:]]]

    # deepest depth at which each vertex's ancestor lies on the marked path
    path = starts[: r + 1]
    diverge = np.full(n, -1, dtype=np.int64)
    cur, cur_depth = np.arange(n), depth.copy()
    for _ in range(r + 1):
        hit = (diverge < 0) & (cur == path[cur_depth])
        diverge[hit] = cur_depth[hit]
        up = cur_depth > 0
        cur = np.where(up, parent[np.maximum(cur, 0)], cur)
        cur_depth = np.where(up, cur_depth - 1, cur_depth)

    layout = orbit_layout(r)
    index = {(k, d): i for i, (_, k, d) in enumerate(layout)}
    group = np.array([index[(k, d)] for k, d in zip(diverge.tolist(), depth.tolist())], dtype=np.int64)
    return WeightedGraph(
        n=n,
        u=parent[1:],
        v=child,
        w=weights,
        depth=depth,
        group=group,
        group_tags=tuple(t for t, _, _ in layout),
        parent=parent,
        marked=spec.marked,
        cayley=spec,
        meta={"spec": spec.to_dict()},
    )


def build_geometric_cayley(r: int, M: int, omega: float) -> WeightedGraph:
    spec = CayleySpec.geometric(r, M, omega)
    g = build_cayley(spec)
    return replace(g, meta={"spec": {"kind": "geometric", "r": r, "M": M, "omega": float(omega)}})


def build_joined_complete(n_total: int) -> WeightedGraph:
    """Two unit-weight cliques on ``n_total / 2`` vertices joined by one bridge."""
    if n_total < 4 or n_total % 2:
        raise GraphError(f"joined complete graph needs an even n_total >= 4, got {n_total}")
    h = n_total // 2
    iu, iv = np.triu_indices(h, k=1)
    u = np.concatenate([iu, iu + h, [h - 1]])
    v = np.concatenate([iv, iv + h, [h]])
    return WeightedGraph(n=n_total, u=u, v=v, w=np.ones(len(u)), meta={"spec": {"kind": "joined_complete", "n": n_total}})


# --- perturbations -------------------------------------------------------


@dataclass(frozen=True)
class ConnectGroupToRoot:
    """Wire every leaf of one bottom sibling group straight to the root."""

    parent: int | None = None
    weight: float = 1.0


@dataclass(frozen=True)
class ResizeGroup:
    """Change the number of leaves below one bottom-group parent to ``m``."""

    m: int
    parent: int | None = None


@dataclass(frozen=True)
class ReweighEdge:
    """Set the weight of one existing edge; ``None`` picks an off-path edge."""

    weight: float
    edge: tuple[int, int] | None = None


@dataclass(frozen=True)
class ResizeHalfGroups:
    """Resize the first half of all bottom sibling groups to ``m`` leaves."""

    m: int


@dataclass(frozen=True)
class ConnectHalfGroupsToRoot:
    """Wire the leaves of the first half of all bottom groups to the root."""

    weight: float = 1.0


@dataclass(frozen=True)
class RandomBinaryWeights:
    """Every edge independently gets weight 1 or 2 with equal probability."""

    seed: int = 42


Perturbation = Union[
    ConnectGroupToRoot, ResizeGroup, ReweighEdge, ResizeHalfGroups, ConnectHalfGroupsToRoot, RandomBinaryWeights
]

_PERTURBATION_TYPES = {
    "connect_group_to_root": ConnectGroupToRoot,
    "resize_group": ResizeGroup,
    "reweigh_edge": ReweighEdge,
    "resize_half_groups": ResizeHalfGroups,
    "connect_half_groups_to_root": ConnectHalfGroupsToRoot,
    "random_binary_weights": RandomBinaryWeights,
}
_PERTURBATION_NAMES = {v: k for k, v in _PERTURBATION_TYPES.items()}


def perturbation_to_dict(p: Perturbation) -> dict[str, Any]:
    d = {"type": _PERTURBATION_NAMES[type(p)]}
    for k, val in p.__dict__.items():
        if val is not None:
            d[k] = list(val) if isinstance(val, tuple) else val
    return d


def perturbation_from_dict(d: dict[str, Any]) -> Perturbation:
    d = dict(d)
    kind = d.pop("type", None)
    if kind not in _PERTURBATION_TYPES:
        raise GraphError(f"unknown perturbation type {kind!r}; expected one of {sorted(_PERTURBATION_TYPES)}")
    if "edge" in d and d["edge"] is not None:
        d["edge"] = tuple(int(x) for x in d["edge"])
    try:
        return _PERTURBATION_TYPES[kind](**d)
    except TypeError as exc:
        raise GraphError(f"bad arguments for {kind}: {exc}") from None


def _require_tree(graph: WeightedGraph) -> None:
    if graph.parent is None or graph.depth is None or graph.group is None or graph.marked is None:
        raise GraphError("perturbation needs a labelled Cayley-tree builder output")


def bottom_groups(graph: WeightedGraph) -> np.ndarray:
    """Parents of bottom sibling groups that do not contain the marked leaf."""
    _require_tree(graph)
    r = int(graph.depth.max())
    if r < 2:
        return np.array([], dtype=np.int64)
    marked_parent = graph.parent[graph.marked]
    cand = np.flatnonzero(graph.depth == r - 1)
    return cand[cand != marked_parent]


def half_groups(graph: WeightedGraph) -> np.ndarray:
    """First ``floor(G/2)`` of all ``G`` bottom-group parents, the marked leaf's group included."""
    _require_tree(graph)
    r = int(graph.depth.max())
    cand = np.flatnonzero(graph.depth == r - 1)
    return cand[: len(cand) // 2]


def _pick_group(graph: WeightedGraph, parent: int | None) -> int:
    eligible = bottom_groups(graph)
    if parent is None:
        if not len(eligible):
            raise GraphError("no bottom group without the marked leaf (tree too small)")
        return int(eligible[0])
    if parent not in set(eligible.tolist()):
        raise GraphError(f"vertex {parent} is not the parent of an unmarked bottom group")
    return int(parent)


def default_reweigh_edge(graph: WeightedGraph) -> tuple[int, int]:
    """First edge from an unmarked bottom-group parent to its first leaf."""
    p = _pick_group(graph, None)
    return p, int(graph.children(p)[0])


def _add_edges(graph: WeightedGraph, u, v, w, **meta) -> WeightedGraph:
    return replace(
        graph,
        u=np.concatenate([graph.u, np.asarray(u, dtype=np.int64)]),
        v=np.concatenate([graph.v, np.asarray(v, dtype=np.int64)]),
        w=np.concatenate([graph.w, np.asarray(w, dtype=float)]),
        cayley=None,
        meta={**graph.meta, **meta},
    )


def _resize(graph: WeightedGraph, sizes: dict[int, int]) -> WeightedGraph:
    """Give each listed bottom-group parent exactly ``sizes[p]`` leaves."""
    keep = np.ones(graph.n, dtype=bool)
    new_parents: list[int] = []
    for p, m in sizes.items():
        if m < 1:
            raise GraphError(f"group size must be >= 1, got {m}")
        kids = graph.children(p)
        if m < len(kids):
            keep[kids[m:]] = False
        else:
            new_parents.extend([p] * (m - len(kids)))
    old_index = np.flatnonzero(keep)
    remap = np.full(graph.n, -1, dtype=np.int64)
    remap[old_index] = np.arange(len(old_index))
    n_new = len(old_index) + len(new_parents)

    edge_keep = keep[graph.u] & keep[graph.v]
    added = np.arange(len(old_index), n_new)
    new_par = remap[np.asarray(new_parents, dtype=np.int64)] if new_parents else np.array([], dtype=np.int64)
    leaf_w = [graph.weight(p, int(graph.children(p)[0])) for p in new_parents]

    def extend(arr, extra):
        return np.concatenate([arr[old_index], extra])

    parent = graph.parent[old_index].copy()
    parent[parent >= 0] = remap[parent[parent >= 0]]
    src = np.asarray(new_parents, dtype=np.int64)
    return WeightedGraph(
        n=n_new,
        u=np.concatenate([remap[graph.u[edge_keep]], new_par]),
        v=np.concatenate([remap[graph.v[edge_keep]], added]),
        w=np.concatenate([graph.w[edge_keep], leaf_w]),
        depth=extend(graph.depth, graph.depth[src] + 1),
        group=extend(graph.group, np.array([graph.group[graph.children(int(q))[0]] for q in src], dtype=np.int64)),
        group_tags=graph.group_tags,
        parent=np.concatenate([parent, new_par]),
        marked=int(remap[graph.marked]),
        cayley=None,
        meta=dict(graph.meta),
    )


def perturb(graph: WeightedGraph, p: Perturbation) -> WeightedGraph:
    """Return a modified copy of a labelled tree; ``graph`` is left untouched."""
    _require_tree(graph)
    tag = {"perturbation": perturbation_to_dict(p)}
    if isinstance(p, ConnectGroupToRoot):
        kids = graph.children(_pick_group(graph, p.parent))
        return _add_edges(graph, np.zeros(len(kids)), kids, np.full(len(kids), p.weight), **tag)
    if isinstance(p, ConnectHalfGroupsToRoot):
        chosen = half_groups(graph)
        if not len(chosen):
            raise GraphError("no bottom groups to connect")
        kids = np.concatenate([graph.children(int(q)) for q in chosen])
        return _add_edges(graph, np.zeros(len(kids)), kids, np.full(len(kids), p.weight), **tag)
    if isinstance(p, ResizeGroup):
        out = _resize(graph, {_pick_group(graph, p.parent): int(p.m)})
        return replace(out, meta={**out.meta, **tag})
    if isinstance(p, ResizeHalfGroups):
        chosen = half_groups(graph)
        out = _resize(graph, {int(q): int(p.m) for q in chosen})
        return replace(out, meta={**out.meta, **tag})
    if isinstance(p, ReweighEdge):
        a, b = p.edge if p.edge is not None else default_reweigh_edge(graph)
        lo, hi = min(a, b), max(a, b)
        hit = np.flatnonzero((graph.u == lo) & (graph.v == hi))
        if not len(hit):
            raise GraphError(f"edge ({a}, {b}) does not exist")
        if not p.weight > 0:
            raise GraphError("edge weight must be positive")
        w = graph.w.copy()
        w[hit[0]] = p.weight
        return graph.with_weights(w, **tag)
    if isinstance(p, RandomBinaryWeights):
        rng = np.random.default_rng(p.seed)
        return graph.with_weights(rng.integers(1, 3, size=graph.n_edges).astype(float), **tag)
    raise GraphError(f"unsupported perturbation {p!r}")


def add_gaussian_noise(graph: WeightedGraph, sigma: float, seed: int = 42) -> WeightedGraph:
    """Multiply every weight by ``1 + xi`` with ``xi ~ N(0, sigma**2)`` i.i.d.

    Weights are floored at 1e-9 to stay positive.  ``sigma == 0`` returns the
    input unchanged.
    """
    if not sigma >= 0:
        raise GraphError(f"sigma must be non-negative, got {sigma!r}")
    if sigma == 0:
        return graph
    rng = np.random.default_rng(seed)
    w = graph.w * (1.0 + sigma * rng.standard_normal(graph.n_edges))
    return graph.with_weights(np.maximum(w, NOISE_FLOOR), noise={"sigma": float(sigma), "seed": int(seed)})


# --- JSON graph documents and edge lists ---------------------------------


def graph_from_spec(doc: dict[str, Any] | str | Path) -> WeightedGraph:
    """Build a graph from a JSON document (dict, JSON text or file path).

    ``{"kind": "cayley", "r": 2, "M": 100, "layer_weights": [100, 1],
    "perturbation": {"type": "resize_group", "m": 500},
    "noise": {"sigma": 1e-3, "seed": 7}}``.  ``kind`` may also be
    ``"geometric"`` (with ``omega``) or ``"joined_complete"`` (with ``n``).
    """
    if isinstance(doc, Path) or (isinstance(doc, str) and not doc.lstrip().startswith("{")):
        doc = json.loads(Path(doc).read_text())
    elif isinstance(doc, str):
        doc = json.loads(doc)
    kind = doc.get("kind", "cayley")
    try:
        if kind == "cayley":
            g = build_cayley(CayleySpec(doc["r"], doc["M"], doc.get("layer_weights")))
        elif kind == "geometric":
            g = build_geometric_cayley(doc["r"], doc["M"], doc["omega"])
        elif kind == "joined_complete":
            g = build_joined_complete(doc["n"])
        else:
            raise GraphError(f"unknown graph kind {kind!r}")
    except KeyError as exc:
        raise GraphError(f"graph spec is missing field {exc}") from None
    if doc.get("perturbation"):
        g = perturb(g, perturbation_from_dict(doc["perturbation"]))
    if doc.get("noise"):
        g = add_gaussian_noise(g, doc["noise"]["sigma"], doc["noise"].get("seed", 42))
    return replace(g, meta={**g.meta, "spec": dict(doc)})


def write_edge_list(graph: WeightedGraph, path: str | Path) -> None:
    lines = [f"# n={graph.n}"]
    lines += [f"{a} {b} {w!r}" for a, b, w in graph.edges]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edge_list(path: str | Path) -> WeightedGraph:
    n = None
    u, v, w = [], [], []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line[1:].strip().startswith("n="):
                n = int(line[1:].strip()[2:])
            continue
        a, b, c = line.split()
        u.append(int(a))
        v.append(int(b))
        w.append(float(c))
    if n is None:
        raise GraphError("edge list lacks the '# n=<n>' header")
    return WeightedGraph(n=n, u=np.array(u, dtype=np.int64), v=np.array(v, dtype=np.int64), w=np.array(w))

