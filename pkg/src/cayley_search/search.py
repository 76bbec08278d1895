"""Critical jumping rates, stage schedules and search runs.

A stage evolves the walker under ``H(gamma)`` for half a beat period
``pi / (E_j - E_i)`` of the eigenpair that shares the current amplitude.  On
an unweighted tree of height ``r`` the amplitude moves inward through ``r``
such avoided crossings at ``gamma ~ r, r-1, ..., 1``; suitable layer weights
merge them into one crossing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .graph import CayleySpec, WeightedGraph
from .operators import NumericalError, SpectralDecomposition, eigendecompose, evolve_exact, evolve_krylov, laplacian
from .records import ExperimentRecord
from .subspace import (
    OrbitBasis,
    ReducedSystem,
    SymmetryBroken,
    equitable_partition,
    label_basis,
    lift,
    orbit_reduce,
    reduce_partition,
    verify_closure,
)

__all__ = [
    "NoCrossingError",
    "Stage",
    "SearchSchedule",
    "OverlapSpectrum",
    "overlap_sweep",
    "transfer_quality",
    "find_critical_gamma",
    "dominant_pair",
    "plan_schedule",
    "paper_two_stage_schedule",
    "run_search",
    "search_space",
    "two_level_population",
    "expected_time_to_success",
    "golden_section_max",
]

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
# smallest gap, relative to the spectral radius, that double precision resolves
GAP_RESOLUTION = 100 * np.finfo(float).eps


class NoCrossingError(NumericalError):
    """No avoided crossing was found inside the search bracket."""


@dataclass(frozen=True)
class Stage:
    gamma: float
    duration: float
    eigenpair: tuple[int, int] = (0, 1)
    gap: float = math.nan
    source_label: str = ""
    target_label: str = ""

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"jumping rate must be positive, got {self.gamma}")
        if not self.duration >= 0:
            raise ValueError(f"stage duration must be non-negative, got {self.duration}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "gamma": self.gamma,
            "duration": self.duration,
            "eigenpair": list(self.eigenpair),
            "gap": self.gap,
            "source_label": self.source_label,
            "target_label": self.target_label,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Stage:
        d = dict(d)
        if "eigenpair" in d:
            d["eigenpair"] = tuple(d["eigenpair"])
        return cls(**d)


@dataclass(frozen=True)
class SearchSchedule:
    stages: tuple[Stage, ...] = ()
    mode: str = "custom"

    @property
    def total_time(self) -> float:
        return float(sum(s.duration for s in self.stages))

    def __len__(self) -> int:
        return len(self.stages)

    def to_dict(self) -> dict[str, Any]:
        return {"mode": self.mode, "stages": [s.to_dict() for s in self.stages]}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> SearchSchedule:
        return cls(tuple(Stage.from_dict(s) for s in d.get("stages", [])), d.get("mode", "custom"))


def two_level_population(gap: float, t) -> np.ndarray | float:
    """Target population ``(1 - cos(gap t)) / 2`` of an ideal two-level transfer."""
    if not gap > 0:
        raise ValueError("gap must be positive")
    return (1.0 - np.cos(gap * np.asarray(t))) / 2.0


def expected_time_to_success(p: float, t: float) -> float:
    """Mean total time ``t / p`` when runs of length ``t`` are repeated until success."""
    if not 0 < p <= 1:
        raise ValueError(f"success probability must lie in (0, 1], got {p}")
    if t < 0:
        raise ValueError("time must be non-negative")
    return t / p


# --- reduced systems and spectra -----------------------------------------

SystemLike = Union[ReducedSystem, CayleySpec, WeightedGraph, Callable[[float], ReducedSystem]]


def _builder(system: SystemLike) -> Callable[[float], ReducedSystem]:
    """gamma -> ReducedSystem; reductions are done once and re-targeted."""
    if isinstance(system, ReducedSystem):
        return system.at
    if isinstance(system, (CayleySpec, WeightedGraph)):
        return orbit_reduce(system, 1.0).at
    return system


def _decompose(system: ReducedSystem) -> SpectralDecomposition:
    return eigendecompose(system.h_eff)


def transfer_quality(decomp: SpectralDecomposition, source: np.ndarray, target: np.ndarray) -> float:
    """``max_i 4 |<target|psi_i>|^2 |<source|psi_i>|^2``; 1 at an ideal crossing."""
    return float(np.max(4.0 * decomp.overlaps(target) * decomp.overlaps(source)))


def dominant_pair(decomp: SpectralDecomposition, state: np.ndarray) -> tuple[int, int]:
    """Eigenpair ``(i, j)``, ``i < j``, maximising ``|<psi_i|state><psi_j|state>|``."""
    c = np.abs(decomp.amplitudes(state))
    prod = np.outer(c, c)
    np.fill_diagonal(prod, -1.0)
    i, j = np.unravel_index(int(np.argmax(prod)), prod.shape)
    return (int(min(i, j)), int(max(i, j)))


def golden_section_max(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-4) -> float:
    a, b = lo, hi
    c, d = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _grid_then_golden(f, lo, hi, grid, tol):
    gs = np.linspace(lo, hi, grid)
    vals = np.array([f(g) for g in gs])
    i = int(np.argmax(vals))
    a, b = gs[max(i - 1, 0)], gs[min(i + 1, grid - 1)]
    best = golden_section_max(f, a, b, tol)
    return (best, f(best)) if f(best) >= vals[i] else (float(gs[i]), float(vals[i]))


@dataclass
class OverlapSpectrum:
    """Eigenvalues and squared basis overlaps along a grid of jumping rates.

    ``overlaps[g, x, i] = |<x|psi_i>|^2`` for basis state ``x`` at
    ``gammas[g]``; ``s_overlaps[g, i]`` is the same for ``|s>``.
    """

    gammas: np.ndarray
    eigenvalues: np.ndarray
    overlaps: np.ndarray
    s_overlaps: np.ndarray
    tags: tuple[str, ...]

    def columns(self) -> list[str]:
        d = self.eigenvalues.shape[1]
        cols = ["gamma"] + [f"E{i}" for i in range(d)]
        cols += [f"ov_{t}_{i}" for t in self.tags for i in range(d)]
        return cols + [f"ov_s_{i}" for i in range(d)]

    def rows(self) -> list[list[float]]:
        out = []
        for g in range(len(self.gammas)):
            out.append([float(self.gammas[g]), *self.eigenvalues[g].tolist(), *self.overlaps[g].ravel().tolist(), *self.s_overlaps[g].tolist()])
        return out


def overlap_sweep(system: SystemLike, gamma_min: float, gamma_max: float, steps: int, tags: Sequence[str] | None = None) -> OverlapSpectrum:
    """Squared overlaps of basis states with eigenstates on a uniform gamma grid."""
    if not gamma_min > 0:
        raise ValueError("gamma_min must be positive")
    if steps < 1 or gamma_max < gamma_min:
        raise ValueError("need steps >= 1 and gamma_max >= gamma_min")
    gammas = np.linspace(gamma_min, gamma_max, steps)
    build = _builder(system)
    first = build(gammas[0])
    tags = tuple(first.basis.tags if tags is None else tags)
    pick = [first.basis.index(t) for t in tags]
    d = first.dim
    evals = np.empty((steps, d))
    ovl = np.empty((steps, len(tags), d))
    sov = np.empty((steps, d))
    for g, gamma in enumerate(gammas):
        dec = _decompose(build(gamma))
        evals[g] = dec.eigenvalues
        ovl[g] = (dec.eigenvectors[pick, :]) ** 2
        sov[g] = dec.overlaps(first.s_reduced)
    return OverlapSpectrum(gammas, evals, ovl, sov, tags)


def find_critical_gamma(
    system: SystemLike,
    source: str | np.ndarray,
    target: str | np.ndarray,
    bracket: tuple[float, float],
    tol: float = 1e-4,
    grid: int = 201,
    min_quality: float = 0.5,
) -> float:
    """Jumping rate maximising the source->target transfer quality in ``bracket``.

    Coarse grid scan followed by golden-section refinement to ``tol``.
    Raises :class:`NoCrossingError` if the best quality stays below
    ``min_quality``.
    """
    build = _builder(system)
    base = build(0.5 * (bracket[0] + bracket[1]))
    src, tgt = base.vector(source), base.vector(target)

    def quality(g):
        return transfer_quality(_decompose(build(g)), src, tgt)

    best, q = _grid_then_golden(quality, bracket[0], bracket[1], grid, tol)
    if q < min_quality:
        raise NoCrossingError(f"no avoided crossing in {bracket} (best quality {q:.3f})")
    return float(best)


def _gap_minimum(base: ReducedSystem, pair: tuple[int, int], bracket, grid=201, tol=1e-6) -> float:
    i, j = pair

    def neg_gap(g):
        e = np.linalg.eigvalsh(base.at(g).h_eff)
        return -(e[j] - e[i])

    best, _ = _grid_then_golden(neg_gap, bracket[0], bracket[1], grid, tol)
    return float(best)


def _label(system: ReducedSystem, state: np.ndarray) -> str:
    return system.basis.tags[int(np.argmax(np.abs(state) ** 2))]


def _resolved_gap(dec: SpectralDecomposition, pair: tuple[int, int]) -> float:
    gap = dec.gap(*pair)
    scale = float(np.max(np.abs(dec.eigenvalues)))
    if not gap > GAP_RESOLUTION * scale:
        raise NumericalError(f"gap {gap:.3g} is below double-precision resolution for a spectrum of size {scale:.3g}")
    return gap


def _height(tree) -> int:
    if isinstance(tree, CayleySpec):
        return tree.r
    if isinstance(tree, WeightedGraph) and tree.depth is not None:
        return int(tree.depth.max())
    raise ValueError("cannot infer tree height; pass stages=")


def plan_schedule(
    tree: CayleySpec | WeightedGraph,
    marked: int | None = None,
    mode: str = "multi_stage",
    refine: bool = True,
    bracket: tuple[float, float] = (0.5, 2.5),
    stages: int | None = None,
) -> SearchSchedule:
    """Plan a multi-stage or merged single-stage search on a (weighted) tree.

    ``multi_stage``: stage ``k`` runs near ``gamma = k`` for ``k = r..1``.
    With ``refine`` the rate is moved to the gap minimum of the active
    eigenpair within ``k +- 0.5``.  ``single_stage_auto``: one stage at the
    rate maximising the ``|s> -> |a>`` transfer quality inside ``bracket``,
    lasting ``pi / (E1 - E0)``.
    """
    base = _reduce_for_planning(tree, marked)
    if mode == "multi_stage":
        r = stages if stages is not None else _height(tree)
        cur = base.s_reduced.astype(complex)
        out = []
        for k in range(r, 0, -1):
            gamma = float(k)
            pair = dominant_pair(_decompose(base.at(gamma)), cur)
            if refine:
                gamma = _gap_minimum(base, pair, (k - 0.5, k + 0.5))
            dec = _decompose(base.at(gamma))
            pair = dominant_pair(dec, cur)
            gap = _resolved_gap(dec, pair)
            duration = math.pi / gap
            nxt = evolve_exact(dec, cur, duration)
            out.append(Stage(gamma, duration, pair, gap, _label(base, cur), _label(base, nxt)))
            cur = nxt
        return SearchSchedule(tuple(out), "multi_stage")
    if mode == "single_stage_auto":
        gamma = find_critical_gamma(base, "s", base.vector(base.basis.tags[base.a_index]), bracket)
        dec = _decompose(base.at(gamma))
        gap = _resolved_gap(dec, (0, 1))
        return SearchSchedule((Stage(gamma, math.pi / gap, (0, 1), gap, "s", base.basis.tags[base.a_index]),), "single_stage_auto")
    raise ValueError(f"unknown mode {mode!r}; expected 'multi_stage' or 'single_stage_auto'")


def paper_two_stage_schedule(M: int) -> SearchSchedule:
    """Fixed height-2 schedule: gamma=2 for pi M^1.5 / 4, then gamma=1 for pi M^0.5 / 2."""
    return SearchSchedule(
        (
            Stage(2.0, math.pi * M**1.5 / 4.0, (0, 1), 4.0 * M**-1.5, "s", "b"),
            Stage(1.0, math.pi * M**0.5 / 2.0, (0, 2), 2.0 * M**-0.5, "b", "a"),
        ),
        "fixed_two_stage",
    )


def _reduce_for_planning(tree, marked) -> ReducedSystem:
    if isinstance(tree, ReducedSystem):
        return tree
    space = search_space(tree, marked)
    if space.reduced is None:
        raise SymmetryBroken(math.inf)
    return space.reduced


# --- search runs ---------------------------------------------------------


class SearchSpace:
    """Where a run is propagated: a reduced orbit space or the full graph.

    Reduced spaces evolve by exact diagonalisation.  The full space uses the
    Krylov propagator on the sparse Hamiltonian, or exact dense
    diagonalisation when ``propagator="exact"``.
    """

    def __init__(
        self,
        kind: str,
        *,
        reduced: ReducedSystem | None = None,
        graph: WeightedGraph | None = None,
        marked: int | None = None,
        propagator: str = "krylov",
        tol: float = 1e-8,
    ):
        self.kind = kind
        self.reduced = reduced
        self.graph = graph
        self.propagator = propagator
        self.tol = tol
        if reduced is not None:
            self.L = reduced.laplacian
            self.initial = reduced.s_reduced.astype(complex)
            self.marked_index = reduced.a_index
            self.n_full = reduced.n_full
        else:
            self.L = laplacian(graph, sparse=True)
            self.n_full = graph.n
            self.initial = np.full(graph.n, 1.0 / math.sqrt(graph.n), dtype=complex)
            self.marked_index = marked
        self._cache: dict[float, SpectralDecomposition] = {}

    @property
    def dim(self) -> int:
        return len(self.initial)

    def hamiltonian(self, gamma: float):
        if self.reduced is None:
            n, m = self.n_full, self.marked_index
            return (-gamma * self.L - sp.csr_matrix(([1.0], ([m], [m])), shape=(n, n))).tocsr()
        H = -gamma * self.L
        H[self.marked_index, self.marked_index] -= 1.0
        return H

    def decomposition(self, gamma: float) -> SpectralDecomposition:
        if gamma not in self._cache:
            self._cache[gamma] = eigendecompose(self.hamiltonian(gamma))
        return self._cache[gamma]

    def evolve(self, psi: np.ndarray, gamma: float, t: float) -> np.ndarray:
        if self.reduced is not None or self.propagator == "exact":
            return evolve_exact(self.decomposition(gamma), psi, t)
        return evolve_krylov(self.hamiltonian(gamma), psi, t, tol=self.tol)

    def populations(self, psi: np.ndarray) -> dict[str, float]:
        """Probability per orbit group (per reduced basis state if no labels)."""
        p = np.abs(psi) ** 2
        if self.reduced is not None and (self.reduced.basis.members is None or self.graph is None or not self.graph.labelled):
            return {t: float(x) for t, x in zip(self.reduced.basis.tags, p)}
        if self.reduced is not None:
            p = np.abs(lift(self.reduced.basis, psi, self.n_full)) ** 2
        if self.graph is None or not self.graph.labelled:
            return {"marked": float(p[self.marked_index])}
        sums = np.bincount(self.graph.group, weights=p, minlength=len(self.graph.group_tags))
        return {t: float(x) for t, x in zip(self.graph.group_tags, sums)}


def search_space(
    tree: CayleySpec | WeightedGraph,
    marked: int | None = None,
    space: str = "auto",
    propagator: str = "krylov",
    tol: float = 1e-8,
) -> SearchSpace:
    """Choose the smallest exact evolution space for ``tree``.

    ``auto`` tries, in order: the closed-form orbit reduction, the label
    groups of a modified tree (if still closed under H), the coarsest
    equitable partition, and finally the full graph.
    """
    if isinstance(tree, CayleySpec):
        if space == "full":
            from .graph import build_cayley

            tree = build_cayley(tree)
        else:
            return SearchSpace("reduced", reduced=orbit_reduce(tree, 1.0, marked))
    graph = tree
    marked = graph.marked if marked is None else marked
    if marked is None:
        raise ValueError("no marked vertex given")
    if space == "full":
        return SearchSpace("full", graph=graph, marked=marked, propagator=propagator, tol=tol)
    if space not in ("auto", "reduced"):
        raise ValueError(f"unknown space {space!r}")
    if graph.cayley is not None and marked == graph.marked:
        return SearchSpace("reduced", reduced=orbit_reduce(graph, 1.0, marked), graph=graph)
    basis: OrbitBasis | None = None
    kind = "labels"
    if graph.labelled:
        try:
            basis = label_basis(graph, marked)
            if verify_closure(graph, 1.0, marked, basis) > 1e-8:
                basis = None
        except SymmetryBroken:
            basis = None
    if basis is None:
        kind = "equitable"
        basis = equitable_partition(graph, marked, max_cells=max(64, min(400, graph.n // 4)))
    if basis is None:
        if space == "reduced":
            raise SymmetryBroken(math.inf)
        return SearchSpace("full", graph=graph, marked=marked, propagator=propagator, tol=tol)
    return SearchSpace(kind, reduced=reduce_partition(graph, 1.0, basis), graph=graph)


def _graph_spec(tree) -> dict[str, Any]:
    if isinstance(tree, CayleySpec):
        return tree.to_dict()
    spec = dict(tree.meta.get("spec", {"kind": "edge_list", "n": tree.n}))
    for key in ("perturbation", "noise"):
        if key in tree.meta:
            spec.setdefault(key, tree.meta[key])
    return spec


def run_search(
    tree: CayleySpec | WeightedGraph | SearchSpace,
    schedule: SearchSchedule,
    marked: int | None = None,
    space: str = "auto",
    trace_samples: int = 0,
    propagator: str = "krylov",
    tol: float = 1e-8,
    seed: int | None = None,
) -> ExperimentRecord:
    """Start from the uniform state, apply each stage, measure the marked vertex.

    With ``trace_samples > 0`` every stage also records group populations
    at that many evenly spaced times (the probability-flow trace).
    """
    if isinstance(tree, SearchSpace):
        sp_ = tree
        graph_spec = _graph_spec(tree.graph) if tree.graph is not None else {"kind": "reduced", "dim": tree.dim}
    else:
        sp_ = search_space(tree, marked, space, propagator, tol)
        graph_spec = _graph_spec(tree)
    psi = sp_.initial.copy()
    trace: list[dict[str, Any]] = []
    t0 = 0.0
    norm_drift = 0.0
    for k, stage in enumerate(schedule.stages):
        if trace_samples:
            times = np.linspace(0.0, stage.duration, trace_samples + 1)
            cur = psi
            for a, b in zip(times[:-1], times[1:]):
                trace.append({"stage": k, "t": t0 + float(a), **sp_.populations(cur)})
                cur = sp_.evolve(cur, stage.gamma, float(b - a))
            psi = cur
        else:
            psi = sp_.evolve(psi, stage.gamma, stage.duration)
        norm_drift = max(norm_drift, abs(np.linalg.norm(psi) - 1.0))
        t0 += stage.duration
    if trace_samples:
        trace.append({"stage": len(schedule.stages) - 1, "t": t0, **sp_.populations(psi)})
    success = float(min(abs(psi[sp_.marked_index]) ** 2, 1.0))
    total = schedule.total_time
    expected = expected_time_to_success(success, total) if success > 0 else math.inf
    spec = {
        "graph": graph_spec,
        "schedule": schedule.to_dict(),
        "space": space,
        "seed": seed,
    }
    return ExperimentRecord(
        spec=spec,
        success=success,
        total_time=total,
        gaps=[s.gap for s in schedule.stages],
        expected_time=expected,
        stages=[s.to_dict() for s in schedule.stages],
        diagnostics={"space": sp_.kind, "dim": sp_.dim, "norm_drift": float(norm_drift), "trace": trace},
        seed=seed,
    )
