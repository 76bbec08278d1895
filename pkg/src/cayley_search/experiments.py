"""End-to-end sweeps and robustness studies with CSV/JSON persistence."""

from __future__ import annotations

import csv
import io
import json
import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .graph import (
    CayleySpec,
    Perturbation,
    WeightedGraph,
    add_gaussian_noise,
    graph_from_spec,
    perturb,
    perturbation_to_dict,
)
from .records import ExperimentRecord
from .search import SearchSchedule, Stage, plan_schedule, run_search
from .subspace import orbit_reduce
from .operators import eigendecompose

__all__ = [
    "ExperimentRecord",
    "merged_weights",
    "fixed_rate_schedule",
    "sweep_branching",
    "sweep_size_small_M",
    "gamma_deviation_study",
    "noise_study",
    "perturbation_study",
    "rerun",
    "format_csv",
    "write_csv",
    "write_sidecar",
    "fit_power_law",
]

FAIL_FRACTION = 0.5


def merged_weights(r: int, M: int) -> tuple[float, ...]:
    """Layer weights ``M**(r-1), ..., M, 1`` that merge all stages into one."""
    return tuple(float(M) ** (r - 1 - k) for k in range(r))


def fixed_rate_schedule(tree: CayleySpec, gamma: float, pair: tuple[int, int] = (0, 1)) -> SearchSchedule:
    """One stage at ``gamma`` lasting ``pi / (E_j - E_i)``."""
    dec = eigendecompose(orbit_reduce(tree, gamma).h_eff)
    gap = dec.gap(*pair)
    return SearchSchedule((Stage(gamma, math.pi / gap, pair, gap, "s", "P%d" % tree.r),), "fixed_rate")


def fit_power_law(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Least-squares ``log y = a + b log x``; returns ``(b, exp(a))``."""
    b, a = np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)
    return float(b), float(math.exp(a))


def _pmap(fn: Callable, items: Sequence, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    # spawn, not fork: forking after BLAS threads start can deadlock
    with ProcessPoolExecutor(max_workers=jobs, mp_context=multiprocessing.get_context("spawn")) as pool:
        return list(pool.map(fn, items))


def _branching_point(args) -> ExperimentRecord:
    r, M, mode = args
    if mode == "multi":
        tree = CayleySpec(r, M)
        schedule = plan_schedule(tree, mode="multi_stage")
    elif mode == "single":
        tree = CayleySpec(r, M, merged_weights(r, M))
        schedule = fixed_rate_schedule(tree, 1.0 + 1.0 / M)
    else:
        raise ValueError(f"unknown mode {mode!r}; expected 'multi' or 'single'")
    rec = run_search(tree, schedule)
    rec.extra.update({"r": r, "M": M, "N": tree.n, "mode": mode})
    return rec


def sweep_branching(r: int, M_list: Sequence[int], mode: str = "multi", jobs: int = 1) -> list[ExperimentRecord]:
    """Success versus branching factor.

    ``multi``: planned multi-stage search on uniform trees.  ``single``: one
    stage at ``gamma = 1 + 1/M`` on trees with :func:`merged_weights`.
    """
    if not M_list:
        raise ValueError("M_list must not be empty")
    return _pmap(_branching_point, [(r, int(M), mode) for M in M_list], jobs)


def sweep_size_small_M(r_list: Sequence[int], M: int = 2, omega: float = 3.0, gamma: float = 1.5) -> list[ExperimentRecord]:
    """Single-stage search at a fixed rate on geometrically weighted trees."""
    out = []
    for r in r_list:
        if r > 20:
            raise ValueError("heights above 20 are not supported")
        tree = CayleySpec.geometric(r, M, omega)
        schedule = fixed_rate_schedule(tree, gamma)
        rec = run_search(tree, schedule)
        gap = schedule.stages[0].gap
        rec.extra.update({"r": r, "M": M, "omega": omega, "N": tree.n, "gap": gap, "gap_sqrtN": gap * math.sqrt(tree.n)})
        out.append(rec)
    return out


def gamma_deviation_study(r: int = 3, M_list: Sequence[int] = (100, 500, 1000), gamma_mode: str = "low") -> list[ExperimentRecord]:
    """Runs slightly off the critical rate versus the critical-rate baseline.

    Trees carry :func:`merged_weights`.  ``gamma_mode`` selects the detuned
    rate: ``low`` is ``gamma = 1``, ``high`` is ``1 + 2/M``, ``both`` emits
    both.  Each record stores its baseline ``t0/p0`` at ``gamma = 1 + 1/M``.
    """
    modes = {"low": [0.0], "high": [2.0], "both": [0.0, 2.0]}
    if gamma_mode not in modes:
        raise ValueError(f"unknown gamma_mode {gamma_mode!r}")
    out = []
    for M in M_list:
        tree = CayleySpec(r, int(M), merged_weights(r, int(M)))
        base = run_search(tree, fixed_rate_schedule(tree, 1.0 + 1.0 / M))
        base_ratio = base.expected_time
        for c in modes[gamma_mode]:
            rec = run_search(tree, fixed_rate_schedule(tree, 1.0 + c / M))
            rec.extra.update(
                {
                    "r": r,
                    "M": int(M),
                    "gamma": 1.0 + c / M,
                    "baseline_success": base.success,
                    "baseline_time": base.total_time,
                    "baseline_expected_time": base_ratio,
                    "expected_time_ratio": rec.expected_time / base_ratio,
                }
            )
            out.append(rec)
    return out


def _base_tree(graph_spec: dict[str, Any]) -> WeightedGraph:
    doc = {k: v for k, v in graph_spec.items() if k not in ("noise", "perturbation")}
    return graph_from_spec(doc)


def _planned(tree: WeightedGraph, schedule_mode: str) -> SearchSchedule:
    if schedule_mode == "multi_stage":
        return plan_schedule(tree, mode="multi_stage")
    if schedule_mode == "single_stage_auto":
        return plan_schedule(tree, mode="single_stage_auto")
    if schedule_mode == "merged":
        M = tree.cayley.M
        return fixed_rate_schedule(tree.cayley, 1.0 + 1.0 / M)
    raise ValueError(f"unknown schedule mode {schedule_mode!r}")


def _noise_trial(args) -> float:
    base, schedule, sigma, seed, tol = args
    g = add_gaussian_noise(base, sigma, seed)
    space = "auto" if sigma == 0 else "full"
    return run_search(g, schedule, space=space, tol=tol).success


def noise_study(
    graph_spec: dict[str, Any],
    sigma_list: Sequence[float] = (1e-4, 1e-3, 1e-2, 1e-1),
    trials: int = 20,
    seed: int = 42,
    schedule_mode: str = "multi_stage",
    jobs: int = 1,
    tol: float = 1e-8,
) -> list[ExperimentRecord]:
    """Mean and spread of success under multiplicative Gaussian edge noise.

    The noiseless schedule is reused for every noisy graph; noisy graphs are
    propagated in the full space.  Trial ``i`` uses seed ``seed + i``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    base = _base_tree(graph_spec)
    schedule = _planned(base, schedule_mode)
    baseline = run_search(base, schedule).success
    out = []
    for sigma in sigma_list:
        args = [(base, schedule, float(sigma), seed + i, tol) for i in range(trials)]
        succ = np.array(_pmap(_noise_trial, args, jobs))
        std = float(succ.std(ddof=1)) if trials > 1 else 0.0
        rec = ExperimentRecord(
            spec={"graph": dict(graph_spec), "schedule": schedule.to_dict(), "sigma": float(sigma), "trials": trials, "seed": seed},
            success=float(succ.mean()),
            total_time=schedule.total_time,
            gaps=[s.gap for s in schedule.stages],
            expected_time=schedule.total_time / succ.mean() if succ.mean() > 0 else math.inf,
            stages=[s.to_dict() for s in schedule.stages],
            diagnostics={"space": "full" if sigma else "reduced", "trial_success": succ.tolist()},
            seed=seed,
            extra={
                "sigma": float(sigma),
                "trials": trials,
                "std": std,
                "stderr": std / math.sqrt(trials),
                "baseline_success": baseline,
                "relative_change": float(succ.mean() / baseline - 1.0),
            },
        )
        out.append(rec)
    return out


def perturbation_study(
    base_spec: dict[str, Any],
    perturbation: Perturbation,
    schedule_mode: str = "multi_stage",
    tol: float = 1e-8,
    replan: bool = False,
) -> ExperimentRecord:
    """Run the unperturbed tree's schedule on a perturbed copy of the tree.

    With ``replan`` the schedule is instead re-planned on the perturbed
    graph, which needs that graph to still reduce to a small subspace.
    """
    base = _base_tree(base_spec)
    schedule = _planned(base, schedule_mode)
    baseline = run_search(base, schedule).success
    g = perturb(base, perturbation)
    if replan:
        schedule = plan_schedule(g, mode=schedule_mode)
    rec = run_search(g, schedule, tol=tol)
    rec.extra.update(
        {
            "perturbation": json.dumps(perturbation_to_dict(perturbation), sort_keys=True),
            "N": g.n,
            "replan": replan,
            "baseline_success": baseline,
            "ratio": rec.success / baseline,
            "failed": rec.success < FAIL_FRACTION * baseline,
        }
    )
    return rec


def rerun(record: ExperimentRecord) -> ExperimentRecord:
    """Repeat a single search run from its own spec."""
    spec = record.spec
    doc = spec["graph"]
    if doc.get("kind") == "edge_list":
        raise ValueError("record was made from an edge list and cannot be rebuilt from its spec")
    plain = doc.get("kind") == "cayley" and "perturbation" not in doc and "noise" not in doc
    tree = CayleySpec(doc["r"], doc["M"], doc.get("layer_weights")) if plain else graph_from_spec(doc)
    return run_search(tree, SearchSchedule.from_dict(spec["schedule"]), space=spec.get("space", "auto"), seed=spec.get("seed"))


def _fmt(x: Any) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def format_csv(rows: Iterable[dict[str, Any]], invocation: str | None = None, header: bool = True) -> str:
    """Comma-delimited rows under a header; ``invocation`` becomes a ``#`` comment."""
    rows = list(rows)
    fields: list[str] = []
    for row in rows:
        fields += [k for k in row if k not in fields]
    buf = io.StringIO()
    if header and invocation:
        buf.write(f"# {invocation}\n")
    writer = csv.writer(buf, lineterminator="\n")
    if header:
        writer.writerow(fields)
    for row in rows:
        writer.writerow([_fmt(row.get(k, "")) for k in fields])
    return buf.getvalue()


def write_csv(path: str | Path, rows: Iterable[dict[str, Any]], invocation: str | None = None, append: bool = False) -> None:
    """Write (or with ``append``, extend) one study's CSV file."""
    path = Path(path)
    fresh = not (append and path.exists())
    with path.open("w" if fresh else "a", newline="") as fh:
        fh.write(format_csv(rows, invocation, header=fresh))


def write_sidecar(path: str | Path, spec: dict[str, Any]) -> Path:
    side = Path(str(path) + ".json")
    side.write_text(json.dumps(spec, sort_keys=True, indent=2, default=lambda x: x.tolist() if hasattr(x, "tolist") else str(x)) + "\n")
    return side
