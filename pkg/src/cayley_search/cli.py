"""Command-line entry point: one subcommand per reproduced figure or table."""

from __future__ import annotations

import argparse
import json
import shlex
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .connectivity import connectivity_report
from .experiments import (
    fixed_rate_schedule,
    format_csv,
    gamma_deviation_study,
    merged_weights,
    noise_study,
    perturbation_study,
    sweep_branching,
    sweep_size_small_M,
    write_csv,
    write_sidecar,
)
from .graph import (
    CayleySpec,
    GraphError,
    build_cayley,
    build_joined_complete,
    graph_from_spec,
    perturbation_from_dict,
)
from .operators import NumericalError
from .search import overlap_sweep, paper_two_stage_schedule, plan_schedule, run_search
from .subspace import SymmetryBroken, orbit_reduce

PROG = "cayley-search"
DEFAULT_SEED = 42

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# --- argument value parsers ------------------------------------------------


def parse_range(text: str) -> tuple[float, float, int]:
    """``min:max:steps`` -> ``(min, max, steps)``."""
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected min:max:steps, got {text!r}")
    try:
        lo, hi, steps = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad range {text!r}") from None
    if steps < 1 or hi < lo:
        raise argparse.ArgumentTypeError(f"range {text!r} needs max >= min and steps >= 1")
    return lo, hi, steps


def parse_int_list(text: str) -> list[int]:
    """``50,100,200`` or an inclusive ``lo:hi`` range."""
    try:
        if ":" in text:
            lo, hi = (int(x) for x in text.split(":"))
            return list(range(lo, hi + 1))
        return [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from None


def parse_float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None


def layer_weights(text: str | None, r: int, M: int) -> list[float] | None:
    """``top=W``, ``merged``, ``geometric=w`` or an explicit ``w0,w1,...`` list."""
    if text is None:
        return None
    if text == "merged":
        return list(merged_weights(r, M))
    if "=" in text:
        key, _, val = text.partition("=")
        try:
            x = float(val)
        except ValueError:
            raise GraphError(f"bad weight value in {text!r}") from None
        if key == "top":
            return [x] + [1.0] * (r - 1)
        if key == "geometric":
            return [x ** (r - 1 - k) for k in range(r)]
        raise GraphError(f"unknown weight form {key!r}; use top=, geometric=, merged or a list")
    ws = parse_float_list(text)
    if len(ws) != r:
        raise GraphError(f"need {r} layer weights, got {len(ws)}")
    return ws


# --- graph plumbing --------------------------------------------------------


def graph_doc(args) -> dict[str, Any]:
    if getattr(args, "graph", None):
        text = args.graph
        return json.loads(text) if text.lstrip().startswith("{") else json.loads(Path(text).read_text())
    doc: dict[str, Any] = {"kind": "cayley", "r": args.r, "M": args.M}
    ws = layer_weights(args.weights, args.r, args.M)
    if ws is not None:
        doc["layer_weights"] = ws
    return doc


def tree_from_doc(doc: dict[str, Any]):
    """A ``CayleySpec`` when the document is an untouched tree, else a graph."""
    if doc.get("kind", "cayley") == "cayley" and not doc.get("perturbation") and not doc.get("noise"):
        try:
            return CayleySpec(doc["r"], doc["M"], doc.get("layer_weights"))
        except KeyError as exc:
            raise GraphError(f"graph spec is missing field {exc}") from None
    return graph_from_spec(doc)


def _schedule_mode(mode: str) -> str:
    return {"multi": "multi_stage", "single": "single_stage_auto", "merged": "merged"}[mode]


# --- output ----------------------------------------------------------------


def _jsonable(x):
    if hasattr(x, "tolist"):
        return x.tolist()
    raise TypeError(f"not JSON serialisable: {type(x).__name__}")


def emit(args, rows: list[dict[str, Any]], doc: Any, invocation: str) -> None:
    """Write ``rows`` as CSV or ``doc`` as JSON to ``--out`` (stdout for ``-``)."""
    fmt = args.format
    if fmt == "json":
        text = json.dumps(doc, sort_keys=True, indent=2, default=_jsonable) + "\n"
        if args.out == "-":
            sys.stdout.write(text)
        else:
            Path(args.out).write_text(text)
        return
    if args.out == "-":
        sys.stdout.write(format_csv(rows, invocation))
    else:
        write_csv(args.out, rows, invocation)
        write_sidecar(args.out, {"invocation": invocation, "result": doc})


def _record_rows(records) -> list[dict[str, Any]]:
    return [rec.row() for rec in records]


def _record_docs(records) -> list[dict[str, Any]]:
    out = []
    for rec in records:
        d = rec.to_dict()
        if not d["diagnostics"].get("trace"):
            d["diagnostics"].pop("trace", None)
        out.append(d)
    return out


# --- subcommands -----------------------------------------------------------


def cmd_overlaps(args, inv):
    doc = graph_doc(args)
    lo, hi, steps = args.gamma
    tags = args.tags.split(",") if args.tags else None
    spec = overlap_sweep(tree_from_doc(doc), lo, hi, steps, tags)
    cols = spec.columns()
    rows = [dict(zip(cols, vals)) for vals in spec.rows()]
    result = {
        "graph": doc,
        "tags": list(spec.tags),
        "gammas": spec.gammas,
        "eigenvalues": spec.eigenvalues,
        "overlaps": spec.overlaps,
        "s_overlaps": spec.s_overlaps,
    }
    emit(args, rows, result, inv)


def cmd_search(args, inv):
    doc = graph_doc(args)
    tree = tree_from_doc(doc)
    if args.mode == "paper":
        if not isinstance(tree, CayleySpec) or tree.r != 2:
            raise GraphError("the fixed two-stage schedule needs an unperturbed height-2 tree")
        schedule = paper_two_stage_schedule(tree.M)
    elif args.mode == "fixed":
        if args.rate is None:
            raise GraphError("--mode fixed needs --rate")
        spec = tree if isinstance(tree, CayleySpec) else tree.cayley
        if spec is None:
            raise GraphError("--mode fixed needs an unperturbed tree")
        schedule = fixed_rate_schedule(spec, args.rate)
    else:
        schedule = plan_schedule(tree, mode=_schedule_mode(args.mode), refine=not args.no_refine)
    rec = run_search(tree, schedule, space=args.space, trace_samples=args.trace, propagator=args.propagator, seed=args.seed)
    docs = _record_docs([rec])
    if args.format == "csv" and args.trace:
        emit(args, rec.diagnostics["trace"], docs[0], inv)
    else:
        emit(args, _record_rows([rec]), docs[0], inv)


def cmd_sweep_m(args, inv):
    recs = sweep_branching(args.r, args.M_list, args.mode, jobs=args.jobs)
    emit(args, _record_rows(recs), _record_docs(recs), inv)


def cmd_sweep_n(args, inv):
    recs = sweep_size_small_M(args.r_list, args.M, args.omega, args.rate)
    emit(args, _record_rows(recs), _record_docs(recs), inv)


def cmd_gamma_dev(args, inv):
    recs = gamma_deviation_study(args.r, args.M_list, args.gamma_mode)
    emit(args, _record_rows(recs), _record_docs(recs), inv)


def cmd_noise(args, inv):
    doc = graph_doc(args)
    recs = noise_study(doc, args.sigma, args.trials, args.seed, _schedule_mode(args.schedule), jobs=args.jobs)
    emit(args, _record_rows(recs), _record_docs(recs), inv)


def cmd_perturb(args, inv):
    doc = graph_doc(args)
    if args.perturbation:
        text = args.perturbation
        pdoc = json.loads(text) if text.lstrip().startswith("{") else json.loads(Path(text).read_text())
    else:
        if not args.type:
            raise GraphError("give --type or --perturbation")
        pdoc = {"type": args.type}
        for key in ("m", "weight", "parent"):
            if getattr(args, key) is not None:
                pdoc[key] = getattr(args, key)
        if args.edge:
            pdoc["edge"] = [int(x) for x in args.edge.split(",")]
        if args.type == "random_binary_weights":
            pdoc["seed"] = args.seed
    rec = perturbation_study(doc, perturbation_from_dict(pdoc), _schedule_mode(args.schedule), replan=args.replan)
    emit(args, _record_rows([rec]), _record_docs([rec])[0], inv)


def table_graphs(M: int, joined_n: int) -> list[tuple[str, Any]]:
    """The rows of the connectivity comparison table at branching factor ``M``."""
    return [
        ("cayley r=2 w=1", build_cayley(CayleySpec(2, M))),
        ("cayley r=2 w=M", build_cayley(CayleySpec(2, M, merged_weights(2, M)))),
        ("cayley r=3 w=1,1", build_cayley(CayleySpec(3, M))),
        ("cayley r=3 w=M,M^2", build_cayley(CayleySpec(3, M, merged_weights(3, M)))),
        (f"joined complete n={joined_n}", build_joined_complete(joined_n)),
    ]


def cmd_connectivity(args, inv):
    if args.graph:
        doc = graph_doc(args)
        graphs = [(doc.get("kind", "graph"), graph_from_spec(doc))]
    else:
        graphs = table_graphs(args.M, args.joined_n)
    rows = []
    for name, g in graphs:
        rep = connectivity_report(g)
        rows.append({"graph": name, "N": g.n, **rep.to_dict()})
    if args.format == "table":
        cols = list(rows[0])
        cells = [[r["graph"], str(r["N"])] + [f"{r[c]:.6g}" for c in cols[2:]] for r in rows]
        width = [max(len(c), *(len(x[i]) for x in cells)) for i, c in enumerate(cols)]
        lines = ["  ".join(c.ljust(w) for c, w in zip(cols, width))]
        lines += ["  ".join(x.ljust(w) for x, w in zip(cell, width)) for cell in cells]
        text = "\n".join(lines) + "\n"
        if args.out == "-":
            sys.stdout.write(text)
        else:
            Path(args.out).write_text(text)
        return
    emit(args, rows, rows, inv)


def cmd_reduce(args, inv):
    doc = graph_doc(args)
    red = orbit_reduce(tree_from_doc(doc), args.rate)
    h = red.h_eff + 0.0  # no negative zeros in the dump
    tags = list(red.basis.tags)
    rows = [{"state": t, **{u: float(h[i, j]) for j, u in enumerate(tags)}} for i, t in enumerate(tags)]
    result = {"graph": doc, "gamma": args.rate, "tags": tags, "sizes": list(red.basis.sizes), "h_eff": h, "s": red.s_reduced}
    emit(args, rows, result, inv)


# --- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog=PROG, description="Staged quantum-walk search on Cayley trees.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, fmt="csv", formats=("csv", "json")):
        sp.add_argument("--out", default="-", help="output file (default: stdout); CSV files get a .json sidecar")
        sp.add_argument("--format", choices=formats, default=fmt)
        sp.add_argument("--seed", type=int, default=DEFAULT_SEED, help="random seed (default 42)")

    def graph_flags(sp, r=2, M=100):
        sp.add_argument("--r", type=int, default=r, help=f"tree height (default {r})")
        sp.add_argument("--M", type=int, default=M, help=f"branching factor (default {M})")
        sp.add_argument("--weights", help="layer weights: top=W, geometric=w, merged, or w0,w1,... (root layer first)")
        sp.add_argument("--graph", help="graph spec as inline JSON or a JSON file path (overrides --r/--M/--weights)")

    sp = sub.add_parser("overlaps", help="eigenvalues and basis overlaps along a gamma grid")
    graph_flags(sp)
    sp.add_argument("--gamma", type=parse_range, default=(0.5, 3.0, 500), help="min:max:steps (default 0.5:3.0:500)")
    sp.add_argument("--tags", help="comma-separated basis states (default: all)")
    common(sp)
    sp.set_defaults(func=cmd_overlaps)

    sp = sub.add_parser("search", help="run one planned search")
    graph_flags(sp)
    sp.add_argument("--mode", choices=("multi", "single", "paper", "fixed"), default="multi")
    sp.add_argument("--rate", type=float, help="jumping rate for --mode fixed")
    sp.add_argument("--no-refine", action="store_true", help="use integer stage rates")
    sp.add_argument("--space", choices=("auto", "reduced", "full"), default="auto")
    sp.add_argument("--propagator", choices=("krylov", "exact"), default="krylov")
    sp.add_argument("--trace", type=int, default=0, help="population samples per stage")
    common(sp, fmt="json")
    sp.set_defaults(func=cmd_search)

    sp = sub.add_parser("sweep-m", help="success versus branching factor")
    sp.add_argument("--r", type=int, default=2)
    sp.add_argument("--M-list", dest="M_list", type=parse_int_list, default=[25, 50, 100, 200, 400])
    sp.add_argument("--mode", choices=("multi", "single"), default="multi")
    sp.add_argument("--jobs", type=int, default=1)
    common(sp)
    sp.set_defaults(func=cmd_sweep_m)

    sp = sub.add_parser("sweep-n", help="success versus size at small branching factor")
    sp.add_argument("--r-list", dest="r_list", type=parse_int_list, default=list(range(2, 16)))
    sp.add_argument("--M", type=int, default=2)
    sp.add_argument("--omega", type=float, default=3.0)
    sp.add_argument("--rate", type=float, default=1.5)
    common(sp)
    sp.set_defaults(func=cmd_sweep_n)

    sp = sub.add_parser("gamma-dev", help="detuned jumping rate versus the critical baseline")
    sp.add_argument("--r", type=int, default=3)
    sp.add_argument("--M-list", dest="M_list", type=parse_int_list, default=[100, 500, 1000])
    sp.add_argument("--gamma-mode", choices=("low", "high", "both"), default="low")
    common(sp)
    sp.set_defaults(func=cmd_gamma_dev)

    sp = sub.add_parser("noise", help="success under Gaussian edge noise")
    graph_flags(sp, M=33)
    sp.add_argument("--sigma", type=parse_float_list, default=[1e-4, 1e-3, 1e-2, 1e-1])
    sp.add_argument("--trials", type=int, default=20)
    sp.add_argument("--schedule", choices=("multi", "single", "merged"), default="multi")
    sp.add_argument("--jobs", type=int, default=1)
    common(sp)
    sp.set_defaults(func=cmd_noise)

    sp = sub.add_parser("perturb", help="run the baseline schedule on a modified tree")
    graph_flags(sp)
    sp.add_argument("--perturbation", help="perturbation as inline JSON or a JSON file path")
    sp.add_argument(
        "--type",
        choices=(
            "connect_group_to_root",
            "resize_group",
            "reweigh_edge",
            "resize_half_groups",
            "connect_half_groups_to_root",
            "random_binary_weights",
        ),
    )
    sp.add_argument("--m", type=int)
    sp.add_argument("--weight", type=float)
    sp.add_argument("--parent", type=int)
    sp.add_argument("--edge", help="u,v")
    sp.add_argument("--schedule", choices=("multi", "single", "merged"), default="multi")
    sp.add_argument("--replan", action="store_true", help="plan a fresh schedule on the modified tree")
    common(sp)
    sp.set_defaults(func=cmd_perturb)

    sp = sub.add_parser("connectivity", help="connectivity measures (comparison table layout)")
    sp.add_argument("--M", type=int, default=20, help="branching factor of the table's trees (default 20)")
    sp.add_argument("--joined-n", dest="joined_n", type=int, default=64)
    sp.add_argument("--graph", help="report a single graph spec instead of the table")
    common(sp, formats=("csv", "json", "table"))
    sp.set_defaults(func=cmd_connectivity, r=2, weights=None)

    sp = sub.add_parser("reduce", help="dump the reduced search Hamiltonian")
    graph_flags(sp, M=4)
    sp.add_argument("--rate", type=float, default=1.0, help="jumping rate gamma (default 1)")
    common(sp)
    sp.set_defaults(func=cmd_reduce)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    invocation = " ".join([PROG, *map(shlex.quote, argv)])
    try:
        args.func(args, invocation)
    except BrokenPipeError:
        sys.stderr.close()
        return EXIT_OK
    except (NumericalError, SymmetryBroken, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"{PROG}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (GraphError, ValueError, KeyError, TypeError, argparse.ArgumentTypeError, json.JSONDecodeError, OSError) as exc:
        parser.print_usage(sys.stderr)
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
