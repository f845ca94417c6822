"""``ctmax`` command line."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path

from . import __version__
from .cnf import write_dimacs, write_wcnf
from .encodings import (
    ALL_VARIANTS,
    WEIGHT_SCHEMES,
    EncodingError,
    EncodingVariant,
    apply_symmetry,
    apply_test_order,
    build_can_wcnf,
    build_combined_wcnf,
    build_mcac,
    build_ratio,
    build_tn_wcnf,
    sat_clauses,
)
from .model import ModelError, SutModel, load_model
from .optimizers import (
    ALGORITHMS,
    ITS_STEPS,
    Budget,
    incremental_its,
    prepare,
    solve_can_pipeline,
    tn_sweep,
)
from .sat import Engine
from .tuples import InfeasibleModel, build_catalog, dummy_test
from .verify import verify_suite

log = logging.getLogger("ctmax")

RESULT_FIELDS = ["instance", "algo", "encoding", "weights", "seed", "best", "certified", "time_s"]
SWEEP_FIELDS = ["N", "covered", "allowed", "ratio", "time_s"]


class UsageError(Exception):
    pass


# ----------------------------------------------------------------------
# suite files

def write_suite(model: SutModel, suite, sink):
    w = csv.writer(sink, lineterminator="\n")
    w.writerow([p.name for p in model.parameters])
    for test in suite:
        w.writerow([p.domain[v] for p, v in zip(model.parameters, test)])


def read_suite(model: SutModel, source) -> list[tuple[int, ...]]:
    rows = csv.reader(source)
    try:
        header = [h.strip() for h in next(rows)]
    except StopIteration:
        return []
    if sorted(header) != sorted(p.name for p in model.parameters):
        raise ModelError(f"suite header {header} does not match the model parameters")
    suite = []
    for row in rows:
        if not row:
            continue
        suite.append(model.make_test({h: v.strip() for h, v in zip(header, row)}))
    return suite


def export_curve(results, sink):
    """Coverage curve rows ``N,covered,ratio`` from a sweep."""
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(["N", "covered", "ratio"])
    for r in results:
        w.writerow([r.N, r.covered, f"{r.ratio:.6f}"])


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", newline="", encoding="utf-8"), True


def _emit(path, writer):
    sink, close = _open_out(path)
    try:
        writer(sink)
    finally:
        if close:
            sink.close()


# ----------------------------------------------------------------------
# argument parsing

def _sweep_range(text: str) -> tuple[int, int]:
    try:
        lo, hi = (int(x) for x in text.split(".."))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo..hi, got {text!r}") from None
    if lo < 1 or hi < lo:
        raise argparse.ArgumentTypeError(f"empty or non-positive range {text!r}")
    return lo, hi


def _variant(text: str) -> EncodingVariant:
    try:
        return EncodingVariant.parse(text)
    except EncodingError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _ratio(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a ratio: {text!r}") from None


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ctmax", description="Covering arrays via SAT and MaxSAT.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--model", required=True, help="SUT model file")
        p.add_argument("-t", type=_positive, default=2, help="strength (default 2)")
        if seed:
            p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")

    def budgets(p):
        p.add_argument("--budget", type=float, default=600.0,
                       help="global wall-clock budget in seconds (default 600; CTMAX_BUDGET_S overrides)")
        p.add_argument("--call-budget", type=float, default=60.0,
                       help="per solver call budget in seconds (default 60)")

    variants = ", ".join(str(v) for v in ALL_VARIANTS)

    p = sub.add_parser("bounds", help="tuple counts, lower and greedy upper bound")
    common(p)

    p = sub.add_parser("encode", help="write a DIMACS CNF or WCNF encoding")
    common(p)
    p.add_argument("--problem", choices=["mcac", "can", "tn", "combined", "ratio"], required=True)
    p.add_argument("--encoding", type=_variant, default=None,
                   help=f"one of {variants} (default ccx-a0; ccx-a2 for tn)")
    p.add_argument("--weights", choices=WEIGHT_SCHEMES, default="unit")
    p.add_argument("-N", type=_positive, help="number of tests (default: greedy upper bound)")
    p.add_argument("--rt", type=_ratio, default=Fraction(1),
                   help="coverage ratio in (0, 1] for --problem ratio, e.g. 0.95 or 19/20")
    p.add_argument("--nux", action="store_true", help="fix discarded tests to a dummy test")
    p.add_argument("--no-symmetry", action="store_true",
                   help="skip symmetry breaking (tuple pinning; test ordering for tn)")
    p.add_argument("-o", "--output", default="-", help="output file (default stdout)")
    p.add_argument("--var-map", help="write the variable map to this file")

    p = sub.add_parser("can", help="minimum covering array size")
    common(p)
    budgets(p)
    p.add_argument("--algo", choices=ALGORITHMS, default="calot")
    p.add_argument("--encoding", type=_variant, default=EncodingVariant("CCX", "a0"),
                   help=f"one of {variants} (default ccx-a0)")
    p.add_argument("--weights", choices=WEIGHT_SCHEMES, default="unit")
    p.add_argument("--nux", action="store_true")
    p.add_argument("--ub", type=_positive, help="override the greedy upper bound")
    p.add_argument("--seeds", type=_positive, default=1,
                   help="run seeds seed..seed+K-1 and add a mean row")
    p.add_argument("--jobs", type=_positive, default=1, help="parallel workers for --seeds")
    p.add_argument("-o", "--output", help="write the best suite as CSV")
    p.add_argument("--results", help="write result rows as CSV")

    p = sub.add_parser("tn", help="maximum coverage with N tests")
    common(p)
    budgets(p)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("-N", type=_positive)
    g.add_argument("--sweep", type=_sweep_range, help="range lo..hi")
    p.add_argument("--algo", choices=["linear", "wpm1"], default="linear")
    p.add_argument("--encoding", type=_variant, default=EncodingVariant("CCX", "a2"),
                   help=f"one of {variants} (default ccx-a2)")
    p.add_argument("-o", "--output", help="write the suite (largest N) as CSV")
    p.add_argument("--results", help="write sweep rows as CSV (default stdout)")
    p.add_argument("--curve", help="write the coverage curve as CSV")

    p = sub.add_parser("its", help="incremental test suite construction")
    common(p)
    budgets(p)
    p.add_argument("-N", type=_positive, required=True, help="maximum suite size")
    p.add_argument("--Ni", type=_positive, default=1, help="tests added per iteration")
    p.add_argument("--step", choices=ITS_STEPS, default="maxsat")
    p.add_argument("--iteration-budget", type=float, default=100.0)
    p.add_argument("-o", "--output", help="write the suite as CSV")
    p.add_argument("--curve", help="write prefix coverage rows N,covered,ratio")

    p = sub.add_parser("verify", help="check a suite CSV")
    common(p, seed=False)
    p.add_argument("--suite", required=True)
    return ap


# ----------------------------------------------------------------------
# subcommands

def _budget(args) -> Budget:
    return Budget(args.call_budget, args.budget)


def cmd_bounds(args, model):
    catalog, bounds = prepare(model, args.t, args.seed)
    print(f"lb={bounds.lb} ub={bounds.ub} tuples={len(catalog)} "
          f"allowed={len(catalog.allowed_ids)} forbidden={len(catalog.forbidden_ids)}")
    return 0


def cmd_encode(args, model):
    problem = args.problem
    variant = args.encoding or EncodingVariant("CCX", "a2" if problem == "tn" else "a0")
    catalog, bounds = prepare(model, args.t, args.seed)
    if problem == "tn" and args.N is None:
        raise UsageError("--problem tn needs -N")
    N = args.N or bounds.ub
    lb = bounds.lb if problem in ("mcac", "can", "combined") else 0
    if problem == "mcac":
        lb = 0
    if N <= lb:
        raise UsageError(f"N={N} is not above the lower bound {lb}")
    ctx = build_mcac(model, catalog, N, variant, lb)
    if problem in ("mcac", "can") and not args.no_symmetry:
        apply_symmetry(ctx, bounds.lb_witness)
    elif problem == "tn" and not args.no_symmetry and N > 1:
        apply_test_order(ctx, bounds.lb_subset)
    if problem == "mcac":
        writer = lambda s: write_dimacs(sat_clauses(ctx), s, ctx.n_vars)
    else:
        if problem == "can":
            dummy = dummy_test(model, seed=args.seed) if args.nux else None
            wcnf = build_can_wcnf(ctx, args.weights, dummy)
        elif problem == "tn":
            wcnf = build_tn_wcnf(ctx)
        elif problem == "combined":
            wcnf = build_combined_wcnf(ctx, args.weights)
        else:
            wcnf = build_ratio(ctx, args.rt)
        writer = lambda s: write_wcnf(wcnf, s)
    _emit(args.output, writer)
    if args.var_map:
        with open(args.var_map, "w", encoding="utf-8") as fh:
            ctx.write_var_map(fh)
    return 0


def _can_run(job):
    model_path, t, algo, variant, weights, nux, seed, ub, call_budget, budget = job
    model = load_model(model_path)
    res = solve_can_pipeline(model, t, algo, EncodingVariant.parse(variant), weights, nux,
                             seed, Budget(call_budget, budget), ub=ub)
    return seed, res.best, res.certified, res.seconds, res.suite


def cmd_can(args, model):
    instance = Path(args.model).stem
    seeds = [args.seed + k for k in range(args.seeds)]
    jobs = [(args.model, args.t, args.algo, str(args.encoding), args.weights, args.nux, s,
             args.ub, args.call_budget, args.budget) for s in seeds]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = list(pool.map(_can_run, jobs))
    else:
        outcomes = [_can_run(j) for j in jobs]
    rows = []
    for seed, best, certified, seconds, _ in outcomes:
        rows.append([instance, args.algo, str(args.encoding), args.weights, seed, best,
                     str(certified).lower(), f"{seconds:.3f}"])
    if len(outcomes) > 1:
        rows.append([instance, args.algo, str(args.encoding), args.weights, "mean",
                     f"{statistics.mean(o[1] for o in outcomes):.2f}",
                     str(all(o[2] for o in outcomes)).lower(),
                     f"{statistics.mean(o[3] for o in outcomes):.3f}"])
    _, best, certified, _, suite = min(outcomes, key=lambda o: (o[1], o[0]))
    print(f"best={best} certified={str(certified).lower()}")
    if args.output:
        _emit(args.output, lambda s: write_suite(model, suite, s))
    if args.results:
        def writer(sink):
            w = csv.writer(sink, lineterminator="\n")
            w.writerow(RESULT_FIELDS)
            w.writerows(rows)
        _emit(args.results, writer)
    return 0


def cmd_tn(args, model):
    lo, hi = args.sweep if args.sweep else (args.N, args.N)
    catalog = build_catalog(model, args.t, Engine, args.seed)
    results = tn_sweep(model, args.t, lo, hi, algo=args.algo, variant=args.encoding,
                       seed=args.seed, budget=_budget(args), catalog=catalog)

    def writer(sink):
        w = csv.writer(sink, lineterminator="\n")
        w.writerow(SWEEP_FIELDS)
        for r in results:
            w.writerow([r.N, r.covered, r.allowed, f"{r.ratio:.6f}", f"{r.seconds:.3f}"])

    _emit(args.results, writer)
    if args.curve:
        _emit(args.curve, lambda s: export_curve(results, s))
    if args.output:
        _emit(args.output, lambda s: write_suite(model, results[-1].suite, s))
    return 0


def cmd_its(args, model):
    catalog = build_catalog(model, args.t, Engine, args.seed)
    suite = incremental_its(model, catalog, args.N, args.Ni, args.step, Engine, args.seed,
                            _budget(args), args.iteration_budget)
    report = verify_suite(model, catalog, suite)
    print(f"size={len(suite)} covered={len(report.covered)} allowed={report.allowed} "
          f"ratio={report.ratio}")
    if args.output:
        _emit(args.output, lambda s: write_suite(model, suite, s))
    if args.curve:
        def writer(sink):
            w = csv.writer(sink, lineterminator="\n")
            w.writerow(["N", "covered", "ratio"])
            for n in range(1, len(suite) + 1):
                rep = verify_suite(model, catalog, suite[:n])
                w.writerow([n, len(rep.covered), f"{rep.ratio:.6f}"])
        _emit(args.curve, writer)
    return 0


def cmd_verify(args, model):
    catalog = build_catalog(model, args.t)
    with open(args.suite, newline="", encoding="utf-8") as fh:
        suite = read_suite(model, fh)
    report = verify_suite(model, catalog, suite)
    print(f"covered={len(report.covered)} allowed={report.allowed} ratio={report.ratio}")
    print(json.dumps(report.as_dict(), sort_keys=True))
    return 0


COMMANDS = {
    "bounds": cmd_bounds,
    "encode": cmd_encode,
    "can": cmd_can,
    "tn": cmd_tn,
    "its": cmd_its,
    "verify": cmd_verify,
}


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        model = load_model(args.model)
        if args.t > len(model.parameters):
            raise UsageError(f"-t {args.t} exceeds the {len(model.parameters)} parameters")
        return COMMANDS[args.command](args, model)
    except UsageError as e:
        print(f"ctmax: usage error: {e}", file=sys.stderr)
        return 2
    except (ModelError, InfeasibleModel, EncodingError, OSError) as e:
        print(f"ctmax: error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
