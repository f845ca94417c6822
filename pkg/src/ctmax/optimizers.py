"""Optimisation algorithms and end-to-end pipelines."""
from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field
from typing import Callable

from .cnf import IncrementalPB, Wcnf, encode_eo
from .encodings import (
    EncodingVariant,
    apply_symmetry,
    apply_test_order,
    build_can_wcnf,
    build_mcac,
    build_tn_wcnf,
    decode_tests,
    sat_clauses,
)
from .model import SutModel, Test
from .sat import Engine, Status
from .tuples import (
    Bounds,
    GreedyBuilder,
    TestOracle,
    TupleCatalog,
    build_catalog,
    compute_bounds,
    dummy_test,
    lower_bound,
)
from .verify import verify_suite

log = logging.getLogger(__name__)

ALGORITHMS = ("calot", "linear", "wpm1")
ITS_STEPS = ("maxsat", "sat", "heuristic")


class Budget:
    """Per-call and global wall-clock limits (seconds; None = unlimited)."""

    def __init__(self, per_call: float | None = 60.0, total: float | None = 600.0):
        env = os.environ.get("CTMAX_BUDGET_S")
        if env:
            total = float(env)
        self.per_call = per_call
        self.total = total
        self.start = time.monotonic()

    @classmethod
    def unlimited(cls) -> "Budget":
        b = cls(None, None)
        b.total = None
        return b

    def remaining(self) -> float | None:
        if self.total is None:
            return None
        return self.total - (time.monotonic() - self.start)

    def call_limit(self) -> float | None:
        rem = self.remaining()
        if rem is None:
            return self.per_call
        rem = max(rem, 0.0)
        return rem if self.per_call is None else min(self.per_call, rem)

    def expired(self) -> bool:
        rem = self.remaining()
        return rem is not None and rem <= 0


@dataclass
class IterationLog:
    bound: int
    verdict: str
    seconds: float


@dataclass
class MaxSatResult:
    cost: int                     # soft_total + 1 means infeasible hard clauses
    model: tuple | None
    optimal: bool
    log: list[IterationLog] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.log)


@dataclass
class OptimizerResult:
    best: int
    suite: list[Test]
    certified: bool
    iterations: int = 0
    log: list[IterationLog] = field(default_factory=list)
    cost: int | None = None
    bounds: Bounds | None = None
    seconds: float = 0.0


class EngineAlloc:
    """Adapts an engine to the allocator interface used by the encoders."""

    def __init__(self, engine):
        self.engine = engine

    def new(self, name=None) -> int:
        return self.engine.new_var()


def _solve(engine, budget: Budget, assumptions=()):
    return engine.solve(assumptions, time_limit=budget.call_limit())


# ----------------------------------------------------------------------
# model-guided linear search

def load_reified(engine, wcnf: Wcnf) -> list[tuple[int, int]]:
    """Add the hard part plus ``soft ∨ b`` for a fresh b per soft; return (w, b) terms."""
    engine.add_clauses(wcnf.hard)
    # reserve every variable of the formula before creating collectors
    while engine.n_vars < wcnf.max_var():
        engine.new_var()
    terms = []
    for clause, w in wcnf.soft:
        b = engine.new_var()
        engine.add_clause(list(clause) + [b])
        terms.append((w, b))
    return terms


def linear_maxsat(wcnf: Wcnf, engine_factory=Engine, seed: int = 0,
                  budget: Budget | None = None, on_model: Callable | None = None) -> MaxSatResult:
    """SAT-UNSAT linear search on the cost with an incrementally tightened PB bound."""
    budget = budget or Budget.unlimited()
    engine = engine_factory(seed=seed)
    terms = load_reified(engine, wcnf)
    infinity = wcnf.soft_total + 1
    ub, best, pb = infinity, None, None
    history: list[IterationLog] = []
    while True:
        if ub == 0:
            return MaxSatResult(0, best, True, history)
        if budget.expired():
            return MaxSatResult(ub, best, False, history)
        t0 = time.monotonic()
        out = _solve(engine, budget)
        dt = time.monotonic() - t0
        if out.status is Status.UNKNOWN:
            history.append(IterationLog(ub - 1, "UNKNOWN", dt))
            return MaxSatResult(ub, best, False, history)
        if out.status is Status.UNSAT:
            history.append(IterationLog(ub - 1, "UNSAT", dt))
            return MaxSatResult(ub, best, True, history)
        true = {v if out.model[v] else -v for v in range(1, len(out.model))}
        cost = wcnf.cost(true)
        history.append(IterationLog(cost, "SAT", dt))
        ub, best = cost, out.model
        if on_model is not None:
            on_model(cost, out.model)
        if ub == 0:
            continue
        if pb is None:
            pb = IncrementalPB(terms, ub - 1, EngineAlloc(engine))
            engine.add_clauses(pb.clauses)
        else:
            engine.add_clauses(pb.update(ub - 1))


# ----------------------------------------------------------------------
# core-guided stratified WPM1

def wpm1_stratified(wcnf: Wcnf, engine_factory=Engine, seed: int = 0,
                    budget: Budget | None = None, on_model: Callable | None = None) -> MaxSatResult:
    """Fu&Malik with the split rule, merging one weight stratum at a time (heaviest first)."""
    budget = budget or Budget.unlimited()
    engine = engine_factory(seed=seed)
    alloc = EngineAlloc(engine)
    engine.add_clauses(wcnf.hard)
    while engine.n_vars < wcnf.max_var():
        engine.new_var()
    infinity = wcnf.soft_total + 1
    remaining = [(list(c), w) for c, w in wcnf.soft]
    working: dict[int, tuple[list[int], int]] = {}
    history: list[IterationLog] = []
    best, best_cost = None, infinity
    lower = 0
    merge = True
    while True:
        if merge and remaining:
            w_top = max(w for _, w in remaining)
            stratum = [(c, w) for c, w in remaining if w == w_top]
            remaining = [(c, w) for c, w in remaining if w != w_top]
            for c, w in stratum:
                working[engine.add_retractable(c)] = (c, w)
        if budget.expired():
            return MaxSatResult(best_cost, best, False, history)
        t0 = time.monotonic()
        out = _solve(engine, budget)
        dt = time.monotonic() - t0
        if out.status is Status.UNKNOWN:
            history.append(IterationLog(lower, "UNKNOWN", dt))
            return MaxSatResult(best_cost, best, False, history)
        if out.status is Status.SAT:
            true = {v if out.model[v] else -v for v in range(1, len(out.model))}
            cost = wcnf.cost(true)
            history.append(IterationLog(cost, "SAT", dt))
            if cost < best_cost:
                best, best_cost = out.model, cost
                if on_model is not None:
                    on_model(cost, out.model)
            if not remaining:
                return MaxSatResult(cost, out.model, True, history)
            merge = True
            continue
        merge = False
        to_relax = [h for h in out.core if h in working]
        history.append(IterationLog(lower, "UNSAT", dt))
        if not to_relax:
            return MaxSatResult(infinity, None, True, history)
        w_min = min(working[h][1] for h in to_relax)
        lower += w_min
        relax_vars = []
        for h in to_relax:
            clause, w = working.pop(h)
            engine.retract_clause(h)
            b = engine.new_var()
            relax_vars.append(b)
            working[engine.add_retractable(clause + [b])] = (clause + [b], w_min)
            if w > w_min:
                remaining.append((clause, w - w_min))
        engine.add_clauses(encode_eo(relax_vars, alloc))


MAXSAT = {"linear": linear_maxsat, "wpm1": wpm1_stratified}


# ----------------------------------------------------------------------
# incremental SAT top-down search

def calot(model: SutModel, catalog: TupleCatalog, bounds: Bounds,
          variant: EncodingVariant = EncodingVariant("CCX", "a0"), engine_factory=Engine,
          seed: int = 0, budget: Budget | None = None) -> OptimizerResult:
    """Shrink the array one test at a time by asserting c^{i-1} units."""
    budget = budget or Budget.unlimited()
    start = time.monotonic()
    lb, ub = bounds.lb, bounds.ub
    best_suite = bounds.ub_witness
    if ub == lb + 1 and best_suite is not None:
        return OptimizerResult(ub, list(best_suite), True, 0, [], bounds=bounds)
    if variant.base != "CCX":
        raise ValueError("calot requires the CCX base encoding")
    ctx = build_mcac(model, catalog, ub, variant, lb)
    apply_symmetry(ctx, bounds.lb_witness)
    engine = engine_factory(seed=seed)
    engine.add_clauses(sat_clauses(ctx))
    history: list[IterationLog] = []
    best = ub if best_suite is not None else None
    for i in range(ub, lb, -1):
        if budget.expired():
            break
        t0 = time.monotonic()
        out = _solve(engine, budget)
        dt = time.monotonic() - t0
        if out.status is Status.UNKNOWN:
            history.append(IterationLog(i, "UNKNOWN", dt))
            break
        if out.status is Status.UNSAT:
            history.append(IterationLog(i, "UNSAT", dt))
            if i == ub:
                raise RuntimeError(f"no covering array of size {ub}: bad upper bound")
            return OptimizerResult(i + 1, best_suite, True, len(history), history,
                                   bounds=bounds, seconds=time.monotonic() - start)
        history.append(IterationLog(i, "SAT", dt))
        best, best_suite = i, decode_tests(ctx, out)[:i]
        for tid in ctx.tuple_ids:
            engine.add_clause([ctx.c[i - 1][tid]])
        for row in ctx.x[i]:
            for var in row:
                engine.add_clause([var if out.model[var] else -var])
    else:
        return OptimizerResult(lb + 1, best_suite, True, len(history), history,
                               bounds=bounds, seconds=time.monotonic() - start)
    if best_suite is None:
        raise RuntimeError("budget exhausted before any covering array was found")
    return OptimizerResult(best, best_suite, False, len(history), history,
                           bounds=bounds, seconds=time.monotonic() - start)


# ----------------------------------------------------------------------
# incremental test-suite construction

class _SatStep:
    """One engine answering "give me a valid test covering a remaining tuple"."""

    def __init__(self, model: SutModel, catalog: TupleCatalog, seed: int, engine_factory):
        self.oracle = TestOracle(model, seed, engine_factory)
        engine = self.oracle.engine
        x = self.oracle.x
        self.y = {}
        for tid in sorted(catalog.allowed_ids):
            y = engine.new_var()
            self.y[tid] = y
            for p, v in catalog.tuples[tid]:
                engine.add_clause([-y, x[p][v]])
        engine.add_clause(list(self.y.values()))

    def drop(self, tids):
        for tid in tids:
            y = self.y.pop(tid, None)
            if y is not None:
                self.oracle.engine.add_clause([-y])

    def next_test(self) -> Test | None:
        if not self.y:
            return None
        return self.oracle.extend(())


def _subset_bonus(catalog: TupleCatalog, remaining: set[int]) -> dict[int, int]:
    # prefer tuples from parameter subsets with the most uncovered tuples left
    left = [sum(1 for tid in ids if tid in remaining) for ids in catalog.subset_tuples]
    return {tid: left[si] for si, ids in enumerate(catalog.subset_tuples)
            for tid in ids if tid in remaining}


def incremental_its(model: SutModel, catalog: TupleCatalog, N: int, Ni: int = 1,
                    step: str = "maxsat", engine_factory=Engine, seed: int = 0,
                    budget: Budget | None = None, per_iteration: float = 100.0) -> list[Test]:
    """Grow a suite block by block until every allowed tuple is covered or N tests exist."""
    if N < 1 or Ni < 1:
        raise ValueError("N and Ni must be positive")
    if step not in ITS_STEPS:
        raise ValueError(f"unknown step {step!r}")
    budget = budget or Budget.unlimited()
    remaining = set(catalog.allowed_ids)
    order_subset = lower_bound(catalog).lb_subset
    suite: list[Test] = []
    sat_step = _SatStep(model, catalog, seed, engine_factory) if step != "heuristic" else None
    greedy = GreedyBuilder(model, catalog, seed, engine_factory) if step == "heuristic" else None

    def take(tests):
        for test in tests:
            if len(suite) >= N:
                break
            suite.append(test)
            gained = [tid for tid in catalog.covered_by(test) if tid in remaining]
            remaining.difference_update(gained)
            if sat_step is not None:
                sat_step.drop(gained)
            if greedy is not None:
                greedy.mark(test)

    while remaining and len(suite) < N:
        n_block = min(Ni, N - len(suite))
        if step == "maxsat":
            ctx = build_mcac(model, catalog, n_block, EncodingVariant("CCX", "a2"), 0,
                             tuple_ids=remaining)
            if n_block > 1:
                apply_test_order(ctx, order_subset)
            wcnf = build_tn_wcnf(ctx, _subset_bonus(catalog, remaining))
            limit = Budget(per_iteration, per_iteration)
            res = linear_maxsat(wcnf, engine_factory, seed, limit)
            tests = decode_tests(ctx, res.model) if res.model is not None else []
            if any(tid in remaining for test in tests for tid in catalog.covered_by(test)):
                take(tests)
                continue
            log.info("maxsat step made no progress; falling back to a SAT step")
            take([sat_step.next_test()])
        elif step == "sat":
            for _ in range(n_block):
                test = sat_step.next_test()
                if test is None:
                    break
                take([test])
        else:
            for _ in range(n_block):
                if not remaining:
                    break
                test = greedy.next_test()
                take([test])
        if budget.expired():
            break
    return suite


# ----------------------------------------------------------------------
# pipelines

def prepare(model: SutModel, t: int, seed: int = 0, engine_factory=Engine,
            ub: int | None = None) -> tuple[TupleCatalog, Bounds]:
    catalog = build_catalog(model, t, engine_factory, seed)
    if ub is None:
        bounds = compute_bounds(model, catalog, seed, engine_factory)
    else:
        bounds = lower_bound(catalog)
        bounds.ub = ub
    return catalog, bounds


def solve_can_pipeline(model: SutModel, t: int = 2, algo: str = "calot",
                       variant: EncodingVariant | None = None, weights: str = "unit",
                       nux: bool = False, seed: int = 0, budget: Budget | None = None,
                       engine_factory=Engine, ub: int | None = None,
                       prepared: tuple[TupleCatalog, Bounds] | None = None) -> OptimizerResult:
    """Bounds, encoding, optimisation, decoding and verification in one call.

    ``ub`` overrides the greedy upper bound (the greedy witness is kept as a
    fallback whenever it is no larger than ``ub``).
    """
    if algo not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algo!r}")
    variant = variant or EncodingVariant("CCX", "a0")
    budget = budget or Budget()
    start = time.monotonic()
    catalog, bounds = prepared or prepare(model, t, seed, engine_factory)
    if ub is not None:
        witness = bounds.ub_witness if bounds.ub_witness and len(bounds.ub_witness) <= ub else None
        bounds = Bounds(bounds.lb, ub, witness, bounds.lb_subset, bounds.lb_witness)
    if algo == "calot":
        res = calot(model, catalog, bounds, variant, engine_factory, seed, budget)
    elif bounds.ub == bounds.lb + 1 and bounds.ub_witness is not None:
        res = OptimizerResult(bounds.ub, list(bounds.ub_witness), True, bounds=bounds)
    else:
        ctx = build_mcac(model, catalog, bounds.ub, variant, bounds.lb)
        apply_symmetry(ctx, bounds.lb_witness)
        dummy = dummy_test(model, engine_factory, seed) if nux else None
        wcnf = build_can_wcnf(ctx, weights, dummy)
        ms = MAXSAT[algo](wcnf, engine_factory, seed, budget)
        if ms.model is not None:
            suite = decode_tests(ctx, ms.model)
        elif bounds.ub_witness is not None:
            suite = list(bounds.ub_witness)
        else:
            raise RuntimeError("no covering array found within the budget")
        res = OptimizerResult(len(suite), suite, ms.optimal and ms.model is not None,
                              ms.iterations, ms.log, cost=ms.cost, bounds=bounds)
    res.bounds = bounds
    report = verify_suite(model, catalog, res.suite)
    if not report.complete:
        raise AssertionError(f"pipeline produced an invalid suite: {report.as_dict()}")
    res.best = len(res.suite)
    res.seconds = time.monotonic() - start
    return res


@dataclass
class TnResult:
    N: int
    suite: list[Test]
    covered: int
    allowed: int
    reported_cost: int
    certified: bool
    seconds: float = 0.0

    @property
    def ratio(self) -> float:
        return self.covered / self.allowed if self.allowed else 1.0


def solve_tn_pipeline(model: SutModel, t: int, N: int, algo: str = "linear",
                      variant: EncodingVariant | None = None, seed: int = 0,
                      budget: Budget | None = None, engine_factory=Engine,
                      catalog: TupleCatalog | None = None, order: bool = True) -> TnResult:
    """Best coverage achievable with N tests; coverage is recounted by the verifier.

    ``order`` sorts the tests on the widest parameter subset to cut test
    permutation symmetry.
    """
    if algo not in MAXSAT:
        raise ValueError(f"tuple-number solving supports {sorted(MAXSAT)}, not {algo!r}")
    start = time.monotonic()
    variant = variant or EncodingVariant("CCX", "a2")
    catalog = catalog or build_catalog(model, t, engine_factory, seed)
    ctx = build_mcac(model, catalog, N, variant, 0)
    if order and N > 1:
        apply_test_order(ctx, lower_bound(catalog).lb_subset)
    wcnf = build_tn_wcnf(ctx)
    ms = MAXSAT[algo](wcnf, engine_factory, seed, budget or Budget())
    suite = decode_tests(ctx, ms.model) if ms.model is not None else []
    report = verify_suite(model, catalog, suite)
    return TnResult(N, suite, len(report.covered), report.allowed, ms.cost,
                    ms.optimal and ms.model is not None, time.monotonic() - start)


def tn_sweep(model: SutModel, t: int, lo: int, hi: int, **kw) -> list[TnResult]:
    catalog = kw.pop("catalog", None) or build_catalog(
        model, t, kw.get("engine_factory", Engine), kw.get("seed", 0))
    return [solve_tn_pipeline(model, t, n, catalog=catalog, **kw) for n in range(lo, hi + 1)]
