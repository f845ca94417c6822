"""Value t-tuples, forbidden-tuple detection, bounds and the greedy generator."""
from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field, replace

from .cnf import VarAllocator, encode_test_block
from .model import SutModel, Test
from .sat import Engine, Status

# A value tuple is a tuple of (param, value) pairs sorted by parameter index.
ValueTuple = tuple[tuple[int, int], ...]


class InfeasibleModel(ValueError):
    """The SUT constraints admit no full assignment."""


@dataclass
class TupleCatalog:
    t: int
    tuples: list[ValueTuple]
    allowed_ids: frozenset[int]
    forbidden_ids: frozenset[int] = frozenset()
    subsets: list[tuple[int, ...]] = field(default_factory=list)
    subset_tuples: list[list[int]] = field(default_factory=list)
    classified: bool = False

    def __post_init__(self):
        self.index = {tau: i for i, tau in enumerate(self.tuples)}

    def __len__(self) -> int:
        return len(self.tuples)

    @property
    def allowed(self) -> list[int]:
        return sorted(self.allowed_ids)

    def covered_by(self, test) -> list[int]:
        """Ids of all tuples (allowed or not) that agree with ``test``."""
        index = self.index
        return [index[tuple((p, test[p]) for p in ps)] for ps in self.subsets]

    def restrict(self, ids) -> "TupleCatalog":
        """Same tuples, but only ``ids`` treated as allowed (the rest forbidden)."""
        ids = frozenset(ids)
        return replace(
            self,
            allowed_ids=ids,
            forbidden_ids=frozenset(range(len(self.tuples))) - ids,
        )


def enumerate_tuples(model: SutModel, t: int) -> TupleCatalog:
    n = len(model.parameters)
    if not 1 <= t <= n:
        raise ValueError(f"strength t={t} out of range 1..{n}")
    sizes = model.sizes
    tuples, subsets, subset_tuples = [], [], []
    for ps in itertools.combinations(range(n), t):
        ids = []
        for vs in itertools.product(*(range(sizes[p]) for p in ps)):
            ids.append(len(tuples))
            tuples.append(tuple(zip(ps, vs)))
        subsets.append(ps)
        subset_tuples.append(ids)
    return TupleCatalog(t, tuples, frozenset(range(len(tuples))), frozenset(),
                        subsets, subset_tuples, classified=False)


class TestOracle:
    """One engine loaded with a single test block, answering extension queries."""

    def __init__(self, model: SutModel, seed: int = 0, engine_factory=Engine):
        self.model = model
        self.engine = engine_factory(seed=seed)
        alloc = VarAllocator()
        self.x, clauses = encode_test_block(model, alloc)
        self.engine.add_clauses(clauses)
        self.trivial = not model.constraints
        self.queries = 0

    def lits(self, pairs) -> list[int]:
        return [self.x[p][v] for p, v in pairs]

    def extend(self, pairs) -> Test | None:
        """A valid full test agreeing with ``pairs``, or None."""
        self.queries += 1
        out = self.engine.solve(self.lits(pairs))
        if out.status is not Status.SAT:
            return None
        return tuple(
            next(v for v, var in enumerate(row) if out.model[var]) for row in self.x
        )

    def consistent(self, pairs) -> bool:
        if self.trivial:
            return True
        return self.extend(pairs) is not None


def detect_forbidden(model: SutModel, catalog: TupleCatalog, engine_factory=Engine,
                     seed: int = 0) -> TupleCatalog:
    """Classify every tuple by an assumption query on one incremental engine.

    Tuples covered by any model found along the way are marked allowed
    without their own query.
    """
    oracle = TestOracle(model, seed, engine_factory)
    if oracle.extend(()) is None:
        raise InfeasibleModel("the SUT constraints are unsatisfiable")
    allowed = set()
    forbidden = set()
    for tid, tau in enumerate(catalog.tuples):
        if tid in allowed:
            continue
        test = oracle.extend(tau)
        if test is None:
            forbidden.add(tid)
        else:
            allowed.update(catalog.covered_by(test))
    return replace(catalog, allowed_ids=frozenset(allowed),
                   forbidden_ids=frozenset(forbidden), classified=True)


def build_catalog(model: SutModel, t: int, engine_factory=Engine, seed: int = 0) -> TupleCatalog:
    return detect_forbidden(model, enumerate_tuples(model, t), engine_factory, seed)


@dataclass
class Bounds:
    lb: int
    ub: int | None = None
    ub_witness: list[Test] | None = None
    lb_subset: tuple[int, ...] = ()
    lb_witness: list[int] = field(default_factory=list)  # tuple ids

    @property
    def r(self) -> int:
        return len(self.lb_witness)


def lower_bound(catalog: TupleCatalog) -> Bounds:
    best, best_i = -1, 0
    for i, ids in enumerate(catalog.subset_tuples):
        n = sum(1 for tid in ids if tid in catalog.allowed_ids)
        if n > best:
            best, best_i = n, i
    witness = [tid for tid in catalog.subset_tuples[best_i] if tid in catalog.allowed_ids]
    return Bounds(lb=len(witness) - 1, lb_subset=catalog.subsets[best_i], lb_witness=witness)


class GreedyBuilder:
    """One-test-at-a-time construction maximising newly covered tuples."""

    def __init__(self, model: SutModel, catalog: TupleCatalog, seed: int = 0,
                 engine_factory=Engine, oracle: TestOracle | None = None):
        self.model = model
        self.catalog = catalog
        self.rng = random.Random(seed)
        self.oracle = oracle or TestOracle(model, seed, engine_factory)
        self.uncovered = set(catalog.allowed_ids)
        self.subset_uncovered = [
            sum(1 for tid in ids if tid in self.uncovered) for ids in catalog.subset_tuples
        ]
        self.subset_of = {}
        for si, ids in enumerate(catalog.subset_tuples):
            for tid in ids:
                self.subset_of[tid] = si
        # subsets containing each parameter
        self.param_subsets = [[] for _ in model.parameters]
        for si, ps in enumerate(catalog.subsets):
            for p in ps:
                self.param_subsets[p].append(si)

    def mark(self, test):
        for tid in self.catalog.covered_by(test):
            if tid in self.uncovered:
                self.uncovered.discard(tid)
                self.subset_uncovered[self.subset_of[tid]] -= 1

    def next_test(self, remaining=None) -> Test:
        """Build one valid test; ``remaining`` restricts which tuples count as new."""
        cat = self.catalog
        uncovered = self.uncovered if remaining is None else remaining
        if remaining is None:
            counts = self.subset_uncovered
        else:
            counts = [sum(1 for tid in ids if tid in uncovered) for ids in cat.subset_tuples]
        si = max(range(len(counts)), key=lambda i: (counts[i], -i))
        seeds = [tid for tid in cat.subset_tuples[si] if tid in uncovered]
        if not seeds:
            # nothing left to cover: any valid test
            return self.oracle.extend(())
        tau = cat.tuples[self.rng.choice(seeds)]
        assignment = dict(tau)
        rest = [p for p in range(len(self.model.parameters)) if p not in assignment]
        self.rng.shuffle(rest)
        rest.sort(key=lambda p: -sum(counts[s] for s in self.param_subsets[p]))
        t = cat.t
        index = cat.index
        for p in rest:
            assigned = sorted(assignment)
            scores = []
            for v in range(self.model.sizes[p]):
                gain = 0
                for others in itertools.combinations(assigned, t - 1):
                    key = tuple(sorted([(q, assignment[q]) for q in others] + [(p, v)]))
                    if index[key] in uncovered:
                        gain += 1
                scores.append((-gain, self.rng.random(), v))
            scores.sort()
            for _, _, v in scores:
                assignment[p] = v
                if self.oracle.consistent(assignment.items()):
                    break
            else:
                raise InfeasibleModel("partial test cannot be extended")
        return tuple(assignment[p] for p in range(len(self.model.parameters)))


def greedy_upper_bound(model: SutModel, catalog: TupleCatalog, seed: int = 0,
                       engine_factory=Engine) -> list[Test]:
    """A complete (not necessarily minimal) covering suite."""
    builder = GreedyBuilder(model, catalog, seed, engine_factory)
    suite = []
    while builder.uncovered:
        test = builder.next_test()
        suite.append(test)
        builder.mark(test)
    return suite


def compute_bounds(model: SutModel, catalog: TupleCatalog, seed: int = 0,
                   engine_factory=Engine) -> Bounds:
    b = lower_bound(catalog)
    b.ub_witness = greedy_upper_bound(model, catalog, seed, engine_factory)
    b.ub = max(len(b.ub_witness), b.lb + 1)
    return b


def dummy_test(model: SutModel, engine_factory=Engine, seed: int = 0) -> Test:
    """Lexicographically first valid test (lowest value index per parameter)."""
    oracle = TestOracle(model, seed, engine_factory)
    if oracle.extend(()) is None:
        raise InfeasibleModel("the SUT constraints are unsatisfiable")
    fixed = []
    for p, g in enumerate(model.sizes):
        for v in range(g):
            if oracle.consistent(fixed + [(p, v)]):
                fixed.append((p, v))
                break
    return tuple(v for _, v in fixed)
