"""Independent checks of test suites plus brute-force oracles.

Nothing here touches the CNF or SAT layers: validity is decided by direct
evaluation of the constraint expressions.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

from .model import SutModel, entails


@dataclass
class CoverageReport:
    size: int
    valid: list[bool]
    covered: list[int]
    missing: list[int]
    allowed: int

    @property
    def ratio(self) -> float:
        return len(self.covered) / self.allowed if self.allowed else 1.0

    @property
    def all_valid(self) -> bool:
        return all(self.valid)

    @property
    def complete(self) -> bool:
        return self.all_valid and not self.missing

    def as_dict(self) -> dict:
        return {
            "size": self.size,
            "valid": sum(self.valid),
            "invalid_rows": [i for i, ok in enumerate(self.valid) if not ok],
            "covered": len(self.covered),
            "allowed": self.allowed,
            "missing": len(self.missing),
            "ratio": self.ratio,
        }


def verify_suite(model: SutModel, catalog, suite) -> CoverageReport:
    """Check each test against the constraints and count allowed tuples covered.

    Only tests that satisfy the constraints contribute coverage.
    """
    valid = [entails(test, model) for test in suite]
    allowed = catalog.allowed_ids
    covered = set()
    for test, ok in zip(suite, valid):
        if not ok:
            continue
        for ps in catalog.subsets:
            tid = catalog.index[tuple((p, test[p]) for p in ps)]
            if tid in allowed:
                covered.add(tid)
    return CoverageReport(
        size=len(suite),
        valid=valid,
        covered=sorted(covered),
        missing=sorted(allowed - covered),
        allowed=len(allowed),
    )


class OracleGuard(ValueError):
    """Input too large for exhaustive search."""


MAX_VALID_TESTS = 256
MAX_CAN_DEPTH = 16
MAX_TN_COMBINATIONS = 300_000


def valid_tests(model: SutModel, limit: int = MAX_VALID_TESTS) -> list[tuple[int, ...]]:
    out = []
    for test in itertools.product(*(range(g) for g in model.sizes)):
        if entails(test, model):
            out.append(test)
            if len(out) > limit:
                raise OracleGuard(f"more than {limit} valid tests")
    return out


def _coverage_sets(model: SutModel, t: int, tests):
    """Per test, the set of t-tuples (as sorted (p, v) pairs) it covers."""
    subsets = list(itertools.combinations(range(len(model.parameters)), t))
    return subsets, [
        frozenset(tuple((p, test[p]) for p in ps) for ps in subsets) for test in tests
    ]


def allowed_tuples(model: SutModel, t: int) -> set:
    tests = valid_tests(model)
    _, cov = _coverage_sets(model, t, tests)
    return set().union(*cov) if cov else set()


def brute_force_can(model: SutModel, t: int, n_max: int = MAX_CAN_DEPTH) -> int | None:
    """Exact CAN by depth-first search, or None if it exceeds ``n_max``."""
    if n_max > MAX_CAN_DEPTH:
        raise OracleGuard(f"n_max must be <= {MAX_CAN_DEPTH}")
    tests = valid_tests(model)
    if not tests:
        raise ValueError("model has no valid test")
    subsets, cov = _coverage_sets(model, t, tests)
    universe = set().union(*cov)
    tuple_ids = {tau: i for i, tau in enumerate(sorted(universe))}
    masks = [sum(1 << tuple_ids[tau] for tau in c) for c in cov]
    full = (1 << len(tuple_ids)) - 1
    # tuples grouped by parameter subset: at most one per group per test
    group_masks = []
    for ps in subsets:
        m = 0
        for tau, i in tuple_ids.items():
            if tuple(p for p, _ in tau) == ps:
                m |= 1 << i
        group_masks.append(m)
    covering = [[k for k, m in enumerate(masks) if m >> i & 1] for i in range(len(tuple_ids))]

    def lower(uncov: int) -> int:
        return max(bin(uncov & g).count("1") for g in group_masks)

    def dfs(covered: int, left: int) -> bool:
        if covered == full:
            return True
        uncov = full & ~covered
        if left == 0 or lower(uncov) > left:
            return False
        # branch on the uncovered tuple with the fewest covering tests
        best = None
        rest = uncov
        while rest:
            low = rest & -rest
            i = low.bit_length() - 1
            rest ^= low
            if best is None or len(covering[i]) < len(covering[best]):
                best = i
        seen_gain = set()
        for k in covering[best]:
            gain = masks[k] & uncov
            if gain in seen_gain:
                continue
            seen_gain.add(gain)
            if dfs(covered | masks[k], left - 1):
                return True
        return False

    start = max(1, lower(full))
    for n in range(start, n_max + 1):
        if dfs(0, n):
            return n
    return None


def brute_force_tn(model: SutModel, t: int, n: int) -> int:
    """Maximum number of allowed t-tuples covered by ``n`` valid tests."""
    tests = valid_tests(model)
    _, cov = _coverage_sets(model, t, tests)
    combos = 1
    for i in range(n):
        combos = combos * (len(tests) + i) // (i + 1)
    if combos > MAX_TN_COMBINATIONS:
        raise OracleGuard(f"{combos} suites exceed the exhaustive limit")
    universe = sorted(set().union(*cov))
    ids = {tau: i for i, tau in enumerate(universe)}
    masks = [sum(1 << ids[tau] for tau in c) for c in cov]
    best = 0
    # repeated tests never help, but allowing them keeps N > |valid tests| well-defined
    for combo in itertools.combinations_with_replacement(range(len(masks)), n):
        m = 0
        for k in combo:
            m |= masks[k]
        c = bin(m).count("1")
        if c > best:
            best = c
    return best
