"""Clause-level plumbing shared by every encoder.

Literals are non-zero ints in DIMACS convention; a clause is a list of them.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Sequence, TextIO

from .model import And, Atom, Expr, Iff, Implies, Not, Or

Clause = list[int]


class VarAllocator:
    """Hands out fresh variable ids, optionally under a name."""

    def __init__(self, start: int = 0):
        self.top = start
        self.names: dict[Hashable, int] = {}

    def new(self, name: Hashable | None = None) -> int:
        self.top += 1
        if name is not None:
            if name in self.names:
                raise KeyError(f"variable {name!r} already allocated")
            self.names[name] = self.top
        return self.top

    def get(self, name: Hashable) -> int:
        v = self.names.get(name)
        return self.new(name) if v is None else v

    def __getitem__(self, name: Hashable) -> int:
        return self.names[name]

    def __contains__(self, name: Hashable) -> bool:
        return name in self.names


@dataclass
class Wcnf:
    """Weighted partial MaxSAT formula. Hard clauses carry weight ``top``."""

    hard: list[Clause] = field(default_factory=list)
    soft: list[tuple[Clause, int]] = field(default_factory=list)
    n_vars: int = 0
    top: int | None = None

    def add_hard(self, clause: Iterable[int]):
        self.hard.append(list(clause))

    def add_soft(self, clause: Iterable[int], weight: int = 1):
        if weight <= 0:
            raise ValueError("soft weights must be positive")
        self.soft.append((list(clause), weight))

    @property
    def soft_total(self) -> int:
        return sum(w for _, w in self.soft)

    @property
    def top_weight(self) -> int:
        return self.soft_total + 1 if self.top is None else self.top

    def max_var(self) -> int:
        m = self.n_vars
        for c in self.hard:
            for lit in c:
                m = max(m, abs(lit))
        for c, _ in self.soft:
            for lit in c:
                m = max(m, abs(lit))
        return m

    def cost(self, model: Sequence[int] | set[int]) -> int:
        """Weight of soft clauses falsified by ``model`` (a set/list of true literals)."""
        true = model if isinstance(model, (set, frozenset)) else set(model)
        return sum(w for c, w in self.soft if not any(lit in true for lit in c))


# --------------------------------------------------------------------------
# Tseitin transformation

def _nnf_negate(expr: Expr) -> Expr:
    if isinstance(expr, Atom):
        return Atom(expr.param, expr.value, not expr.equal)
    if isinstance(expr, Not):
        return expr.arg
    if isinstance(expr, And):
        return Or(tuple(_nnf_negate(a) for a in expr.args))
    if isinstance(expr, Or):
        return And(tuple(_nnf_negate(a) for a in expr.args))
    if isinstance(expr, Implies):
        return And((expr.lhs, _nnf_negate(expr.rhs)))
    return Iff(expr.lhs, _nnf_negate(expr.rhs))


class _Tseitin:
    def __init__(self, alloc: VarAllocator, atom_lit: Callable[[int, int], int]):
        self.alloc = alloc
        self.atom_lit = atom_lit
        self.clauses: list[Clause] = []
        self.cache: dict[Expr, int] = {}

    def lit(self, expr: Expr) -> int:
        """A literal equivalent to ``expr`` (full definitional clauses)."""
        if isinstance(expr, Atom):
            x = self.atom_lit(expr.param, expr.value)
            return x if expr.equal else -x
        if isinstance(expr, Not):
            return -self.lit(expr.arg)
        if isinstance(expr, Implies):
            return self.lit(Or((Not(expr.lhs), expr.rhs)))
        cached = self.cache.get(expr)
        if cached is not None:
            return cached
        if isinstance(expr, Iff):
            a, b = self.lit(expr.lhs), self.lit(expr.rhs)
            d = self.alloc.new()
            self.clauses += [[-d, -a, b], [-d, a, -b], [d, a, b], [d, -a, -b]]
        else:
            args = [self.lit(a) for a in expr.args]
            d = self.alloc.new()
            if isinstance(expr, And):
                self.clauses += [[-d, a] for a in args]
                self.clauses.append([d] + [-a for a in args])
            else:
                self.clauses += [[d, -a] for a in args]
                self.clauses.append([-d] + args)
        self.cache[expr] = d
        return d

    def assert_true(self, expr: Expr):
        if isinstance(expr, Not):
            inner = expr.arg
            if isinstance(inner, Not):
                return self.assert_true(inner.arg)
            if isinstance(inner, Atom):
                return self.clauses.append([self.lit(expr)])
            return self.assert_true(_nnf_negate(inner))
        if isinstance(expr, And):
            for a in expr.args:
                self.assert_true(a)
        elif isinstance(expr, (Or, Implies)):
            disjuncts = list(expr.args) if isinstance(expr, Or) else [Not(expr.lhs), expr.rhs]
            flat: list[Expr] = []
            while disjuncts:
                d = disjuncts.pop(0)
                if isinstance(d, Not) and not isinstance(d.arg, Atom):
                    d = _nnf_negate(d.arg)
                if isinstance(d, Or):
                    disjuncts[:0] = d.args
                elif isinstance(d, Implies):
                    disjuncts[:0] = [Not(d.lhs), d.rhs]
                else:
                    flat.append(d)
            self.clauses.append([self.lit(d) for d in flat])
        elif isinstance(expr, Iff):
            a, b = self.lit(expr.lhs), self.lit(expr.rhs)
            self.clauses += [[-a, b], [a, -b]]
        else:
            self.clauses.append([self.lit(expr)])


def tseitin(expr: Expr, alloc: VarAllocator, atom_lit: Callable[[int, int], int]) -> list[Clause]:
    """Clauses asserting ``expr``; ``atom_lit(param, value)`` gives the literal for ``param = value``."""
    t = _Tseitin(alloc, atom_lit)
    t.assert_true(expr)
    return t.clauses


# --------------------------------------------------------------------------
# cardinality

_PAIRWISE_MAX = 4


def encode_amo(lits: Sequence[int], alloc: VarAllocator) -> list[Clause]:
    """At-most-one: pairwise for tiny groups, otherwise the sequential ladder."""
    n = len(lits)
    if n <= 1:
        return []
    if n <= _PAIRWISE_MAX:
        return [[-lits[i], -lits[j]] for i in range(n) for j in range(i + 1, n)]
    # s[i] <=> "one of lits[0..i] is true" (only the forward direction is needed)
    s = [alloc.new() for _ in range(n - 1)]
    clauses = [[-lits[0], s[0]]]
    for i in range(1, n - 1):
        clauses.append([-lits[i], s[i]])
        clauses.append([-s[i - 1], s[i]])
        clauses.append([-lits[i], -s[i - 1]])
    clauses.append([-lits[n - 1], -s[n - 2]])
    return clauses


def encode_alo(lits: Sequence[int], alloc: VarAllocator | None = None) -> list[Clause]:
    if not lits:
        raise ValueError("at-least-one over an empty literal list")
    return [list(lits)]


def encode_eo(lits: Sequence[int], alloc: VarAllocator) -> list[Clause]:
    if not lits:
        raise ValueError("exactly-one over an empty literal list")
    return encode_alo(lits) + encode_amo(lits, alloc)


# --------------------------------------------------------------------------
# incremental pseudo-Boolean  sum w_i * b_i <= k

class IncrementalPB:
    """Generalized totalizer over weighted literals, tightenable by adding units.

    Each tree node exposes one output literal per reachable partial sum; sums
    above the initial bound share a single overflow output. Outputs are
    implied by their inputs, so forbidding the root outputs above ``k`` lets
    unit propagation push every term heavier than ``k`` to false. With unit
    weights the tree is the classic totalizer.
    """

    def __init__(self, terms: Sequence[tuple[int, int]], k: int, alloc: VarAllocator):
        if k < 0:
            raise ValueError("bound must be non-negative")
        for w, _ in terms:
            if w < 1:
                raise ValueError("weights must be positive")
        self.terms = list(terms)
        self.k = k
        self.alloc = alloc
        self.cap = k + 1
        self.clauses: list[Clause] = []
        self.root: dict[int, int] = self._build(self.terms) if self.terms else {}
        self.clauses += self._forbid_above(k)

    def _build(self, terms) -> dict[int, int]:
        if len(terms) == 1:
            w, lit = terms[0]
            return {min(w, self.cap): lit}
        mid = len(terms) // 2
        left, right = self._build(terms[:mid]), self._build(terms[mid:])
        sums = set()
        for a in left:
            sums.add(a)
            for b in right:
                sums.add(min(a + b, self.cap))
        sums.update(right)
        out = {s: self.alloc.new() for s in sorted(sums)}
        cl = self.clauses
        for a, la in left.items():
            cl.append([-la, out[a]])
        for b, lb in right.items():
            cl.append([-lb, out[b]])
        for a, la in left.items():
            for b, lb in right.items():
                cl.append([-la, -lb, out[min(a + b, self.cap)]])
        return out

    def _forbid_above(self, k: int) -> list[Clause]:
        return [[-lit] for s, lit in self.root.items() if s > k]

    def update(self, k: int) -> list[Clause]:
        """Tighten to ``sum <= k``; returns only the clauses to add."""
        if k >= self.k:
            raise ValueError(f"new bound {k} must be below the current bound {self.k}")
        if k < 0:
            raise ValueError("bound must be non-negative")
        new = [[-lit] for s, lit in self.root.items() if k < s <= self.k]
        self.k = k
        self.clauses += new
        return new


def encode_pb_leq(terms: Sequence[tuple[int, int]], k: int, alloc: VarAllocator) -> IncrementalPB:
    return IncrementalPB(terms, k, alloc)


def encode_atmost(lits: Sequence[int], k: int, alloc: VarAllocator) -> list[Clause]:
    """Plain cardinality ``sum lits <= k`` (non-incremental use of the totalizer)."""
    if k >= len(lits):
        return []
    return IncrementalPB([(1, l) for l in lits], k, alloc).clauses


# --------------------------------------------------------------------------
# file formats

def write_dimacs(clauses: Sequence[Sequence[int]], sink: TextIO, n_vars: int | None = None):
    if n_vars is None:
        n_vars = max((abs(l) for c in clauses for l in c), default=0)
    sink.write(f"p cnf {n_vars} {len(clauses)}\n")
    for c in clauses:
        sink.write(" ".join(map(str, c)) + " 0\n")


def write_wcnf(wcnf: Wcnf, sink: TextIO):
    top = wcnf.top_weight
    if any(w >= top for _, w in wcnf.soft):
        raise ValueError("soft weights must be below top")
    n = wcnf.max_var()
    sink.write(f"p wcnf {n} {len(wcnf.hard) + len(wcnf.soft)} {top}\n")
    for c in wcnf.hard:
        sink.write(f"{top} " + " ".join(map(str, c)) + " 0\n")
    for c, w in wcnf.soft:
        sink.write(f"{w} " + " ".join(map(str, c)) + " 0\n")


def dumps_wcnf(wcnf: Wcnf) -> str:
    buf = io.StringIO()
    write_wcnf(wcnf, buf)
    return buf.getvalue()


def _clause_lines(text: str):
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("c"):
            yield line


def parse_dimacs(text: str) -> tuple[int, list[Clause]]:
    n_vars, clauses, pending = 0, [], []
    for line in _clause_lines(text):
        if line.startswith("p"):
            n_vars = int(line.split()[2])
            continue
        for tok in line.split():
            lit = int(tok)
            if lit == 0:
                clauses.append(pending)
                pending = []
            else:
                pending.append(lit)
    return n_vars, clauses


def parse_wcnf(text: str) -> Wcnf:
    """Read classic ``p wcnf`` files (clauses may not span lines)."""
    wcnf, top = Wcnf(), None
    for line in _clause_lines(text):
        if line.startswith("p"):
            parts = line.split()
            if len(parts) < 5 or parts[1] != "wcnf":
                raise ValueError(f"bad header: {line!r}")
            wcnf.n_vars = int(parts[2])
            top = int(parts[4])
            continue
        nums = [int(tok) for tok in line.split()]
        if not nums or nums[-1] != 0:
            raise ValueError(f"clause line not terminated by 0: {line!r}")
        w, lits = nums[0], nums[1:-1]
        if top is not None and w >= top:
            wcnf.hard.append(lits)
        else:
            wcnf.soft.append((lits, w))
    wcnf.top = top
    return wcnf


def encode_test_block(model, alloc: VarAllocator, name=None) -> tuple[list[list[int]], list[Clause]]:
    """Variables and clauses stating that one test is a valid full assignment.

    Returns ``(x, clauses)`` where ``x[p][v]`` is the variable for ``p = v``.
    When ``name`` is given, variables are registered as ``(name, p, v)``.
    """
    x = [
        [alloc.new(None if name is None else (name, p, v)) for v in range(g)]
        for p, g in enumerate(model.sizes)
    ]
    clauses: list[Clause] = []
    for row in x:
        clauses += encode_eo(row, alloc)
    atom = lambda p, v: x[p][v]
    for c in model.constraints:
        clauses += tseitin(c, alloc, atom)
    return x, clauses
