"""SAT and MaxSAT formulations of covering-array problems over one variable map.

Test indices run from 1 to N. For the cumulative (CCX) base, layer 0 of the
coverage variables is also allocated: ``c[i][tau]`` then means "tau is
covered by some test j <= i".
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence, TextIO

from .cnf import Clause, VarAllocator, Wcnf, encode_atmost, encode_eo, tseitin
from .model import SutModel, Test
from .tuples import TupleCatalog

BASES = ("CX", "CCX")
EQ_A = ("a0", "a1", "a2")
WEIGHT_SCHEMES = ("unit", "linear", "exponential")


class EncodingError(ValueError):
    pass


@dataclass(frozen=True)
class EncodingVariant:
    base: str = "CCX"
    eq_a: str = "a0"

    def __post_init__(self):
        if self.base not in BASES:
            raise EncodingError(f"unknown base {self.base!r}")
        if self.eq_a not in EQ_A:
            raise EncodingError(f"unknown coverage-link variant {self.eq_a!r}")

    @classmethod
    def parse(cls, text: str) -> "EncodingVariant":
        """``"cx"``, ``"ccx"``, ``"ccx-a2"`` ..."""
        base, _, eq = text.lower().partition("-")
        return cls(base.upper(), eq or "a0")

    def __str__(self) -> str:
        return "cx" if self.base == "CX" else f"ccx-{self.eq_a}"


ALL_VARIANTS = (
    EncodingVariant("CX"),
    EncodingVariant("CCX", "a0"),
    EncodingVariant("CCX", "a1"),
    EncodingVariant("CCX", "a2"),
)


def u_weight(i: int, lb: int, scheme: str) -> int:
    k = i - (lb + 2)
    if scheme == "unit":
        return 1
    if scheme == "linear":
        return k + 1
    if scheme == "exponential":
        return 1 << k
    raise EncodingError(f"unknown weight scheme {scheme!r}")


class EncodingContext:
    """Variable maps and clause groups for one (model, tuples, N) instance."""

    def __init__(self, model: SutModel, catalog: TupleCatalog, N: int,
                 variant: EncodingVariant = EncodingVariant(), lb: int = 0,
                 tuple_ids: Iterable[int] | None = None):
        if N < 1:
            raise EncodingError("N must be at least 1")
        self.model = model
        self.catalog = catalog
        self.N = N
        self.t = catalog.t
        self.lb = lb
        self.variant = variant
        self.tuple_ids = sorted(catalog.allowed_ids if tuple_ids is None else tuple_ids)
        self.alloc = VarAllocator()
        self.x: list[list[list[int]] | None] = [None]
        self.c: list[dict[int, int] | None] = []
        self.ctop: dict[int, int] = {}
        self.u: dict[int, int] = {}
        self.hard: list[Clause] = []      # X, SUTX, CX / CCX (a), (c)
        self.cover: list[Clause] = []     # C / CCX (b)
        self.symmetry: list[Clause] = []
        self.order: list[Clause] = []
        self._build()

    @property
    def cumulative(self) -> bool:
        return self.variant.base == "CCX"

    @property
    def n_vars(self) -> int:
        return self.alloc.top

    def _build(self):
        model, alloc, N = self.model, self.alloc, self.N
        sizes = model.sizes
        for i in range(1, N + 1):
            self.x.append([[alloc.new(("x", i, p, v)) for v in range(g)]
                           for p, g in enumerate(sizes)])
        first = 0 if self.cumulative else 1
        self.c = [None] * first if not self.cumulative else []
        for i in range(first, N + 1):
            self.c.append({tid: alloc.new(("c", i, tid)) for tid in self.tuple_ids})
        hard = self.hard
        for i in range(1, N + 1):
            xi = self.x[i]
            for row in xi:
                hard += encode_eo(row, alloc)
            for expr in model.constraints:
                hard += tseitin(expr, alloc, lambda p, v, xi=xi: xi[p][v])
        tuples = self.catalog.tuples
        eq_a = self.variant.eq_a
        for i in range(1, N + 1):
            xi, ci = self.x[i], self.c[i]
            prev = self.c[i - 1] if self.cumulative else None
            for tid in self.tuple_ids:
                cv = ci[tid]
                xs = [xi[p][v] for p, v in tuples[tid]]
                if prev is None:
                    hard += [[-cv, xv] for xv in xs]
                    continue
                pv = prev[tid]
                hard += [[-cv, pv, xv] for xv in xs]
                if eq_a in ("a1", "a2"):
                    hard.append([-pv, cv])
                if eq_a == "a2":
                    hard.append([cv] + [-xv for xv in xs])
        if self.cumulative:
            top, bottom = self.c[N], self.c[0]
            for tid in self.tuple_ids:
                hard.append([-top[tid], -bottom[tid]])
                self.cover.append([top[tid]])
        else:
            for tid in self.tuple_ids:
                self.cover.append([self.c[i][tid] for i in range(1, N + 1)])

    # ------------------------------------------------------------------

    def covered_lit(self, tid: int) -> int:
        """Literal true iff the tuple counts as covered (c_tau or c^N_tau)."""
        if self.cumulative:
            return self.c[self.N][tid]
        v = self.ctop.get(tid)
        if v is None:
            v = self.ctop[tid] = self.alloc.new(("c", "top", tid))
        return v

    def reify_cover(self) -> list[Clause]:
        """RC: c_tau <-> OR_i c^i_tau (CX base only)."""
        out = []
        for tid in self.tuple_ids:
            ct = self.covered_lit(tid)
            layer = [self.c[i][tid] for i in range(1, self.N + 1)]
            out.append([-ct] + layer)
            out += [[ct, -ci] for ci in layer]
        return out

    def ensure_u(self, lo: int) -> list[int]:
        """Indicator variables u_i for i in lo..N (created once)."""
        for i in range(lo, self.N + 1):
            if i not in self.u:
                self.u[i] = self.alloc.new(("u", i))
        return [i for i in sorted(self.u) if i >= lo]

    def u_links(self, lo: int, partial: bool = False) -> list[Clause]:
        """BSU plus CU (CX base) or CCU (CCX base) for tests lo..N.

        CCU says an unused test comes after full coverage. With ``partial``
        the CCX link only forbids unused tests from adding coverage.
        """
        idx = self.ensure_u(lo)
        out = [[-self.u[i + 1], self.u[i]] for i in idx if i + 1 in self.u]
        for i in idx:
            ui = self.u[i]
            if self.cumulative and partial:
                below, here = self.c[i - 1], self.c[i]
                out += [[-here[tid], below[tid], ui] for tid in self.tuple_ids]
            elif self.cumulative:
                below = self.c[i - 1]
                out += [[below[tid], ui] for tid in self.tuple_ids]
            else:
                ci = self.c[i]
                out += [[-ci[tid], ui] for tid in self.tuple_ids]
        return out

    def nux(self, dummy: Test, lo: int) -> list[Clause]:
        out = []
        for i in self.ensure_u(lo):
            for p, v in enumerate(dummy):
                out.append([self.u[i], self.x[i][p][v]])
        return out

    def var_map_lines(self) -> list[str]:
        model, tuples = self.model, self.catalog.tuples

        def tup(tid):
            return ",".join(
                f"{model.parameters[p].name}={model.parameters[p].domain[v]}" for p, v in tuples[tid]
            )

        lines = []
        for i in range(1, self.N + 1):
            for p, row in enumerate(self.x[i]):
                param = model.parameters[p]
                for v, var in enumerate(row):
                    lines.append(f"x {i} {param.name} {param.domain[v]} -> {var}")
        for i in sorted(self.u):
            lines.append(f"u {i} -> {self.u[i]}")
        for i, layer in enumerate(self.c):
            if layer is None:
                continue
            for tid, var in layer.items():
                lines.append(f"c {i} {tup(tid)} -> {var}")
        for tid, var in self.ctop.items():
            lines.append(f"c top {tup(tid)} -> {var}")
        return lines

    def write_var_map(self, sink: TextIO):
        for line in self.var_map_lines():
            sink.write(line + "\n")


def build_mcac(model: SutModel, catalog: TupleCatalog, N: int,
               variant: EncodingVariant = EncodingVariant(), lb: int = 0,
               tuple_ids=None) -> EncodingContext:
    """Decision encoding: a CA(N; t, S) exists iff ``ctx.sat_clauses()`` is satisfiable."""
    return EncodingContext(model, catalog, N, variant, lb, tuple_ids)


def sat_clauses(ctx: EncodingContext) -> list[Clause]:
    return ctx.hard + ctx.cover + ctx.symmetry + ctx.order


def apply_symmetry(ctx: EncodingContext, lb_witness: Sequence[int]) -> list[Clause]:
    """Pin witness tuple j to test j (mutually exclusive tuples need distinct tests)."""
    if ctx.order:
        raise EncodingError("fixed-tuple symmetry breaking conflicts with test ordering")
    if len(lb_witness) > ctx.N:
        raise EncodingError(f"{len(lb_witness)} witness tuples do not fit in {ctx.N} tests")
    units = []
    for j, tid in enumerate(lb_witness, start=1):
        for p, v in ctx.catalog.tuples[tid]:
            units.append([ctx.x[j][p][v]])
    ctx.symmetry = units
    return units


MAX_ORDER_CLAUSES = 200_000


def apply_test_order(ctx: EncodingContext, subset: Sequence[int]) -> list[Clause]:
    """Require tests to be sorted by their value tuple on ``subset``.

    Any suite can be permuted into this order without changing what it
    covers, so the constraint is sound whenever tests are interchangeable
    (tuple number). Skipped when the clause count would explode.
    """
    if ctx.symmetry:
        raise EncodingError("test ordering conflicts with fixed-tuple symmetry breaking")
    cat = ctx.catalog
    ids = [tid for tid in cat.subset_tuples[cat.subsets.index(tuple(subset))]
           if tid in cat.allowed_ids]
    if len(ids) ** 2 // 2 * (ctx.N - 1) > MAX_ORDER_CLAUSES:
        ctx.order = []
        return []
    clauses = []
    for i in range(1, ctx.N):
        lo, hi = ctx.x[i], ctx.x[i + 1]
        for a in range(len(ids)):
            neg_a = [-lo[p][v] for p, v in cat.tuples[ids[a]]]
            for b in range(a):
                clauses.append(neg_a + [-hi[p][v] for p, v in cat.tuples[ids[b]]])
    ctx.order = clauses
    return clauses


def _check_exponential(ctx: EncodingContext, lo: int, scheme: str):
    if scheme == "exponential" and ctx.N - lo >= 62:
        raise EncodingError(
            f"exponential weights up to 2^{ctx.N - lo} overflow 64-bit integers; use 'linear'"
        )


def build_can_wcnf(ctx: EncodingContext, weights: str = "unit",
                   nux: Test | None = None) -> Wcnf:
    """Minimise the number of tests beyond lb+1 (SoftU/WSoftU, BSU, CU/CCU, optional NUX)."""
    lo = ctx.lb + 2
    _check_exponential(ctx, lo, weights)
    wcnf = Wcnf()
    for c in sat_clauses(ctx):
        wcnf.add_hard(c)
    if lo <= ctx.N:
        for c in ctx.u_links(lo):
            wcnf.add_hard(c)
        if nux is not None:
            for c in ctx.nux(nux, lo):
                wcnf.add_hard(c)
        for i in range(ctx.N, lo - 1, -1):
            wcnf.add_soft([-ctx.u[i]], u_weight(i, ctx.lb, weights))
    wcnf.n_vars = ctx.n_vars
    return wcnf


def build_tn_wcnf(ctx: EncodingContext, tie_break: dict[int, int] | None = None) -> Wcnf:
    """Maximise covered tuples with exactly N tests (cost = |tuples| - T(N)).

    ``tie_break`` maps tuple ids to small nonnegative bonuses. Each soft then
    weighs ``W + bonus`` with ``W`` above the bonus total, so coverage stays the
    primary objective and the bonus only ranks equally covering suites.
    """
    if ctx.symmetry:
        raise EncodingError("fixed-tuple symmetry breaking is unsound for the tuple number")
    wcnf = Wcnf()
    for c in ctx.hard + ctx.order:
        wcnf.add_hard(c)
    if not ctx.cumulative:
        for c in ctx.reify_cover():
            wcnf.add_hard(c)
    bonus = tie_break or {}
    base = 1 + sum(bonus.get(tid, 0) for tid in ctx.tuple_ids) if bonus else 1
    for tid in ctx.tuple_ids:
        wcnf.add_soft([ctx.covered_lit(tid)], base + bonus.get(tid, 0))
    wcnf.n_vars = ctx.n_vars
    return wcnf


def build_combined_wcnf(ctx: EncodingContext, weights: str = "unit") -> Wcnf:
    """Cover as many tuples as possible, then use as few tests as possible."""
    if ctx.symmetry:
        raise EncodingError("fixed-tuple symmetry breaking is unsound for partial coverage")
    lo = ctx.lb + 2
    _check_exponential(ctx, lo, weights)
    wcnf = Wcnf()
    for c in ctx.hard:
        wcnf.add_hard(c)
    if not ctx.cumulative:
        for c in ctx.reify_cover():
            wcnf.add_hard(c)
    u_total = 0
    if lo <= ctx.N:
        for c in ctx.u_links(lo):
            wcnf.add_hard(c)
        for i in range(ctx.N, lo - 1, -1):
            w = u_weight(i, ctx.lb, weights)
            u_total += w
            wcnf.add_soft([-ctx.u[i]], w)
    for tid in ctx.tuple_ids:
        wcnf.add_soft([ctx.covered_lit(tid)], u_total + 1)
    wcnf.n_vars = ctx.n_vars
    return wcnf


def required_coverage(n_tuples: int, rt) -> int:
    rt = Fraction(rt)
    if not 0 < rt <= 1:
        raise EncodingError(f"coverage ratio {rt} outside (0, 1]")
    return math.ceil(n_tuples * rt)


def build_ratio(ctx: EncodingContext, rt) -> Wcnf:
    """Fewest tests covering at least ceil(rt * |tuples|) tuples (cost = size - 1)."""
    if ctx.symmetry:
        raise EncodingError("fixed-tuple symmetry breaking is unsound for partial coverage")
    if ctx.lb != 0:
        raise EncodingError("the ratio encoding requires lb = 0")
    need = required_coverage(len(ctx.tuple_ids), rt)
    wcnf = Wcnf()
    for c in ctx.hard:
        wcnf.add_hard(c)
    if not ctx.cumulative:
        for c in ctx.reify_cover():
            wcnf.add_hard(c)
    missing = [-ctx.covered_lit(tid) for tid in ctx.tuple_ids]
    for c in encode_atmost(missing, len(ctx.tuple_ids) - need, ctx.alloc):
        wcnf.add_hard(c)
    if ctx.N >= 2:
        for c in ctx.u_links(2, partial=True):
            wcnf.add_hard(c)
        for i in range(ctx.N, 1, -1):
            wcnf.add_soft([-ctx.u[i]], 1)
    wcnf.n_vars = ctx.n_vars
    return wcnf


class DecodeError(RuntimeError):
    pass


def _truth(model):
    if isinstance(model, (set, frozenset)):
        return lambda var: var in model
    if hasattr(model, "model") and model.model is not None:
        model = model.model
    return lambda var: bool(model[var]) if var < len(model) else False


def decode_tests(ctx: EncodingContext, model) -> list[Test]:
    """Tests selected by a model: all of 1..N, minus those whose u_i is false."""
    truth = _truth(model)
    used = []
    for i in range(1, ctx.N + 1):
        ui = ctx.u.get(i)
        used.append(ui is None or truth(ui))
    first_off = next((k for k, on in enumerate(used) if not on), len(used))
    if any(used[first_off:]):
        raise DecodeError("selected tests do not form a prefix (BSU violated)")
    suite = []
    for i in range(1, first_off + 1):
        test = []
        for p, row in enumerate(ctx.x[i]):
            vals = [v for v, var in enumerate(row) if truth(var)]
            if len(vals) != 1:
                raise DecodeError(f"test {i}, parameter {p}: {len(vals)} values selected")
            test.append(vals[0])
        suite.append(tuple(test))
    return suite
