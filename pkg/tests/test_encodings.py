import io
import re
from fractions import Fraction

import pytest

from ctmax.cli import read_suite
from ctmax.encodings import (
    ALL_VARIANTS, DecodeError, EncodingError, EncodingVariant, apply_symmetry, apply_test_order,
    build_can_wcnf, build_combined_wcnf, build_mcac, build_ratio, build_tn_wcnf, decode_tests,
    required_coverage, sat_clauses, u_weight,
)
from ctmax.model import model_from_profile
from ctmax.optimizers import linear_maxsat
from ctmax.sat import Engine
from ctmax.tuples import build_catalog, dummy_test, lower_bound
from ctmax.verify import brute_force_can, brute_force_tn, verify_suite

from conftest import DATA

CCX = EncodingVariant("CCX", "a0")
A2 = EncodingVariant("CCX", "a2")
CX = EncodingVariant("CX")


def solve(clauses, n_vars, assumptions=()):
    e = Engine()
    while e.n_vars < n_vars:
        e.new_var()
    e.add_clauses(clauses)
    return e.solve(assumptions)


@pytest.fixture(scope="module")
def auto_cat(autonomous):
    return build_catalog(autonomous, 2)


@pytest.fixture(scope="module")
def cat23():
    m = model_from_profile("2^3")
    return m, build_catalog(m, 2)


def test_variant_parse():
    assert EncodingVariant.parse("cx") == CX
    assert EncodingVariant.parse("ccx-a2") == A2
    assert str(EncodingVariant.parse("CCX")) == "ccx-a0"
    with pytest.raises(EncodingError):
        EncodingVariant.parse("cxx")
    with pytest.raises(EncodingError):
        EncodingVariant("CCX", "a9")


def test_variable_counts(autonomous, auto_cat):
    cx = build_mcac(autonomous, auto_cat, 10, CX)
    assert sum(len(row) for i in range(1, 11) for row in cx.x[i]) == 100
    assert sum(len(layer) for layer in cx.c if layer is not None) == 330
    ccx = build_mcac(autonomous, auto_cat, 10, CCX)
    assert sum(len(layer) for layer in ccx.c) == 363
    # only allowed tuples get coverage variables
    assert all(len(layer) == 33 for layer in ccx.c)


@pytest.mark.parametrize("variant", ALL_VARIANTS, ids=str)
def test_decision_threshold(variant):
    m = model_from_profile("2^4")
    cat = build_catalog(m, 2)
    assert not solve(sat_clauses(build_mcac(m, cat, 4, variant)), 0)
    ctx = build_mcac(m, cat, 5, variant)
    out = solve(sat_clauses(ctx), ctx.n_vars)
    assert out
    assert verify_suite(m, cat, decode_tests(ctx, out)).complete


@pytest.mark.parametrize("variant", ALL_VARIANTS, ids=str)
def test_variants_agree_on_corpus(variant, corpus):
    for _, m in corpus[::5]:
        cat = build_catalog(m, 2)
        witness = lower_bound(cat).lb_witness
        can = brute_force_can(m, 2)
        for n in (can - 1, can):
            if n < len(witness):
                continue
            ctx = build_mcac(m, cat, n, variant)
            apply_symmetry(ctx, witness)
            assert bool(solve(sat_clauses(ctx), ctx.n_vars)) == (n == can)


def test_ten_row_model_decodes(autonomous, auto_cat):
    with open(DATA / "autonomous_ca10.csv", newline="") as fh:
        suite = read_suite(autonomous, fh)
    ctx = build_mcac(autonomous, auto_cat, 10, CX)
    units = [[ctx.x[i][p][v]] for i, test in enumerate(suite, 1) for p, v in enumerate(test)]
    out = solve(sat_clauses(ctx) + units, ctx.n_vars)
    assert out and decode_tests(ctx, out) == suite


def test_symmetry_pins_witness(autonomous, auto_cat):
    b = lower_bound(auto_cat)
    ctx = build_mcac(autonomous, auto_cat, 10, CCX)
    units = apply_symmetry(ctx, b.lb_witness)
    assert len(b.lb_witness) == 7 and len(units) == 14
    E, S = autonomous.param_index("E"), autonomous.param_index("S")
    first = auto_cat.tuples[b.lb_witness[0]]
    assert [[ctx.x[1][p][v]] for p, v in first] == units[:2]
    assert {p for p, _ in first} == {E, S}
    assert solve(sat_clauses(ctx), ctx.n_vars)
    with pytest.raises(EncodingError):
        apply_symmetry(build_mcac(autonomous, auto_cat, 6, CCX), b.lb_witness)
    assert apply_symmetry(build_mcac(autonomous, auto_cat, 3, CCX), []) == []


def test_symmetry_and_order_are_exclusive(autonomous, auto_cat):
    b = lower_bound(auto_cat)
    ctx = build_mcac(autonomous, auto_cat, 8, A2)
    apply_test_order(ctx, b.lb_subset)
    with pytest.raises(EncodingError):
        apply_symmetry(ctx, b.lb_witness)
    ctx = build_mcac(autonomous, auto_cat, 8, A2)
    apply_symmetry(ctx, b.lb_witness)
    with pytest.raises(EncodingError):
        apply_test_order(ctx, b.lb_subset)
    with pytest.raises(EncodingError):
        build_tn_wcnf(ctx)


def test_order_is_sound(corpus):
    # ordering never changes the optimal tuple number
    for _, m in corpus[:12]:
        cat = build_catalog(m, 2)
        subset = lower_bound(cat).lb_subset
        for n in (2, 3):
            ctx = build_mcac(m, cat, n, A2)
            assert apply_test_order(ctx, subset)
            res = linear_maxsat(build_tn_wcnf(ctx))
            assert len(cat.allowed_ids) - res.cost == brute_force_tn(m, 2, n)
            suite = decode_tests(ctx, res.model)
            keys = [tuple(test[p] for p in subset) for test in suite]
            assert keys == sorted(keys)


def test_u_weights():
    assert [u_weight(i, 3, "unit") for i in (5, 6, 7)] == [1, 1, 1]
    assert [u_weight(i, 3, "linear") for i in (5, 6, 7)] == [1, 2, 3]
    assert [u_weight(i, 3, "exponential") for i in (5, 6, 7)] == [1, 2, 4]
    with pytest.raises(EncodingError):
        u_weight(5, 3, "cubic")


def test_can_soft_clauses(autonomous, auto_cat):
    ctx = build_mcac(autonomous, auto_cat, 10, CCX, lb=6)
    unit = build_can_wcnf(ctx, "unit")
    assert unit.soft == [([-ctx.u[10]], 1), ([-ctx.u[9]], 1), ([-ctx.u[8]], 1)]
    ctx = build_mcac(autonomous, auto_cat, 10, CCX, lb=6)
    linear = build_can_wcnf(ctx, "linear")
    assert linear.soft == [([-ctx.u[10]], 3), ([-ctx.u[9]], 2), ([-ctx.u[8]], 1)]


@pytest.mark.parametrize("variant", ALL_VARIANTS, ids=str)
@pytest.mark.parametrize("weights,cost", [("unit", 1), ("linear", 1), ("exponential", 1)])
def test_can_optimum(variant, weights, cost):
    m = model_from_profile("2^4")
    cat = build_catalog(m, 2)
    ctx = build_mcac(m, cat, 8, variant, lb=3)
    res = linear_maxsat(build_can_wcnf(ctx, weights))
    suite = decode_tests(ctx, res.model)
    assert res.optimal and res.cost == cost and len(suite) == 5
    assert verify_suite(m, cat, suite).complete


def test_nux_is_neutral(corpus):
    for _, m in corpus[::4]:
        cat = build_catalog(m, 2)
        b = lower_bound(cat)
        can = brute_force_can(m, 2)
        n = can + 2
        plain = linear_maxsat(build_can_wcnf(build_mcac(m, cat, n, CCX, b.lb)))
        ctx = build_mcac(m, cat, n, CCX, b.lb)
        nux = linear_maxsat(build_can_wcnf(ctx, nux=dummy_test(m)))
        assert plain.cost == nux.cost == can - (b.lb + 1)
        assert len(decode_tests(ctx, nux.model)) == can


def test_exponential_overflow_rejected():
    m = model_from_profile("2^2")
    cat = build_catalog(m, 2)
    ctx = build_mcac(m, cat, 70, CCX, lb=3)
    with pytest.raises(EncodingError, match="linear"):
        build_can_wcnf(ctx, "exponential")


@pytest.mark.parametrize("variant", ALL_VARIANTS, ids=str)
def test_tn_costs(variant, cat23, autonomous, auto_cat):
    m, cat = cat23
    for n, cost in ((1, 9), (2, 6), (4, 0)):
        res = linear_maxsat(build_tn_wcnf(build_mcac(m, cat, n, variant)))
        assert res.cost == cost
    res = linear_maxsat(build_tn_wcnf(build_mcac(autonomous, auto_cat, 10, variant)))
    assert res.cost == 0


def test_tn_over_all_tuples_adds_forbidden(autonomous, auto_cat):
    everything = range(len(auto_cat))
    for n in (1, 2):
        allowed = linear_maxsat(build_tn_wcnf(build_mcac(autonomous, auto_cat, n, A2)))
        full = linear_maxsat(build_tn_wcnf(
            build_mcac(autonomous, auto_cat, n, A2, tuple_ids=everything)))
        assert full.cost - allowed.cost == len(auto_cat.forbidden_ids) == 4


def test_tn_tie_break_keeps_coverage(cat23):
    m, cat = cat23
    ctx = build_mcac(m, cat, 2, A2)
    bonus = {tid: tid % 3 for tid in cat.allowed_ids}
    res = linear_maxsat(build_tn_wcnf(ctx, bonus))
    assert len(verify_suite(m, cat, decode_tests(ctx, res.model)).covered) == 6


@pytest.mark.parametrize("variant", ALL_VARIANTS, ids=str)
def test_combined(variant, cat23):
    m, cat = cat23
    ctx = build_mcac(m, cat, 6, variant, lb=3)
    res = linear_maxsat(build_combined_wcnf(ctx))
    suite = decode_tests(ctx, res.model)
    assert res.cost == 0 and len(suite) == 4
    m4 = model_from_profile("2^4")
    c4 = build_catalog(m4, 2)
    res = linear_maxsat(build_combined_wcnf(build_mcac(m4, c4, 8, variant, lb=3)))
    assert res.cost == 1


@pytest.mark.parametrize("variant", ALL_VARIANTS, ids=str)
def test_combined_short_suites(variant, corpus):
    # fewer tests than needed: every test is used and coverage is maximal
    for _, m in corpus[::7]:
        cat = build_catalog(m, 2)
        lb = lower_bound(cat).lb
        can = brute_force_can(m, 2)
        for n in range(1, min(can, 4)):
            ctx = build_mcac(m, cat, n, variant, lb=lb)
            wcnf = build_combined_wcnf(ctx)
            res = linear_maxsat(wcnf)
            extra = max(0, n - (lb + 1))
            missing = len(cat.allowed_ids) - brute_force_tn(m, 2, n)
            assert res.cost == missing * (extra + 1) + extra
            assert len(decode_tests(ctx, res.model)) == n


@pytest.mark.parametrize("rt,size", [(Fraction(1, 2), 2), (1, 4), (Fraction(1, 100), 1),
                                     (Fraction(3, 4), 3)])
def test_ratio(rt, size, cat23):
    m, cat = cat23
    ctx = build_mcac(m, cat, 6, A2)
    res = linear_maxsat(build_ratio(ctx, rt))
    suite = decode_tests(ctx, res.model)
    assert len(suite) == size and res.cost == size - 1
    assert len(verify_suite(m, cat, suite).covered) >= required_coverage(12, rt)


def test_required_coverage():
    assert required_coverage(12, Fraction(55, 100)) == 7
    assert required_coverage(12, 1) == 12
    for bad in (0, Fraction(11, 10), -1):
        with pytest.raises(EncodingError):
            required_coverage(12, bad)


@pytest.mark.parametrize("variant", ALL_VARIANTS, ids=str)
def test_ratio_matches_tuple_number(variant, corpus):
    for _, m in corpus[::6]:
        cat = build_catalog(m, 2)
        total = len(cat.allowed_ids)
        for rt in (Fraction(1, 3), Fraction(2, 3), Fraction(9, 10)):
            need = required_coverage(total, rt)
            expect = next(n for n in range(1, 4) if brute_force_tn(m, 2, n) >= need) \
                if brute_force_tn(m, 2, 3) >= need else None
            if expect is None:
                continue
            ctx = build_mcac(m, cat, 4, variant)
            suite = decode_tests(ctx, linear_maxsat(build_ratio(ctx, rt)).model)
            assert len(suite) == expect
            assert len(verify_suite(m, cat, suite).covered) >= need


def test_ratio_requires_zero_lb(cat23):
    m, cat = cat23
    with pytest.raises(EncodingError):
        build_ratio(build_mcac(m, cat, 4, A2, lb=2), 1)


def test_decode_errors(cat23):
    m, cat = cat23
    ctx = build_mcac(m, cat, 2, CX)
    with pytest.raises(DecodeError):
        decode_tests(ctx, set())
    ctx = build_mcac(m, cat, 4, CCX, lb=1)
    build_can_wcnf(ctx)
    x = {ctx.x[i][p][0] for i in range(1, 5) for p in range(3)}
    with pytest.raises(DecodeError, match="prefix"):
        decode_tests(ctx, x | {ctx.u[4]})
    assert len(decode_tests(ctx, x | {ctx.u[3]})) == 3


def test_var_map(autonomous, auto_cat):
    ctx = build_mcac(autonomous, auto_cat, 8, CX, lb=6)
    build_can_wcnf(ctx)
    build_tn_wcnf(ctx)
    buf = io.StringIO()
    ctx.write_var_map(buf)
    lines = buf.getvalue().splitlines()
    pattern = re.compile(r"^(x \d+ \S+ \S+|u \d+|c (\d+|top) \S+=\S+,\S+=\S+) -> \d+$")
    assert all(pattern.match(line) for line in lines)
    assert "x 1 L dy -> 1" in lines and "u 8 -> " + str(ctx.u[8]) in lines
    vars_ = [int(line.rsplit(" ", 1)[1]) for line in lines]
    assert len(set(vars_)) == len(vars_)
