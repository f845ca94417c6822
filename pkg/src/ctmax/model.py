"""System-under-test models: parameters, constraint expressions and the model file format.

A model file looks like::

    # autonomous driving
    [PARAMETERS]
    L: dy, ni;
    E: hw, ur, co;
    [CONSTRAINTS]
    (L = ni && E = co) -> S != ca;

Operator precedence, tightest first: ``!``, ``&&``, ``||``, ``->`` (right
associative), ``<->``.
"""
from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, Union


class ModelError(ValueError):
    """Semantic problem in a model (unknown names, duplicates, ...)."""


class ModelSyntaxError(ModelError):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"line {line}, column {col}: {msg}")
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Parameter:
    name: str
    domain: tuple[str, ...]

    def __post_init__(self):
        if not self.domain:
            raise ModelError(f"parameter {self.name!r} has an empty domain")
        if len(set(self.domain)) != len(self.domain):
            raise ModelError(f"parameter {self.name!r} has duplicate values")

    @property
    def size(self) -> int:
        return len(self.domain)


# Constraint expression tree. Atoms carry resolved indices into the owning model.

@dataclass(frozen=True)
class Atom:
    param: int
    value: int
    equal: bool = True


@dataclass(frozen=True)
class Not:
    arg: "Expr"


@dataclass(frozen=True)
class And:
    args: tuple["Expr", ...]


@dataclass(frozen=True)
class Or:
    args: tuple["Expr", ...]


@dataclass(frozen=True)
class Implies:
    lhs: "Expr"
    rhs: "Expr"


@dataclass(frozen=True)
class Iff:
    lhs: "Expr"
    rhs: "Expr"


Expr = Union[Atom, Not, And, Or, Implies, Iff]
Test = tuple[int, ...]


def evaluate(expr: Expr, test: Sequence[int]) -> bool:
    """Evaluate ``expr`` under a full assignment given as value indices."""
    if isinstance(expr, Atom):
        return (test[expr.param] == expr.value) == expr.equal
    if isinstance(expr, Not):
        return not evaluate(expr.arg, test)
    if isinstance(expr, And):
        return all(evaluate(a, test) for a in expr.args)
    if isinstance(expr, Or):
        return any(evaluate(a, test) for a in expr.args)
    if isinstance(expr, Implies):
        return (not evaluate(expr.lhs, test)) or evaluate(expr.rhs, test)
    if isinstance(expr, Iff):
        return evaluate(expr.lhs, test) == evaluate(expr.rhs, test)
    raise TypeError(f"not an expression: {expr!r}")


def atoms_of(expr: Expr) -> Iterable[Atom]:
    if isinstance(expr, Atom):
        yield expr
    elif isinstance(expr, Not):
        yield from atoms_of(expr.arg)
    elif isinstance(expr, (And, Or)):
        for a in expr.args:
            yield from atoms_of(a)
    else:
        yield from atoms_of(expr.lhs)
        yield from atoms_of(expr.rhs)


@dataclass(frozen=True)
class SutModel:
    parameters: tuple[Parameter, ...]
    constraints: tuple[Expr, ...] = ()
    _index: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        index = {}
        for i, p in enumerate(self.parameters):
            if p.name in index:
                raise ModelError(f"duplicate parameter {p.name!r}")
            index[p.name] = i
        object.__setattr__(self, "_index", index)
        for c in self.constraints:
            for a in atoms_of(c):
                if not 0 <= a.param < len(self.parameters):
                    raise ModelError(f"atom references unknown parameter index {a.param}")
                if not 0 <= a.value < self.parameters[a.param].size:
                    raise ModelError(f"atom references unknown value index {a.value}")

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(p.size for p in self.parameters)

    def __len__(self) -> int:
        return len(self.parameters)

    def param_index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise ModelError(f"unknown parameter {name!r}") from None

    def value_index(self, param: int, label: str) -> int:
        try:
            return self.parameters[param].domain.index(label)
        except ValueError:
            raise ModelError(
                f"unknown value {label!r} for parameter {self.parameters[param].name!r}"
            ) from None

    def make_test(self, labels: Mapping[str, str]) -> Test:
        """Convert ``{param: value}`` labels into an index tuple."""
        if set(labels) != set(self._index):
            raise ModelError("a test must assign every parameter exactly once")
        return tuple(
            self.value_index(i, labels[p.name]) for i, p in enumerate(self.parameters)
        )

    def labels(self, test: Sequence[int]) -> dict[str, str]:
        return {p.name: p.domain[v] for p, v in zip(self.parameters, test)}

    def atom(self, name: str, value: str, equal: bool = True) -> Atom:
        p = self.param_index(name)
        return Atom(p, self.value_index(p, value), equal)


def entails(test: Sequence[int] | Mapping[str, str], model: SutModel) -> bool:
    """True iff the full assignment satisfies every constraint of ``model``."""
    if isinstance(test, Mapping):
        test = model.make_test(test)
    return all(evaluate(c, test) for c in model.constraints)


@dataclass(frozen=True)
class ModelStats:
    parameter_count: int
    domain_profile: str
    full_assignment_count: int


def domain_profile(sizes: Iterable[int]) -> str:
    counts = Counter(sizes)
    return " ".join(f"{g}^{counts[g]}" for g in sorted(counts))


def model_stats(model: SutModel) -> ModelStats:
    return ModelStats(
        parameter_count=len(model.parameters),
        domain_profile=domain_profile(model.sizes),
        full_assignment_count=math.prod(model.sizes),
    )


def model_from_profile(profile: str, constraints: Sequence[Expr] = ()) -> SutModel:
    """Build an unconstrained-by-default model from a profile like ``"3^4 6^1"``.

    Parameters are named ``p0, p1, ...`` and values ``0..g-1``.
    """
    sizes = []
    for part in profile.split():
        g, _, k = part.partition("^")
        sizes.extend([int(g)] * int(k or 1))
    params = tuple(
        Parameter(f"p{i}", tuple(str(v) for v in range(g))) for i, g in enumerate(sizes)
    )
    return SutModel(params, tuple(constraints))


# --------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<section>\[[A-Za-z]+\])
  | (?P<op><->|->|&&|\|\||!=|[!=:,;()])
  | (?P<word>[A-Za-z0-9_.]+)
  | (?P<string>"[^"\n]*")
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ModelSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            tok_text = m.group()
            if kind == "string":
                kind, tok_text = "word", tok_text[1:-1]
            toks.append(_Tok(kind, tok_text, line, pos - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0
        self.params: list[Parameter] = []
        self.index: dict[str, int] = {}

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.tok
        return ModelSyntaxError(msg, tok.line, tok.col)

    def expect(self, kind: str, text: str | None = None) -> _Tok:
        tok = self.tok
        if tok.kind != kind or (text is not None and tok.text != text):
            want = text or kind
            got = tok.text or tok.kind
            raise self.error(f"expected {want!r}, got {got!r}")
        self.i += 1
        return tok

    def accept(self, text: str) -> bool:
        if self.tok.kind == "op" and self.tok.text == text:
            self.i += 1
            return True
        return False

    def parse(self) -> SutModel:
        tok = self.expect("section")
        if tok.text.upper() != "[PARAMETERS]":
            raise self.error("model must start with [PARAMETERS]", tok)
        while self.tok.kind == "word":
            self.parameter()
        constraints = []
        if self.tok.kind == "section":
            tok = self.expect("section")
            if tok.text.upper() != "[CONSTRAINTS]":
                raise self.error(f"unknown section {tok.text}", tok)
            while self.tok.kind != "eof":
                constraints.append(self.implication_chain())
                self.expect("op", ";")
        self.expect("eof")
        if not self.params:
            raise ModelError("model declares no parameters")
        return SutModel(tuple(self.params), tuple(constraints))

    def parameter(self):
        name_tok = self.expect("word")
        if name_tok.text in self.index:
            raise ModelError(
                f"duplicate parameter {name_tok.text!r} at line {name_tok.line}"
            )
        self.expect("op", ":")
        values = [self.expect("word").text]
        while self.accept(","):
            values.append(self.expect("word").text)
        self.expect("op", ";")
        if len(set(values)) != len(values):
            raise ModelError(f"duplicate value in parameter {name_tok.text!r} at line {name_tok.line}")
        self.index[name_tok.text] = len(self.params)
        self.params.append(Parameter(name_tok.text, tuple(values)))

    # iff < implies < or < and < not
    def implication_chain(self) -> Expr:
        lhs = self.implies()
        while self.accept("<->"):
            lhs = Iff(lhs, self.implies())
        return lhs

    def implies(self) -> Expr:
        lhs = self.disjunction()
        if self.accept("->"):
            return Implies(lhs, self.implies())
        return lhs

    def disjunction(self) -> Expr:
        args = [self.conjunction()]
        while self.accept("||"):
            args.append(self.conjunction())
        return args[0] if len(args) == 1 else Or(tuple(args))

    def conjunction(self) -> Expr:
        args = [self.unary()]
        while self.accept("&&"):
            args.append(self.unary())
        return args[0] if len(args) == 1 else And(tuple(args))

    def unary(self) -> Expr:
        if self.accept("!"):
            return Not(self.unary())
        if self.accept("("):
            e = self.implication_chain()
            self.expect("op", ")")
            return e
        name_tok = self.expect("word")
        if self.accept("="):
            equal = True
        elif self.accept("!="):
            equal = False
        else:
            raise self.error("expected '=' or '!='")
        value_tok = self.expect("word")
        if name_tok.text not in self.index:
            raise ModelError(
                f"unknown parameter {name_tok.text!r} at line {name_tok.line}, column {name_tok.col}"
            )
        p = self.index[name_tok.text]
        domain = self.params[p].domain
        if value_tok.text not in domain:
            raise ModelError(
                f"unknown value {value_tok.text!r} for parameter {name_tok.text!r}"
                f" at line {value_tok.line}, column {value_tok.col}"
            )
        return Atom(p, domain.index(value_tok.text), equal)


def parse_model(text: str) -> SutModel:
    return _Parser(text).parse()


def load_model(path) -> SutModel:
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read())


# --------------------------------------------------------------------------
# rendering

_PLAIN = re.compile(r"[A-Za-z0-9_.]+\Z")


def _label(s: str) -> str:
    return s if _PLAIN.match(s) else f'"{s}"'


_PREC = {Iff: 0, Implies: 1, Or: 2, And: 3, Not: 4, Atom: 5}


def render_expr(expr: Expr, model: SutModel, prec: int = 0) -> str:
    kind = type(expr)
    if kind is Atom:
        p = model.parameters[expr.param]
        op = "=" if expr.equal else "!="
        s = f"{_label(p.name)} {op} {_label(p.domain[expr.value])}"
    elif kind is Not:
        s = "!" + render_expr(expr.arg, model, _PREC[Not])
    elif kind is And:
        s = " && ".join(render_expr(a, model, _PREC[And] + 1) for a in expr.args)
    elif kind is Or:
        s = " || ".join(render_expr(a, model, _PREC[Or] + 1) for a in expr.args)
    elif kind is Implies:
        # right associative
        s = f"{render_expr(expr.lhs, model, _PREC[Implies] + 1)} -> {render_expr(expr.rhs, model, _PREC[Implies])}"
    else:
        s = f"{render_expr(expr.lhs, model, _PREC[Iff])} <-> {render_expr(expr.rhs, model, _PREC[Iff] + 1)}"
    return f"({s})" if _PREC[kind] < prec else s


def render_model(model: SutModel) -> str:
    lines = ["[PARAMETERS]"]
    for p in model.parameters:
        lines.append(f"{_label(p.name)}: {', '.join(_label(v) for v in p.domain)};")
    lines.append("[CONSTRAINTS]")
    for c in model.constraints:
        lines.append(render_expr(c, model) + ";")
    return "\n".join(lines) + "\n"
