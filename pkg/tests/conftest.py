import itertools
import random
from pathlib import Path

import pytest

from ctmax.model import Atom, Implies, Not, Or, SutModel, Parameter, entails, load_model
from ctmax.sat import available_backends

DATA = Path(__file__).parent / "data"


@pytest.fixture(params=sorted(available_backends()))
def engine_cls(request):
    return available_backends()[request.param]


@pytest.fixture(scope="session")
def autonomous():
    return load_model(DATA / "autonomous.sut")


def random_constraint(rng: random.Random, sizes) -> object:
    """A random clause-like constraint over two parameters."""
    p, q = rng.sample(range(len(sizes)), 2)
    a = Atom(p, rng.randrange(sizes[p]), rng.random() < 0.8)
    b = Atom(q, rng.randrange(sizes[q]), rng.random() < 0.5)
    return rng.choice([Implies(a, b), Not(a) if rng.random() < 0.2 else Or((Not(a), Not(b)))])


def generate_corpus(count: int = 50, seed: int = 2024) -> list[tuple[str, SutModel]]:
    """Small satisfiable models: 2..4 parameters, domains 2..3, 0..2 constraints."""
    rng = random.Random(seed)
    out = []
    while len(out) < count:
        n = rng.randint(2, 4)
        sizes = [rng.randint(2, 3) for _ in range(n)]
        params = tuple(Parameter(f"p{i}", tuple(f"v{j}" for j in range(g)))
                       for i, g in enumerate(sizes))
        cons = tuple(random_constraint(rng, sizes) for _ in range(rng.randint(0, 2)))
        model = SutModel(params, cons)
        if not any(entails(t, model) for t in itertools.product(*(range(g) for g in sizes))):
            continue
        out.append((f"m{len(out):02d}_" + "x".join(map(str, sizes)) + f"_c{len(cons)}", model))
    return out


CORPUS = generate_corpus()


@pytest.fixture(scope="session")
def corpus():
    return CORPUS


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record():
    def _record(number: int, ok: bool, detail: str = ""):
        ACCEPTANCE[number] = (ok, detail)
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}")
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
