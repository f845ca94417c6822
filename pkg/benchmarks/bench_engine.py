"""Compare the compiled and pure-Python SAT engines on a few fixed workloads.

    python3 benchmarks/bench_engine.py [--repeat 3]
"""
import argparse
import itertools
import random
import statistics
import time
from pathlib import Path

from ctmax.encodings import EncodingVariant, apply_symmetry, build_mcac, build_tn_wcnf, sat_clauses
from ctmax.model import load_model, model_from_profile
from ctmax.optimizers import linear_maxsat
from ctmax.sat import Status, available_backends
from ctmax.tuples import build_catalog, lower_bound

ROOT = Path(__file__).resolve().parents[1]


def pigeonhole(engine_cls, p=8, h=7):
    var = lambda i, j: i * h + j + 1
    e = engine_cls()
    for i in range(p):
        e.add_clause([var(i, j) for j in range(h)])
    for j in range(h):
        for a, b in itertools.combinations(range(p), 2):
            e.add_clause([-var(a, j), -var(b, j)])
    assert e.solve().status is Status.UNSAT


def random_3sat(engine_cls, n=120, ratio=4.26, instances=5):
    rng = random.Random(5)
    for _ in range(instances):
        e = engine_cls(seed=1)
        for _ in range(int(n * ratio)):
            e.add_clause([rng.choice([-1, 1]) * v for v in rng.sample(range(1, n + 1), 3)])
        e.solve()


def covering_array(engine_cls, profile="2^6", N=6):
    model = model_from_profile(profile)
    catalog = build_catalog(model, 2, engine_cls)
    ctx = build_mcac(model, catalog, N, EncodingVariant("CCX", "a0"), 0)
    apply_symmetry(ctx, lower_bound(catalog).lb_witness)
    e = engine_cls()
    e.add_clauses(sat_clauses(ctx))
    assert e.solve().status is Status.SAT


def tuple_number(engine_cls, N=6):
    model = load_model(ROOT / "tests" / "data" / "autonomous.sut")
    catalog = build_catalog(model, 2, engine_cls)
    ctx = build_mcac(model, catalog, N, EncodingVariant("CCX", "a2"), 0)
    res = linear_maxsat(build_tn_wcnf(ctx), engine_cls)
    assert res.optimal and res.cost == 4


WORKLOADS = {
    "pigeonhole 8/7": pigeonhole,
    "random 3-SAT n=120": random_3sat,
    "CA(6; 2, 2^6)": covering_array,
    "tuple number N=6": tuple_number,
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = available_backends()
    print(f"{'workload':<22}" + "".join(f"{name:>12}" for name in backends) + f"{'speedup':>10}")
    for label, fn in WORKLOADS.items():
        times = {}
        for name, cls in backends.items():
            runs = []
            for _ in range(args.repeat):
                t0 = time.perf_counter()
                fn(cls)
                runs.append(time.perf_counter() - t0)
            times[name] = statistics.median(runs)
        row = f"{label:<22}" + "".join(f"{times[n]:>11.3f}s" for n in backends)
        if "cython" in times:
            row += f"{times['python'] / times['cython']:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
