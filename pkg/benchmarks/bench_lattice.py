"""Benchmark the compiled lattice kernels against the pure-numpy fallback.

Usage:
    python3 benchmarks/bench_lattice.py [--repeats 20] [--T 50]

Runs forward, backward and Viterbi over the full (22 players + 4 outside
nodes) edge lattice with a dynamic transition table, timing both backends in
the same process, and verifies their outputs agree.
"""

import argparse
import time

import numpy as np

from posspath import _kernels
from posspath._kernels import py_backend
from posspath.rules import build_rule_set


def bench(fn, args, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=20)
    parser.add_argument("--T", type=int, default=50)
    ns = parser.parse_args()

    rules = build_rule_set(22, 4)
    rng = np.random.default_rng(0)
    emission = rng.normal(size=(ns.T, rules.n_edges))
    trans = rng.normal(size=(ns.T - 1, rules.n_allowed))
    args = (emission, trans, rules.allowed_prev, rules.allowed_next,
            rules.by_next_order, rules.by_next_starts)

    backends = [("python", py_backend)]
    if _kernels.BACKEND_NAME == "compiled":
        backends.append(("compiled", _kernels.backend))
    else:
        print("compiled backend unavailable; benchmarking the fallback only")

    print(f"lattice: |E|={rules.n_edges}, |A|={rules.n_allowed}, T={ns.T}, "
          f"best of {ns.repeats} runs\n")
    results = {}
    for op in ("sparse_forward", "sparse_backward", "sparse_viterbi"):
        row = {}
        for name, backend in backends:
            t, out = bench(getattr(backend, op), args, ns.repeats)
            row[name] = (t, out)
        results[op] = row
        line = f"{op:16s}"
        for name in row:
            line += f"  {name}: {row[name][0] * 1e3:8.2f} ms"
        if len(row) == 2:
            line += f"  speedup: {row['python'][0] / row['compiled'][0]:5.1f}x"
        print(line)

    if len(backends) == 2:
        fa, fz = results["sparse_forward"]["python"][1]
        ca, cz = results["sparse_forward"]["compiled"][1]
        assert np.allclose(fa, ca) and abs(fz - cz) < 1e-9
        pp, ps = results["sparse_viterbi"]["python"][1]
        cp, cs = results["sparse_viterbi"]["compiled"][1]
        assert pp.tolist() == cp.tolist() and abs(ps - cs) < 1e-9
        print("\nbackends agree on all outputs")


if __name__ == "__main__":
    main()
