"""Time the compiled and pure-Python PE kernels on truck-sized inputs.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 200]
"""

import argparse
import timeit

import numpy as np

from pe_ampc import kernels


def workload(l=5, h=5, m=1, n_cands=70, seed=0):
    rng = np.random.default_rng(seed)
    tail = rng.uniform(-0.5, 0.5, size=(l + h - 2, m))
    cands = rng.uniform(-0.5, 0.5, size=(n_cands, m))
    pinned = rng.uniform(-0.5, 0.5, size=(h - 1, m))
    seq = rng.uniform(-0.5, 0.5, size=(3 * (l + h), m))
    return tail, cands, pinned, seq, l, h


def bench(backend, args, repeat):
    tail, cands, pinned, seq, l, h = args
    screen = min(timeit.repeat(lambda: backend.pe_screen(tail, cands, pinned, l, h, 0.05, 1e-9),
                               number=1, repeat=repeat))
    gram = min(timeit.repeat(lambda: backend.pe_gram(seq, len(seq) - 1, l, h), number=1, repeat=repeat))
    return screen, gram


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=200)
    args = p.parse_args()
    backends = [("python", kernels.python_backend)]
    if kernels.compiled_backend is not None:
        backends.append(("cython", kernels.compiled_backend))
    else:
        print("compiled kernels not built; timing the Python backend only")
    print(f"active backend: {kernels.BACKEND}")
    print(f"{'backend':8s} {'pe_screen (70 cands)':>22s} {'pe_gram':>12s}")
    results = {}
    for shape in [(5, 5, 1), (8, 8, 2)]:
        data = workload(*shape)
        print(f"l={shape[0]} h={shape[1]} m={shape[2]}")
        for name, be in backends:
            s, g = bench(be, data, args.repeat)
            results[(shape, name)] = s
            print(f"{name:8s} {s * 1e6:19.1f} us {g * 1e6:9.1f} us")
        if len(backends) == 2:
            print(f"speedup on pe_screen: {results[(shape, 'python')] / results[(shape, 'cython')]:.1f}x")


if __name__ == "__main__":
    main()
