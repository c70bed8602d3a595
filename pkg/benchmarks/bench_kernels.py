"""Time the compiled and numpy direct-summation kernels on the same inputs.

    python3 benchmarks/bench_kernels.py [--targets 600] [--sources 20000] [--repeat 3]
"""
import argparse
import timeit

import numpy as np

from scatterwave import kernels


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--targets", type=int, default=600)
    ap.add_argument("--sources", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=3)
    a = ap.parse_args()
    rng = np.random.default_rng(0)
    t = rng.normal(size=(a.targets, 3)) * 10
    s = rng.normal(size=(a.sources, 3))
    w = rng.normal(size=a.sources) + 0j
    wv = rng.normal(size=(a.sources, 3)) + 0j
    c = np.zeros(3)
    sig = t / np.linalg.norm(t, axis=1)[:, None]
    k = 1.0 + 0.5j
    backends = [("python", kernels.python_backend)]
    if kernels.COMPILED:
        backends.append(("compiled", kernels.compiled_backend))
    else:
        print("compiled kernels not available; timing the numpy backend only")
    cases = [("amp_sum", kernels.amp_sum, (t, c, s, w)), ("amp_grad_sum", kernels.amp_grad_sum, (t, c, s, wv)),
             ("farfield_sum", kernels.farfield_sum, (sig, c, s, w))]
    print(f"{'kernel':14s} {'backend':9s} {'best [s]':>9s} {'speedup':>8s}")
    for name, fn, args in cases:
        base = None
        for bname, b in backends:
            best = min(timeit.repeat(lambda: fn(*args, k, backend=b), number=1, repeat=a.repeat))
            base = base or best
            print(f"{name:14s} {bname:9s} {best:9.4f} {base / best:8.2f}")


if __name__ == "__main__":
    main()
