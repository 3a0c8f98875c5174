"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints the best-of-N wall time per call for each backend and the speed-up.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from dynamask import _kernels_py as py
from dynamask.kernels import compiled


def _gru_args(rng, B, T, d, h):
    s = 1 / np.sqrt(h)
    W = rng.uniform(-s, s, (d, 3 * h))
    U = rng.uniform(-s, s, (h, 3 * h))
    return (rng.normal(size=(B, T, d)), W, U, rng.uniform(-s, s, 3 * h), rng.uniform(-s, s, h),
            float(rng.uniform(-s, s)))


def cases(rng):
    """(label, python callable, compiled callable) triples at sizes the experiments use."""
    out = []
    for K, T, d in [(1, 50, 50), (50, 50, 50), (11, 100, 3), (11, 200, 3)]:
        X = rng.normal(size=(T, d))
        M = rng.random((K, T, d))
        out.append((f"blur+deriv K={K} T={T} d={d}",
                    lambda X=X, M=M: py.blur(X, M, 1.0, True),
                    lambda X=X, M=M: compiled.blur(X, M, 1.0, True)))
    for B, T, h in [(1, 100, 50), (11, 100, 50), (32, 100, 50), (128, 100, 50)]:
        X, W, U, b, w_out, b_out = _gru_args(rng, B, T, 3, h)
        WT, UT = np.ascontiguousarray(W.T), np.ascontiguousarray(U.T)
        up = rng.normal(size=(B, T))

        def run_py(X=X, W=W, U=U, b=b, w_out=w_out, b_out=b_out, WT=WT, UT=UT, up=up):
            p, c = py.gru_forward(X, W, U, b, w_out, b_out, True)
            return py.gru_input_backward(c, p, up, WT, UT, w_out)

        def run_c(X=X, W=W, U=U, b=b, w_out=w_out, b_out=b_out, WT=WT, UT=UT, up=up):
            p, c = compiled.gru_forward(X, W, U, b, w_out, b_out, True)
            return compiled.gru_input_backward(c, p, up, WT, UT, w_out)

        out.append((f"gru fwd+vjp B={B} T={T} h={h}", run_py, run_c))
    return out


def best_time(fn, repeat):
    number = 1
    while timeit.timeit(fn, number=number) < 0.2 and number < 1000:
        number *= 2
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if compiled is None:
        raise SystemExit("compiled extension not built; reinstall with Cython available")
    rng = np.random.default_rng(0)
    print(f"{'case':<34} {'numpy [ms]':>11} {'compiled [ms]':>14} {'speed-up':>9}")
    for label, f_py, f_c in cases(rng):
        a = best_time(f_py, args.repeat)
        b = best_time(f_c, args.repeat)
        print(f"{label:<34} {a * 1e3:11.3f} {b * 1e3:14.3f} {a / b:8.2f}x")


if __name__ == "__main__":
    main()
