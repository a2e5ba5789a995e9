"""Time the numba kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 5]

The first numba call compiles (or loads the cache); it is excluded from the
timings.  Results are also checked for agreement.
"""

import argparse
import time

import numpy as np

from maxlab import kernels, using_backend


def cases(rng):
    n = 4000
    u0 = rng.uniform(-2, 0, n)
    u1 = u0 + rng.uniform(0.1, 3, n)
    D = (u1 - u0) * rng.random(n)
    A = rng.standard_normal((20000, 4, 4))
    A = A + A.transpose(0, 2, 1)
    B = rng.standard_normal((20000, 4, 4))
    B = B + B.transpose(0, 2, 1)
    P, T = rng.random((4000, 2)), rng.random((400, 2))
    return {
        "strip_distance": (kernels.strip_distance, (u0, u1, D)),
        "spectral_batch": (kernels.spectral_batch, (A, B)),
        "nearest_two": (kernels.nearest_two, (P, T)),
    }


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':<16}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}  agree")
    for name, (fn, fargs) in cases(rng).items():
        with using_backend("numba"):
            fn(*fargs)  # compile / load cache
            t_jit, out_jit = best_of(fn, fargs, args.repeat)
        with using_backend("numpy"):
            t_np, out_np = best_of(fn, fargs, args.repeat)
        outs_jit = out_jit if isinstance(out_jit, tuple) else (out_jit,)
        outs_np = out_np if isinstance(out_np, tuple) else (out_np,)
        agree = all(np.allclose(a, b, atol=1e-10) for a, b in zip(outs_jit, outs_np))
        print(f"{name:<16}{t_jit:>12.4f}{t_np:>12.4f}{t_np / t_jit:>9.1f}x  {agree}")


if __name__ == "__main__":
    main()
