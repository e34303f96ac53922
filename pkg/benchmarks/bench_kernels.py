"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--iters 500] [--repeat 5]

Problem sizes mirror one per-point solve of the 3-submodule synthetic
experiment (n = 64, K = 191 other points, N_G = 8 shifts).
"""
import argparse
import timeit

import numpy as np

from ssmc import _fallback

try:
    from ssmc import _core
except ImportError:  # extension not built
    _core = None


def make_problem(n=64, K=191, NG=8, seed=0):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, K * NG)) / np.sqrt(n)
    y = rng.standard_normal(n)
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    p = (U.T @ y) / s
    D = -np.ones_like(s)
    return dict(Vt=np.ascontiguousarray(Vt), p=p, D=D, K=K, NG=NG, size=K * NG)


def bench_admm(mod, prob, iters, repeat):
    def run():
        z = np.zeros(prob["size"])
        u = np.zeros(prob["size"])
        x = np.zeros(prob["size"])
        # zero tolerances: always run the full chunk
        mod.admm_chunk(prob["Vt"], prob["p"], prob["D"], 1.0, mod.PROX_SHRINK, 1.0, 1.0,
                       z, u, x, prob["K"], prob["NG"], iters, 0.0, 0.0, 1.0)
    return min(timeit.repeat(run, number=1, repeat=repeat))


def bench_shrink(mod, prob, repeat, number=2000):
    v = np.random.default_rng(1).standard_normal(prob["size"])
    out = np.empty_like(v)
    return min(timeit.repeat(lambda: mod.block_shrink(v, prob["K"], prob["NG"], 0.5, out),
                             number=number, repeat=repeat)) / number


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--iters", type=int, default=500)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    prob = make_problem()
    mods = [("python", _fallback)] + ([("cython", _core)] if _core is not None else [])
    rows = []
    for name, mod in mods:
        t_admm = bench_admm(mod, prob, args.iters, args.repeat)
        t_shrink = bench_shrink(mod, prob, args.repeat)
        rows.append((name, t_admm, t_shrink))
    print(f"{'backend':8s} {'admm chunk (s)':>15s} {'per iter (us)':>14s} {'block_shrink (us)':>18s}")
    for name, ta, ts in rows:
        print(f"{name:8s} {ta:15.4f} {1e6 * ta / args.iters:14.1f} {1e6 * ts:18.2f}")
    if len(rows) == 2:
        print(f"speedup: admm x{rows[0][1] / rows[1][1]:.2f}, shrink x{rows[0][2] / rows[1][2]:.2f}")
    else:
        print("compiled extension not available; only the fallback was timed")


if __name__ == "__main__":
    main()
