"""Benchmark the compiled kernels against the numpy fallback.

Times the three kernel contracts on a representative probe-sized workload
and a full truncated-marginal evaluation through each backend. Run as:

    python bench/bench_kernels.py [--repeat 3]
"""

import argparse
import os
import time

import numpy as np


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_workload(backend, rng):
    n_u, n_g, n_s = 400_000, 48, 96
    Sa = rng.random(n_u) * 30.0
    Sb = rng.random(n_u) * 30.0
    ca = 1.0 / rng.uniform(0.1, 2.0, n_g) ** 2
    cb = 1.0 / rng.uniform(0.1, 2.0, n_g) ** 2
    c0 = np.zeros(n_g)
    wg = rng.random(n_g)
    table = np.exp(-np.linspace(0.0, 40.0, 64 * 80 + 1))
    Gw = rng.random(n_u)
    Q = rng.random(n_u) * 50.0
    bhat = rng.standard_normal((1, n_u))
    s0 = np.exp(np.linspace(-4, 4, n_s))
    w0 = rng.random(n_s)
    F = np.ascontiguousarray(rng.random((120, 500)))
    w_sl = rng.random(500)

    out = {}
    out["mix_table_accumulate"] = _bench_mix(backend, Sa, Sb, ca, cb, c0,
                                             wg, table)
    out["scale_reduce"] = lambda: backend.scale_reduce(Gw, Q, bhat, 8.0,
                                                       s0, w0)
    out["factor_product_reduce"] = lambda: backend.factor_product_reduce(
        [F, F, F], w_sl)
    return out


def _bench_mix(backend, Sa, Sb, ca, cb, c0, wg, table):
    return lambda: backend.mix_table_accumulate(Sa, Sb, ca, cb, c0, wg,
                                                -80, 64, table)


def marginal_workload():
    import properlmm as pl
    X = np.ones((6, 1))
    Z = np.kron(np.eye(3), np.ones((2, 1)))
    y = np.array([1.3, 0.8, 2.1, 2.6, -0.4, 0.2])
    fam = pl.TpnEffects(pl.EPSILON_SKEW, pl.ShapePrior.uniform(-1, 1))
    spec = pl.ModelSpec(X, Z, (3,), fam,
                        pl.PriorStructure.standard_diffuse(1))
    trunc = pl.Truncation(np.exp(-5), np.exp(5), 30.0, 30.0, level=5)
    return lambda: pl.marginal_truncated(spec, y, trunc)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    from properlmm import kernels
    backends = {"numpy": kernels.get_backend("numpy")}
    try:
        backends["cython"] = kernels.get_backend("cython")
    except ImportError:
        print("compiled backend not built; benchmarking numpy only")

    rng = np.random.default_rng(0)
    print(f"{'kernel':28s}" + "".join(f"{n:>12s}" for n in backends))
    rows = {}
    for name, backend in backends.items():
        for kname, fn in kernel_workload(backend, rng).items():
            rows.setdefault(kname, {})[name] = _time(fn, args.repeat)
    for kname, timings in rows.items():
        line = f"{kname:28s}"
        for bname in backends:
            line += f"{timings[bname] * 1e3:10.1f}ms"
        if len(timings) == 2:
            line += f"   ({timings['numpy'] / timings['cython']:.2f}x)"
        print(line)

    print()
    print("full truncated marginal (two-piece one-way instance, level 5):")
    fn = marginal_workload()
    for bname in backends:
        os.environ.pop("PROPERLMM_PURE_PYTHON", None)
        import properlmm.kernels as K
        # swap the active implementation for the timing run
        K.mix_table_accumulate = backends[bname].mix_table_accumulate
        K.scale_reduce = backends[bname].scale_reduce
        K.factor_product_reduce = backends[bname].factor_product_reduce
        t = _time(fn, args.repeat)
        print(f"  {bname:8s} {t:8.2f}s")
    # restore the import-time selection
    K.mix_table_accumulate = K._impl.mix_table_accumulate
    K.scale_reduce = K._impl.scale_reduce
    K.factor_product_reduce = K._impl.factor_product_reduce


if __name__ == "__main__":
    main()
