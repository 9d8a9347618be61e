"""Benchmark the compiled likelihood kernels against the numpy fallback.

Times the raw per-call kernel evaluation at the paper-scale record count and
a full posterior fit with each backend swapped in.  Run with:

    python benchmarks/bench_kernels.py
"""

import time

import numpy as np

import privtab.kernels as kernels
from privtab.data import SurveyDataset
from privtab.fbs import FbsModel
from privtab.kernels import _ref
from privtab.mcmc import SampleConfig, sample

try:
    from privtab.kernels import _core
except ImportError:
    _core = None


def bench_call(fn, args, repeat=2000):
    fn(*args)
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - t0) / repeat


def kernel_benchmarks(n=1000):
    rng = np.random.default_rng(0)
    yt = rng.normal(11, 0.4, n)
    wt = rng.normal(3, 0.5, n)
    mu = rng.normal(11, 0.1, n)
    mw = rng.normal(3, 0.1, n)
    alpha = rng.uniform(0.1, 1.0, n)
    fbs_args = (yt, wt, mu, mw, 0.4, 0.5, -0.6, False, alpha)
    fbp_args = (yt, wt - 8, mu, mw, 0.9, 0.4, 0.4, True, alpha)
    rows = []
    for name, impl in (("pure", _ref),) + ((("compiled", _core),) if _core else ()):
        rows.append((name,
                     bench_call(impl.fbs_weighted_sum, fbs_args),
                     bench_call(impl.fbp_weighted_sum, fbp_args)))
    return rows


def fit_benchmark(n=1000):
    rng = np.random.default_rng(1)
    field = np.arange(n) % 8
    gender = (np.arange(n) // 8) % 2
    ds = SurveyDataset(np.exp(rng.normal(11, 0.4, n)), field, gender,
                       [str(i) for i in range(8)], ["1", "2"],
                       np.exp(rng.normal(3, 0.5, n)))
    model = FbsModel(ds)
    cfg = SampleConfig(chains=1, warmup=2000, keep=1000, seed=0)
    alpha = np.ones(n)

    impls = [("pure", _ref)] + ([("compiled", _core)] if _core else [])
    rows = []
    saved = {name: getattr(kernels, name) for name in
             ("fbs_records", "fbs_weighted_sum", "fbp_records",
              "fbp_weighted_sum")}
    try:
        for name, impl in impls:
            for attr in saved:
                setattr(kernels, attr, getattr(impl, attr))
            t0 = time.perf_counter()
            sample(model.make_target(alpha), cfg)
            rows.append((name, time.perf_counter() - t0))
    finally:
        for attr, fn in saved.items():
            setattr(kernels, attr, fn)
    return rows


def main():
    print(f"active backend: {kernels.BACKEND}")
    print(f"\nper-call weighted log-likelihood sum, n=1000 records:")
    base = None
    for name, t_fbs, t_fbp in kernel_benchmarks():
        if base is None:
            base = (t_fbs, t_fbp)
        print(f"  {name:9s} fbs {t_fbs * 1e6:7.1f} us ({base[0] / t_fbs:4.1f}x)"
              f"   fbp {t_fbp * 1e6:7.1f} us ({base[1] / t_fbp:4.1f}x)")
    print("\nfull fit (1 chain, 2000 warmup + 1000 kept, n=1000):")
    base = None
    for name, t in fit_benchmark():
        if base is None:
            base = t
        print(f"  {name:9s} {t:6.2f} s ({base / t:4.1f}x)")


if __name__ == "__main__":
    main()
