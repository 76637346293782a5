"""Compare the compiled and numpy split-search kernels.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Times each kernel on node-sized inputs and a full GUIDE tree fit on the
stacked counterfactual design, once per available backend.
"""

import argparse
import timeit

import numpy as np

from vgsubgroup import kernels
from vgsubgroup.counterfactual import CounterfactualConfig, fit_counterfactual
from vgsubgroup.simulate import gen_scenario_dataset, preset


def _inputs(n, p, seed=0):
    rng = np.random.default_rng(seed)
    xs = np.sort(rng.normal(size=n))
    ys = rng.normal(size=n)
    ts = rng.integers(0, 2, n).astype(np.int8)
    X = rng.normal(size=(n, p))
    miss = np.zeros((n, p), dtype=bool)
    return xs, ys, ts, X, miss


def _use(mod):
    for fn in ("sse_scan", "gi_scan", "slope_stats"):
        setattr(kernels, fn, getattr(mod, fn))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    xs, ys, ts, X, miss = _inputs(800, 43)
    d, _ = gen_scenario_dataset(preset("no-prognostic"), 0)
    cfg = CounterfactualConfig(backend="single-tree")
    cases = {
        "sse_scan n=800": lambda m: m.sse_scan(xs, ys, 0.0, 0.0, 0.0, 10.0),
        "gi_scan n=800": lambda m: m.gi_scan(xs, ys, ts, [0.0, 0.0], [0.0, 0.0], [0.0, 0.0], 10.0),
        "slope_stats 800x43": lambda m: m.slope_stats(X, ys, miss),
    }
    mods = kernels.backends()
    saved = {fn: getattr(kernels, fn) for fn in ("sse_scan", "gi_scan", "slope_stats")}
    results = {}
    try:
        for name, mod in mods.items():
            _use(mod)
            for case, fn in cases.items():
                number = 200
                t = min(timeit.repeat(lambda: fn(mod), number=number, repeat=args.repeat))
                results[(case, name)] = t / number
            t = min(timeit.repeat(lambda: fit_counterfactual(d, cfg, 0), number=5, repeat=args.repeat))
            results[("single-tree fit n=400", name)] = t / 5
    finally:
        for fn, impl in saved.items():
            setattr(kernels, fn, impl)

    names = list(mods)
    print(f"{'case':<24}" + "".join(f"{n:>14}" for n in names) + ("   speedup" if len(names) > 1 else ""))
    for case in [*cases, "single-tree fit n=400"]:
        row = f"{case:<24}" + "".join(f"{results[(case, n)] * 1e6:>11.1f} us" for n in names)
        if len(names) > 1:
            row += f"   {results[(case, 'python')] / results[(case, 'cython')]:6.1f}x"
        print(row)


if __name__ == "__main__":
    main()
