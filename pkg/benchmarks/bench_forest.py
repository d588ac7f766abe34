"""Compare the compiled and pure-Python tree kernels on simulator data.

    python benchmarks/bench_forest.py [--users 300] [--trees 20] [--repeat 3]
"""

from __future__ import annotations

import argparse
import json
import time

import numpy as np

from rtbcost.costs import from_micros
from rtbcost.model import ForestParams, fit_binning, log_normalize
from rtbcost.model.forest import fit_forest
from rtbcost.model.kernels import get_backend
from rtbcost.sim import SimConfig, simulate


def best_of(fn, repeat: int) -> tuple[float, object]:
    best, out = float("inf"), None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--users", type=int, default=300)
    ap.add_argument("--trees", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    res = simulate(SimConfig(seed=7, n_users=args.users))
    prices = np.array([float(from_micros(i.charge_micros)) for i in res.impressions])
    labels = fit_binning(log_normalize(prices)).classes_of(prices)
    rows = [(i.features, int(c)) for i, c in zip(res.impressions, labels)]
    params = ForestParams(n_trees=args.trees)

    timings, models = {}, {}
    for backend in ("cython", "python"):
        try:
            t, m = best_of(lambda: fit_forest(rows, params, seed=0, backend=backend), args.repeat)
        except ImportError:
            print(f"{backend}: not available")
            continue
        timings[backend], models[backend] = t, m
        apply = get_backend(backend)[1]
        X = np.ascontiguousarray(m.encoder.encode([f.to_dict() for f, _ in rows]), dtype=np.uint8)
        tp, _ = best_of(lambda: [apply(X, t.feature, t.threshold, t.left, t.right) for t in m.trees], args.repeat)
        timings[backend + "_predict"] = tp
        print(f"{backend:>7}: fit {t:8.3f} s   predict {tp:7.3f} s   ({len(rows)} rows, {args.trees} trees)")
    if "cython" in models and "python" in models:
        same = all(np.array_equal(a.feature, b.feature) and np.array_equal(a.threshold, b.threshold)
                   for a, b in zip(models["cython"].trees, models["python"].trees))
        print(f"speedup: fit x{timings['python'] / timings['cython']:.1f}, "
              f"predict x{timings['python_predict'] / timings['cython_predict']:.1f}; identical trees: {same}")
    print(json.dumps({k: round(v, 4) for k, v in timings.items()}, sort_keys=True))


if __name__ == "__main__":
    main()
