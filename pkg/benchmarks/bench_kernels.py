"""Time the numba kernels against the pure-numpy fallbacks.

Usage: python3 benchmarks/bench_kernels.py [--households 20000] [--repeat 5] [--full-run]

``--full-run`` also times one 312-week base-case simulation in a subprocess
per backend (the backend is fixed at import time by RETAIL_ABM_DISABLE_JIT).
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from retail_abm import kernels
from retail_abm.geo import generate_town


def _best_of(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _inputs(n_households: int, seed: int = 0):
    sites = generate_town(n_households=n_households, seed=seed)
    hh = [s for s in sites if s.kind == "household"]
    rt = [s for s in sites if s.kind != "household"]
    hlat = np.array([s.point.lat for s in hh])
    hlon = np.array([s.point.lon for s in hh])
    rlat = np.array([s.point.lat for s in rt])
    rlon = np.array([s.point.lon for s in rt])
    chan = np.array([int(s.channel) for s in rt])
    return hlat, hlon, rlat, rlon, chan


def bench(n_households: int, repeat: int) -> list[tuple[str, float, float]]:
    hlat, hlon, rlat, rlon, chan = _inputs(n_households)
    rng = np.random.default_rng(1)
    alive = rng.random(chan.size) < 0.8
    alive[chan != 0] = True
    cols = [np.flatnonzero(chan == c).astype(np.int64) for c in range(3)]
    dist = kernels.numpy_kernels.haversine_matrix(hlat, hlon, rlat, rlon)
    idx = np.empty((dist.shape[0], 3), dtype=np.int64)
    nd = np.empty((dist.shape[0], 3))
    for c in range(3):
        idx[:, c], nd[:, c] = kernels.numpy_kernels.nearest_alive(dist, cols[c], alive)
    level = rng.integers(0, 3, size=dist.shape[0])
    bracket = rng.normal(size=(3, chan.size))
    dworth = rng.normal(size=(3, 3))
    floor = np.array([0.1, 0.1, 10.0])

    cases = {
        "haversine_matrix": lambda k: k.haversine_matrix(hlat, hlon, rlat, rlon),
        "nearest_alive x3": lambda k: [k.nearest_alive(dist, c, alive) for c in cols],
        "choose_batch": lambda k: k.choose_batch(idx, nd, level, bracket, dworth, floor, 0.5),
    }
    rows = []
    for name, fn in cases.items():
        fn(kernels.numba_kernels)   # compile / warm cache
        t_np = _best_of(lambda: fn(kernels.numpy_kernels), repeat)
        t_nb = _best_of(lambda: fn(kernels.numba_kernels), repeat)
        rows.append((name, t_np, t_nb))
    return rows


def full_run_seconds(disable_jit: bool) -> float:
    env = dict(os.environ, RETAIL_ABM_DISABLE_JIT="1" if disable_jit else "0")
    code = ("import time; from retail_abm import engine; from retail_abm.config import ScenarioConfig;"
            "c=ScenarioConfig(seed=1, town_seed=1); engine.run(c.replace(horizon_weeks=1));"
            "t=time.perf_counter(); engine.run(c); print(time.perf_counter()-t)")
    out = subprocess.run([sys.executable, "-c", code], env=env, check=True,
                         capture_output=True, text=True)
    return float(out.stdout.strip().splitlines()[-1])


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--households", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--full-run", action="store_true")
    args = ap.parse_args()
    if kernels.numba_kernels is None:
        sys.exit("numba is not importable; nothing to compare")
    print(f"{'kernel':20s} {'numpy s':>10s} {'numba s':>10s} {'speedup':>8s}")
    for name, t_np, t_nb in bench(args.households, args.repeat):
        print(f"{name:20s} {t_np:10.5f} {t_nb:10.5f} {t_np / t_nb:8.2f}")
    if args.full_run:
        t_np, t_nb = full_run_seconds(True), full_run_seconds(False)
        print(f"{'312-week run':20s} {t_np:10.3f} {t_nb:10.3f} {t_np / t_nb:8.2f}")


if __name__ == "__main__":
    main()
