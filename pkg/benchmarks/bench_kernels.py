"""Time the numba kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 20]

The first numba call is compiled (or loaded from cache) outside the timed loop.
"""

import argparse
import time

import numpy as np

from jordan_source import kernels
from jordan_source._accel import HAVE_NUMBA
from jordan_source.graph import random_connected_graph, random_tree


def _time(fn, repeat):
    fn()  # warm up / compile
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    g = random_connected_graph(4000, 8000, rng)
    tree = random_tree(2000, rng)
    vi = np.sort(rng.choice(tree.node_count, 100, replace=False))
    target = np.zeros(tree.node_count)
    target[vi] = 1.0
    src, dst = g.edge_arrays()
    n = g.node_count
    core = rng.integers(0, 3, n).astype(np.int8)
    nbr = rng.random(n) < 0.5
    ps, pi, pr, u = rng.random((4, n))
    infected = rng.random(n) < 0.1
    t = 6
    gm = np.log(rng.random((40, 1 << t)))
    mm = np.log(rng.random((30, 40)))
    masks = rng.integers(0, 1 << t, 30)
    rows = rng.choice(n, 50, replace=False)
    return {
        "bfs (4000 nodes)": lambda k: getattr(kernels, f"bfs_{k}")(g.indptr, g.indices, np.array([0])),
        "bfs_rows (50 sources)": lambda k: getattr(kernels, f"bfs_rows_{k}")(g.indptr, g.indices, rows),
        "infected_neighbors": lambda k: getattr(kernels, f"infected_neighbors_{k}")(src, dst, infected, n),
        "step (SIRI)": lambda k: getattr(kernels, f"step_{k}")(core, nbr, ps, pi, pr, u, 2),
        "brandes (tree, 100 sources)": lambda k: getattr(kernels, f"brandes_{k}")(
            tree.indptr, tree.indices, vi, target),
        "combine_max (t=6)": lambda k: getattr(kernels, f"combine_max_{k}")(gm, mm, masks),
        "combine_lse (t=6)": lambda k: getattr(kernels, f"combine_lse_{k}")(gm, mm, masks),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()
    if not HAVE_NUMBA:
        print("numba is not installed; only the numpy path exists")
    print(f"{'kernel':32s} {'numpy [ms]':>12s} {'numba [ms]':>12s} {'speedup':>8s}")
    for name, run in cases(np.random.default_rng(a.seed)).items():
        t_np = _time(lambda: run("np"), a.repeat)
        t_nb = _time(lambda: run("nb"), a.repeat) if HAVE_NUMBA else float("nan")
        print(f"{name:32s} {t_np * 1e3:12.3f} {t_nb * 1e3:12.3f} {t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
