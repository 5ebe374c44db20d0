"""Compare the numba and numpy paths of the hot kernels.

Run with ``python3 benchmarks/bench_kernels.py``. Kernel timings call both
implementations directly in one process; the end-to-end timings start a
fresh interpreter per path with ``STOCHFRAC_NUMBA`` set, which is how a user
selects the fallback.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from stochfrac.fem.kernels import KERNELS
from stochfrac.microstructure import _overlaps_nb, _overlaps_np


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_inputs(n_elem: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    Q, S, n = 4, 4, 8
    P = n_elem * Q
    eps = rng.normal(scale=1e-3, size=(P, 4))
    ep_n = rng.normal(scale=1e-4, size=(P, 4))
    ep_n[:, :3] -= ep_n[:, :3].mean(axis=1, keepdims=True)
    c = np.abs(rng.normal(scale=1e-4, size=P))
    gel = rng.uniform(0.1, 1.0, P)
    K = np.full(P, 1.0)
    mu = np.full(P, 0.5)
    B = rng.normal(size=(n_elem, Q, S, n))
    wdet = rng.uniform(0.5, 1.0, (n_elem, Q))
    C = rng.normal(size=(n_elem, Q, S, S))
    C = C + C.transpose(0, 1, 3, 2)
    sig = rng.normal(size=(n_elem, Q, S))
    N = rng.uniform(size=(Q, 4))
    grad = rng.normal(size=(n_elem, Q, 4, 2))
    mass, stiff, src = (rng.uniform(size=(n_elem, Q)) for _ in range(3))
    flux = rng.normal(size=(n_elem, Q, 2))
    return {
        "qp_mech": (eps, ep_n, c, gel, K, mu),
        "element_vector": (B, wdet, C, sig),
        "element_scalar": (N, grad, wdet, mass, stiff, src, flux),
    }


def overlap_inputs(n_particles: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    centers = rng.uniform(size=(n_particles, 2))
    radii = rng.uniform(0.002, 0.004, n_particles)
    phases = rng.integers(1, 3, n_particles)
    lo = np.zeros(2)
    cell = np.array([0.02, 0.02])
    ncell = np.array([50, 50])
    head = -np.ones(ncell.prod(), dtype=np.int64)
    nxt = -np.ones(n_particles, dtype=np.int64)
    for j, x in enumerate(centers):
        k = int(min(x[0] // cell[0], 49)) + 50 * int(min(x[1] // cell[1], 49))
        nxt[j] = head[k]
        head[k] = j
    probes = rng.uniform(size=(2000, 2))

    def run(fn):
        hit = 0
        for x in probes:
            hit += fn(x, 0.003, 1, centers, radii, phases, head, nxt, lo, cell, ncell, 0.1, False)
        return hit

    return run


def end_to_end(flag: str) -> float:
    code = (
        "import time;"
        "from stochfrac.campaign import load_config, run_sample;"
        "cfg = load_config('configs/bar_mc.yaml');"
        "run_sample(cfg, 0);"
        "t = time.perf_counter();"
        "[run_sample(cfg, i) for i in range(1, 5)];"
        "print(time.perf_counter() - t)"
    )
    env = dict(os.environ, STOCHFRAC_NUMBA=flag)
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    out = subprocess.run([sys.executable, "-c", code], env=env, cwd=root, capture_output=True, text=True, check=True)
    return float(out.stdout.strip().splitlines()[-1])


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--elements", type=int, default=4096)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-e2e", action="store_true")
    args = ap.parse_args(argv)

    inputs = kernel_inputs(args.elements)
    print(f"{'kernel':<16}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}{'max |diff|':>14}")
    for name, (nb, py) in KERNELS.items():
        a = inputs[name]
        r_nb, r_np = nb(*a), py(*a)  # first call compiles
        diff = max(float(np.max(np.abs(x - y))) for x, y in zip(r_nb, r_np))
        t_nb = best_of(lambda: nb(*a), args.repeat)
        t_np = best_of(lambda: py(*a), args.repeat)
        print(f"{name:<16}{1e3 * t_nb:>12.3f}{1e3 * t_np:>12.3f}{t_np / t_nb:>10.1f}{diff:>14.2e}")

    run = overlap_inputs(4000)
    assert run(_overlaps_nb) == run(_overlaps_np)
    t_nb = best_of(lambda: run(_overlaps_nb), args.repeat)
    t_np = best_of(lambda: run(_overlaps_np), args.repeat)
    print(f"{'overlaps':<16}{1e3 * t_nb:>12.3f}{1e3 * t_np:>12.3f}{t_np / t_nb:>10.1f}{0.0:>14.2e}")

    if not args.skip_e2e:
        t1, t0 = end_to_end("1"), end_to_end("0")
        print(f"{'bar sample x4':<16}{1e3 * t1:>12.1f}{1e3 * t0:>12.1f}{t0 / t1:>10.1f}")


if __name__ == "__main__":
    main()
