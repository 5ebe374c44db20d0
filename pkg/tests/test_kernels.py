import json
import os
import subprocess
import sys

import numpy as np
import pytest

from stochfrac import _accel
from stochfrac.fem.kernels import KERNELS
from stochfrac.microstructure import _overlaps_nb, _overlaps_np


def kernel_inputs(n_elem=50, seed=0):
    gen = np.random.default_rng(seed)
    Q, S, n = 4, 4, 8
    P = n_elem * Q
    ep_n = gen.normal(scale=1e-4, size=(P, 4))
    ep_n[:, :3] -= ep_n[:, :3].mean(axis=1, keepdims=True)
    C = gen.normal(size=(n_elem, Q, S, S))
    return {
        "qp_mech": (gen.normal(scale=1e-3, size=(P, 4)), ep_n, np.abs(gen.normal(scale=1e-4, size=P)),
                    gen.uniform(0.1, 1.0, P), np.full(P, 1.0), np.full(P, 0.5)),
        "element_vector": (gen.normal(size=(n_elem, Q, S, n)), gen.uniform(0.5, 1.0, (n_elem, Q)),
                           C + C.transpose(0, 1, 3, 2), gen.normal(size=(n_elem, Q, S))),
        "element_scalar": (gen.uniform(size=(Q, 4)), gen.normal(size=(n_elem, Q, 4, 2)),
                           gen.uniform(0.5, 1.0, (n_elem, Q)), *(gen.uniform(size=(n_elem, Q)) for _ in range(3)),
                           gen.normal(size=(n_elem, Q, 2))),
    }


@pytest.mark.parametrize("name", sorted(KERNELS))
@pytest.mark.parametrize("seed", [0, 1])
def test_numba_and_numpy_kernels_agree(name, seed):
    nb, py = KERNELS[name]
    args = kernel_inputs(seed=seed)[name]
    for a, b in zip(nb(*args), py(*args)):
        assert a.shape == b.shape
        assert np.allclose(a, b, rtol=1e-12, atol=1e-15 * max(1.0, float(np.abs(b).max())))


def test_overlap_kernels_agree():
    gen = np.random.default_rng(4)
    n = 300
    centers = gen.uniform(size=(n, 2))
    radii = gen.uniform(0.01, 0.03, n)
    phases = gen.integers(1, 3, n)
    cell, ncell = np.array([0.1, 0.1]), np.array([10, 10])
    head = -np.ones(100, dtype=np.int64)
    nxt = -np.ones(n, dtype=np.int64)
    for j, x in enumerate(centers):
        k = int(min(x[0] // 0.1, 9)) + 10 * int(min(x[1] // 0.1, 9))
        nxt[j], head[k] = head[k], j
    for x in gen.uniform(size=(500, 2)):
        for enlarge in (False, True):
            args = (x, 0.02, 1, centers, radii, phases, head, nxt, np.zeros(2), cell, ncell, 0.1, enlarge)
            assert bool(_overlaps_nb(*args)) == bool(_overlaps_np(*args))


def test_environment_flag_selects_numpy_path():
    code = (
        "import json, numpy as np, sys; sys.path.insert(0, 'tests');"
        "from helpers import bar;"
        "from stochfrac import _accel;"
        "from stochfrac.solver import SolverConfig, run_simulation;"
        "p = bar(n=20, schedule=np.linspace(1e-3, 0.03, 30), l_f=0.05, psi_c=5e-5, at_model='AT1');"
        "r = run_simulation(p, SolverConfig(early_stop=False));"
        "print(json.dumps({'numba': _accel.USE_NUMBA, 'F': r.forces.tolist()}))"
    )
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    out = {}
    for flag in ("0", "1"):
        env = dict(os.environ, STOCHFRAC_NUMBA=flag)
        proc = subprocess.run([sys.executable, "-c", code], env=env, cwd=root, capture_output=True, text=True,
                              check=True)
        out[flag] = json.loads(proc.stdout.strip().splitlines()[-1])
    assert out["0"]["numba"] is False
    assert out["1"]["numba"] is _accel.HAVE_NUMBA
    # roundoff differences pass through the staggered loop, so agreement is at its tolerance
    assert np.allclose(out["0"]["F"], out["1"]["F"], rtol=1e-6, atol=0)
