"""Acceptance checks, one test per criterion, at the stated tolerances and time budgets."""

import math
import time
from pathlib import Path

import numpy as np
import pytest
from helpers import bar, fd_errors, random_fd_state

from stochfrac.campaign import build_sample_problem, load_config, run_campaign, run_rate_study, with_overrides
from stochfrac.constitutive import (
    CRACK_CONSTANTS,
    MaterialParams,
    MaterialPointState,
    cf_quadrature,
    degraded_stress,
    elastic_energy,
    elastic_split,
    hardening_degradation,
    return_map,
    to_mandel,
    yield_function,
)
from stochfrac.fem import cell_index
from stochfrac.microstructure import AllocationSpec, achieved_fractions, allocate, ball_measure
from stochfrac.solver import SolverConfig, run_simulation
from stochfrac.stochastic import RandomStream

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

pytestmark = pytest.mark.slow


def sym(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def brute_force_violations(ms):
    """Plain O(n^2) overlap and clearance count."""
    bad = 0
    for i in range(len(ms)):
        for j in range(i + 1, len(ms)):
            s = ms.radii[i] + ms.radii[j]
            if 2 in (ms.phases[i], ms.phases[j]):
                s *= 1.0 + ms.gamma
            bad += math.dist(ms.centers[i], ms.centers[j]) < s
    clearance = 0
    for c, r in zip(ms.centers, ms.radii):
        gap = np.minimum(c - ms.lo, ms.hi - c) - r
        clearance += bool(np.any(gap < 2.0 * ms.gamma * r))
    return bad, clearance


def test_criterion_01_mc_rate(tmp_path):
    t0 = time.perf_counter()
    cfg = with_overrides(load_config(CONFIGS / "rate_M.yaml"), out=tmp_path)
    assert cfg.rate_M.levels == (16, 64, 256, 1024) and cfg.rate_M.replicates == 32
    rep = run_rate_study(cfg)
    elapsed = time.perf_counter() - t0
    assert rep["failed"] == 0
    assert -0.65 <= rep["slope"] <= -0.35, rep
    assert elapsed <= 600.0


def test_criterion_02_discretization_rate(tmp_path):
    t0 = time.perf_counter()
    cfg = with_overrides(load_config(CONFIGS / "rate_h.yaml"), out=tmp_path)
    assert cfg.rate_h.levels == 4
    rep = run_rate_study(cfg)
    assert 1.7 <= rep["h"]["slope"] <= 2.3, rep["h"]
    assert time.perf_counter() - t0 <= 60.0


@pytest.mark.parametrize("fv,fi", [(0.03, 0.03), (0.05, 0.05), (0.10, 0.06), (0.15, 0.07)])
def test_criterion_03_packing_validity(fv, fi):
    t0 = time.perf_counter()
    for seed in range(100):
        spec = AllocationSpec((0.0, 0.0), (1.0, 1.0), void_fraction=fv, inclusion_fraction=fi, gamma=0.1)
        ms = allocate(spec, RandomStream(seed))
        assert brute_force_violations(ms) == (0, 0)
        a_v, a_i = achieved_fractions(ms)
        assert abs(a_v - fv) <= ball_measure(spec.r_void[1], 2)
        assert abs(a_i - fi) <= ball_measure(spec.r_inclusion[1], 2)
    # budget for all four regimes together
    assert time.perf_counter() - t0 <= 30.0


def test_criterion_04_energy_split_identity():
    gen = np.random.default_rng(2024)
    p = MaterialParams(K=2.3, mu=0.9)
    eps = sym(gen.normal(size=(10_000, 3, 3)))
    plus, minus = elastic_split(eps, p)
    total = elastic_energy(eps, p)
    assert np.max(np.abs(plus + minus - total) / total) <= 1e-12


def test_criterion_05_residual_gradient_consistency():
    worst = 0.0
    for seed in range(10):
        for model in ("AT1", "AT2"):
            errs = fd_errors(*random_fd_state(n=4, at_model=model, seed=seed))
            worst = max(worst, *errs.values())
    assert worst <= 1e-4


def test_criterion_06_return_map_consistency():
    gen = np.random.default_rng(6)
    p = MaterialParams(K=2.0, mu=1.0, sigma_Y=0.5, H=0.3, eta_p=0.0)
    plastic = 0
    for _ in range(200):
        eps = sym(gen.normal(scale=0.6, size=(3, 3)))
        d = float(gen.uniform(0.0, 0.9))
        st = MaterialPointState(alpha_n=float(gen.uniform(0.0, 0.3)))
        r = return_map(eps, st, d, 0.0, p)
        if r.plastic:
            plastic += 1
            h_p = hardening_degradation(d, p) * p.H * (st.alpha_n + r.delta_alpha)
            assert abs(yield_function(r.stress, h_p, d, p)) <= 1e-9 * p.sigma_Y
    assert plastic >= 100

    eps0 = to_mandel(np.array([[0.6, 0.3, 0.0], [0.3, -0.2, 0.0], [0.0, 0.0, 0.1]]))
    st = MaterialPointState(alpha_n=0.05)
    r = return_map(eps0, st, 0.25, 0.0, p)
    assert r.plastic
    h = 1e-6
    fd = np.zeros((6, 6))
    for j in range(6):
        e = np.zeros(6)
        e[j] = h
        fd[:, j] = (return_map(eps0 + e, st, 0.25, 0.0, p).stress - return_map(eps0 - e, st, 0.25, 0.0, p).stress) / (2 * h)
    assert np.linalg.norm(r.tangent - fd) <= 1e-4 * np.linalg.norm(fd)

    E = 1.0
    brittle = MaterialParams.from_young(E, 0.25, sigma_Y=1e8 * E, l_p=0.0, H=0.1)
    for _ in range(100):
        eps = sym(gen.normal(scale=0.1, size=(3, 3)))
        d = float(gen.uniform(0.0, 0.99))
        ref = degraded_stress(eps, d, brittle)
        got = return_map(eps, MaterialPointState(), d, 0.0, brittle).stress
        assert np.linalg.norm(got - ref) <= 1e-10 * np.linalg.norm(ref)


def test_criterion_07_irreversibility():
    prob = bar(n=40, schedule=np.linspace(1e-3, 0.05, 100), l_f=0.05, psi_c=5e-5, at_model="AT1",
               sigma_Y=0.008, H=0.05, l_p=0.05)
    res = run_simulation(prob, SolverConfig(regime="E-P-D", early_stop=False), store_fields=True)
    assert res.forces[-1] <= 1e-3 * res.peak  # the run goes through softening to failure
    prev = None
    for s in res.steps:
        f = s.fields
        assert np.all(f["d"] >= 0.0) and np.all(f["d"] <= 1.0)
        if prev is not None:
            for key in ("d", "alpha", "history"):
                assert np.all(f[key] >= prev[key]), (s.step, key)
        prev = f


def test_criterion_08_localization():
    cfg = load_config(CONFIGS / "bar_mc.yaml")
    hits = 0
    for index in range(32):
        prob, _, realized = build_sample_problem(cfg, index)
        run_simulation(prob, cfg.solver)
        d_elem = prob.state.d[prob.mesh.elements].mean(axis=1)
        crack_cell = cell_index(prob.mesh, cfg.cells)[int(np.argmax(d_elem))]
        weakest = int(np.argmin(realized["psi_c"]))
        hits += int(crack_cell == weakest)
    assert hits >= 30, hits


@pytest.mark.parametrize("name,samples", [("bar_mc.yaml", 8), ("rve_2d.yaml", 4)])
def test_criterion_09_determinism(tmp_path, name, samples):
    base = load_config(CONFIGS / name)
    texts = []
    for threads in (1, 2):
        out = tmp_path / f"threads{threads}"
        run_campaign(with_overrides(base, samples=samples, out=out, threads=threads))
        texts.append((out / "summary.csv").read_bytes())
    assert texts[0] == texts[1]


@pytest.mark.parametrize("model,value", [("AT1", 8.0 / 3.0), ("AT2", 2.0)])
def test_criterion_10_crack_constants(model, value):
    assert abs(cf_quadrature(model) - value) <= 1e-10
    assert CRACK_CONSTANTS[model] == value
