import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stochfrac.errors import ArgumentError, ConfigurationError, PackingSaturated
from stochfrac.microstructure import (
    PHASE_CODES,
    AllocationSpec,
    Microstructure,
    achieved_fractions,
    allocate,
    ball_measure,
    boundary_violations,
    dumps,
    load,
    loads,
    pair_violations,
    phase_at,
    save,
)
from stochfrac.stochastic import RandomStream

UNIT = ((0.0, 0.0), (1.0, 1.0))


def disks(centers, radii, phases, gamma=0.1):
    return Microstructure(UNIT[0], UNIT[1], gamma, np.array(centers, dtype=float).reshape(-1, 2),
                          np.array(radii, dtype=float), np.array([PHASE_CODES[p] for p in phases], dtype=np.int64))


def brute_force_ok(ms):
    """Independent O(n^2) check written out in plain loops."""
    for i in range(len(ms)):
        for j in range(i + 1, len(ms)):
            dist = math.dist(ms.centers[i], ms.centers[j])
            s = ms.radii[i] + ms.radii[j]
            if 2 in (ms.phases[i], ms.phases[j]):
                s *= 1.0 + ms.gamma
            if dist < s:
                return False
        for k in range(ms.dim):
            gap = min(ms.centers[i, k] - ms.lo[k], ms.hi[k] - ms.centers[i, k]) - ms.radii[i]
            if gap < 2.0 * ms.gamma * ms.radii[i]:
                return False
    return True


def test_empty_targets():
    ms = allocate(AllocationSpec(*UNIT), RandomStream(0))
    assert len(ms) == 0 and achieved_fractions(ms) == (0.0, 0.0)


def test_three_plus_three_percent():
    spec = AllocationSpec(*UNIT, r_void=(0.02, 0.05), r_inclusion=(0.02, 0.05), void_fraction=0.03,
                          inclusion_fraction=0.03, gamma=0.1)
    ms = allocate(spec, RandomStream(11))
    fv, fi = achieved_fractions(ms)
    tol = float(ball_measure(0.05, 2))
    assert 0.03 - tol <= fv <= 0.03 and 0.03 - tol <= fi <= 0.03
    assert brute_force_ok(ms)
    assert pair_violations(ms) == [] and boundary_violations(ms) == []


def test_densest_regime_never_overlaps():
    spec = AllocationSpec(*UNIT, void_fraction=0.12, inclusion_fraction=0.50, gamma=0.1, max_attempts=3000)
    try:
        ms = allocate(spec, RandomStream(5))
    except PackingSaturated as exc:
        fv, fi = exc.achieved
        assert fv <= 0.12 and fi <= 0.50
    else:
        assert brute_force_ok(ms)


def test_three_dimensional_allocation():
    spec = AllocationSpec((0, 0, 0), (1, 1, 1), r_void=(0.05, 0.1), r_inclusion=(0.05, 0.1), void_fraction=0.05,
                          inclusion_fraction=0.05)
    ms = allocate(spec, RandomStream(3))
    fv, fi = achieved_fractions(ms)
    assert fv <= 0.05 and fi <= 0.05 and fv > 0.05 - ball_measure(0.1, 3)
    assert brute_force_ok(ms)


@given(st.integers(0, 2**32 - 1), st.floats(0.0, 0.12), st.floats(0.0, 0.12), st.floats(0.0, 0.3))
def test_allocation_properties(seed, fv, fi, gamma):
    spec = AllocationSpec(*UNIT, r_void=(0.03, 0.06), r_inclusion=(0.03, 0.06), void_fraction=fv,
                          inclusion_fraction=fi, gamma=gamma)
    ms = allocate(spec, RandomStream(seed))
    av, ai = achieved_fractions(ms)
    tol = float(ball_measure(0.06, 2))
    assert av <= fv + 1e-12 and ai <= fi + 1e-12
    assert av > fv - tol and ai > fi - tol
    assert av + ai < 1.0
    assert brute_force_ok(ms)
    assert np.all((ms.radii >= 0.03) & (ms.radii <= 0.06))


def test_gamma_zero_allows_tangency_only():
    ms = disks([[0.3, 0.5], [0.5, 0.5]], [0.1, 0.1], ["inclusion", "inclusion"], gamma=0.0)
    assert pair_violations(ms) == []
    ms = disks([[0.3, 0.5], [0.49, 0.5]], [0.1, 0.1], ["void", "void"], gamma=0.0)
    assert pair_violations(ms) == [(0, 1)]


def test_allocation_is_deterministic():
    spec = AllocationSpec(*UNIT, void_fraction=0.05, inclusion_fraction=0.05)
    a, b = allocate(spec, RandomStream(8, 2)), allocate(spec, RandomStream(8, 2))
    assert np.array_equal(a.centers, b.centers) and np.array_equal(a.radii, b.radii)
    c = allocate(spec, RandomStream(8, 3))
    assert not (len(a) == len(c) and np.array_equal(a.centers, c.centers))


def test_spec_validation():
    with pytest.raises(ConfigurationError):
        AllocationSpec(*UNIT, void_fraction=0.6, inclusion_fraction=0.4)
    with pytest.raises(ConfigurationError):
        AllocationSpec(*UNIT, r_void=(0.05, 0.02))
    with pytest.raises(ConfigurationError):
        AllocationSpec(*UNIT, gamma=-0.1)
    with pytest.raises(ConfigurationError):
        AllocationSpec((0.0,), (1.0,))


def test_phase_lookup():
    ms = disks([[0.5, 0.5], [0.2, 0.2]], [0.1, 0.05], ["inclusion", "void"])
    assert phase_at(ms, [0.5, 0.5]) == "inclusion"
    assert phase_at(ms, [0.2, 0.2]) == "void"
    assert phase_at(ms, [0.9, 0.9]) == "matrix"
    assert phase_at(ms, [0.6, 0.5]) == "inclusion"  # closed ball
    with pytest.raises(ArgumentError):
        phase_at(ms, [1.5, 0.5])


def test_achieved_fraction_arithmetic():
    assert achieved_fractions(disks([[0.5, 0.5]], [0.1], ["inclusion"])) == pytest.approx((0.0, math.pi * 0.01))
    two = disks([[0.3, 0.3], [0.7, 0.7]], [0.1, 0.1], ["void", "void"])
    assert achieved_fractions(two) == pytest.approx((2 * math.pi * 0.01, 0.0))


def test_text_round_trip(tmp_path):
    spec = AllocationSpec(*UNIT, void_fraction=0.05, inclusion_fraction=0.05)
    ms = allocate(spec, RandomStream(4, 9))
    text = dumps(ms)
    back = loads(text)
    assert dumps(back) == text
    assert np.array_equal(back.centers, ms.centers) and np.array_equal(back.radii, ms.radii)
    assert back.seed == 4 and back.stream_id == 9
    save(ms, tmp_path / "ms.txt")
    assert dumps(load(tmp_path / "ms.txt")) == text
    line = text.splitlines()[-1].split()
    assert all(len(v.split(".")[1]) == 12 for v in line[1:])
    with pytest.raises(ArgumentError):
        loads("garbage")
