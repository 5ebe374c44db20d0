"""Random sequential allocation of voids and inclusions in a box."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._accel import njit, select
from .errors import ArgumentError, ConfigurationError, PackingSaturated
from .stochastic import RandomStream

PHASES = ("void", "inclusion")
PHASE_CODES = {"matrix": 0, "void": 1, "inclusion": 2}
PHASE_NAMES = {v: k for k, v in PHASE_CODES.items()}
_QUANT = 12
_FORMAT_TAG = "# stochfrac-microstructure v1"


def ball_measure(r, dim: int):
    """Area of a disk (2-D) or volume of a ball (3-D)."""
    r = np.asarray(r, dtype=float)
    if dim == 2:
        return math.pi * r**2
    if dim == 3:
        return 4.0 / 3.0 * math.pi * r**3
    raise ArgumentError("particles live in 2-D or 3-D boxes")


def _radius_for_measure(m: float, dim: int) -> float:
    if m <= 0:
        return 0.0
    return math.sqrt(m / math.pi) if dim == 2 else (3.0 * m / (4.0 * math.pi)) ** (1.0 / 3.0)


@dataclass(frozen=True)
class Particle:
    phase: str
    center: tuple[float, ...]
    radius: float


@dataclass(frozen=True)
class AllocationSpec:
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    r_void: tuple[float, float] = (0.02, 0.05)
    r_inclusion: tuple[float, float] = (0.02, 0.05)
    void_fraction: float = 0.0
    inclusion_fraction: float = 0.0
    gamma: float = 0.1
    max_attempts: int = 100_000
    enlarge_voids: bool = False

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(x) for x in self.lo))
        object.__setattr__(self, "hi", tuple(float(x) for x in self.hi))
        if len(self.lo) != len(self.hi) or len(self.lo) not in (2, 3):
            raise ConfigurationError("allocation box must be 2-D or 3-D")
        if any(h <= l for l, h in zip(self.lo, self.hi)):
            raise ConfigurationError("box must have positive extent")
        for name in ("r_void", "r_inclusion"):
            rmin, rmax = getattr(self, name)
            if not 0 < rmin <= rmax:
                raise ConfigurationError(f"{name} needs 0 < r_min <= r_max")
            half = 0.5 * min(h - l for l, h in zip(self.lo, self.hi))
            if rmax * (1.0 + 2.0 * self.gamma) > half:
                raise ConfigurationError(f"{name} r_max does not fit the box with clearance")
        for name in ("void_fraction", "inclusion_fraction"):
            f = getattr(self, name)
            if not 0.0 <= f < 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1)")
        if self.void_fraction + self.inclusion_fraction >= 1.0:
            raise ConfigurationError("void + inclusion fractions must stay below 1")
        if self.gamma < 0:
            raise ConfigurationError("gamma must be nonnegative")
        if self.max_attempts < 1:
            raise ConfigurationError("max_attempts must be positive")

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.hi, self.lo)))

    def radius_bounds(self, phase: str) -> tuple[float, float]:
        return self.r_void if phase == "void" else self.r_inclusion


@dataclass
class Microstructure:
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    gamma: float
    centers: np.ndarray
    radii: np.ndarray
    phases: np.ndarray  # PHASE_CODES values (void=1, inclusion=2)
    seed: int | None = None
    stream_id: int | None = None
    spec: AllocationSpec | None = field(default=None, repr=False)
    enlarge_voids: bool = False

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.hi, self.lo)))

    @property
    def particles(self) -> list[Particle]:
        return [
            Particle(PHASE_NAMES[int(p)], tuple(float(x) for x in c), float(r))
            for c, r, p in zip(self.centers, self.radii, self.phases)
        ]

    def __len__(self):
        return len(self.radii)


def achieved_fractions(ms: Microstructure) -> tuple[float, float]:
    """``(void fraction, inclusion fraction)`` of the domain measure."""
    meas = ball_measure(ms.radii, ms.dim) if len(ms.radii) else np.zeros(0)
    vol = ms.volume
    voids = float(meas[ms.phases == PHASE_CODES["void"]].sum()) / vol
    incl = float(meas[ms.phases == PHASE_CODES["inclusion"]].sum()) / vol
    return voids, incl


# --------------------------------------------------------------------------
# overlap kernels (cell list)
# --------------------------------------------------------------------------


@njit
def _overlaps_nb(x, r, phase, centers, radii, phases, head, nxt, lo, cell, ncell, gamma, enlarge_voids):
    dim = x.shape[0]
    idx = np.empty(dim, dtype=np.int64)
    for k in range(dim):
        c = int((x[k] - lo[k]) / cell[k])
        idx[k] = min(max(c, 0), ncell[k] - 1)
    # visit the 3^dim neighbourhood
    total = 1
    for k in range(dim):
        total *= 3
    for code in range(total):
        rem = code
        flat = 0
        ok = True
        stride = 1
        for k in range(dim):
            off = rem % 3 - 1
            rem //= 3
            c = idx[k] + off
            if c < 0 or c >= ncell[k]:
                ok = False
                break
            flat += c * stride
            stride *= ncell[k]
        if not ok:
            continue
        j = head[flat]
        while j >= 0:
            d2 = 0.0
            for k in range(dim):
                dx = x[k] - centers[j, k]
                d2 += dx * dx
            s = r + radii[j]
            if phase == 2 or phases[j] == 2 or enlarge_voids:
                s *= 1.0 + gamma
            if d2 < s * s:
                return True
            j = nxt[j]
    return False


def _overlaps_np(x, r, phase, centers, radii, phases, head, nxt, lo, cell, ncell, gamma, enlarge_voids):
    dim = x.shape[0]
    idx = np.clip(((x - lo) / cell).astype(np.int64), 0, ncell - 1)
    cand = []
    for offs in np.ndindex(*([3] * dim)):
        c = idx + np.asarray(offs) - 1
        if np.any(c < 0) or np.any(c >= ncell):
            continue
        flat = int(np.ravel_multi_index(c[::-1], ncell[::-1]))
        j = head[flat]
        while j >= 0:
            cand.append(j)
            j = nxt[j]
    if not cand:
        return False
    cand = np.asarray(cand)
    dx = centers[cand] - x
    d2 = np.einsum("ij,ij->i", dx, dx)
    s = r + radii[cand]
    enlarged = (phases[cand] == 2) | (phase == 2) | enlarge_voids
    s = np.where(enlarged, s * (1.0 + gamma), s)
    return bool(np.any(d2 < s * s))


overlaps = select(_overlaps_nb, _overlaps_np)


class _CellList:
    def __init__(self, lo, hi, cell_size, capacity):
        ext = np.subtract(hi, lo)
        self.lo = np.asarray(lo, dtype=float)
        self.ncell = np.maximum(1, np.floor(ext / cell_size)).astype(np.int64)
        self.cell = ext / self.ncell
        self.head = -np.ones(int(np.prod(self.ncell)), dtype=np.int64)
        self.nxt = -np.ones(capacity, dtype=np.int64)

    def flat_index(self, x):
        c = np.clip(((x - self.lo) / self.cell).astype(np.int64), 0, self.ncell - 1)
        # x-fastest ordering, matching the kernels
        flat, stride = 0, 1
        for k in range(len(c)):
            flat += int(c[k]) * stride
            stride *= int(self.ncell[k])
        return flat

    def insert(self, j, x):
        if j >= self.nxt.size:
            grown = -np.ones(2 * self.nxt.size, dtype=np.int64)
            grown[: self.nxt.size] = self.nxt
            self.nxt = grown
        f = self.flat_index(x)
        self.nxt[j] = self.head[f]
        self.head[f] = j


# --------------------------------------------------------------------------
# allocation
# --------------------------------------------------------------------------


class _Uniforms:
    """Buffered uniform draws consumed in a fixed order."""

    def __init__(self, rng: RandomStream, block: int = 4096):
        self.rng = rng
        self.block = block
        self.buf = np.empty(0)
        self.pos = 0

    def take(self, n: int) -> np.ndarray:
        if self.pos + n > self.buf.size:
            self.buf = np.concatenate([self.buf[self.pos :], self.rng.random(self.block)])
            self.pos = 0
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out


def allocate(spec: AllocationSpec, rng: RandomStream) -> Microstructure:
    """Place non-overlapping voids and inclusions until the fractions are met.

    Candidates are drawn as ``r = r_min + theta (r_max - r_min)`` and
    ``x = x_min + theta (x_max - x_min)`` where ``[x_min, x_max]`` is the
    region that keeps the ``2 gamma r`` matrix layer to every face. Pair tests
    enlarge radii by ``1 + gamma`` whenever an inclusion is involved. Each
    phase stops once no admissible radius fits its remaining budget, so the
    achieved fraction never exceeds its target and falls short by less than
    one smallest particle.
    """
    dim = spec.dim
    lo = np.asarray(spec.lo)
    hi = np.asarray(spec.hi)
    volume = spec.volume
    gamma = spec.gamma
    targets = {"void": spec.void_fraction * volume, "inclusion": spec.inclusion_fraction * volume}
    acc = {"void": 0.0, "inclusion": 0.0}
    r_max_all = max(spec.r_void[1], spec.r_inclusion[1])
    cells = _CellList(lo, hi, 2.0 * (1.0 + gamma) * r_max_all, capacity=256)

    centers = np.zeros((64, dim))
    radii = np.zeros(64)
    phases = np.zeros(64, dtype=np.int64)
    n = 0
    draws = _Uniforms(rng)

    def active(phase):
        rmin = spec.radius_bounds(phase)[0]
        return targets[phase] - acc[phase] >= float(ball_measure(rmin, dim))

    turn = 0
    while True:
        live = [p for p in PHASES if active(p)]
        if not live:
            break
        if len(live) == 2:
            phase = PHASES[turn % 2]
            turn += 1
        else:
            phase = live[0]
        rmin, rmax = spec.radius_bounds(phase)
        r_hi = min(rmax, _radius_for_measure(targets[phase] - acc[phase], dim))
        code = PHASE_CODES[phase]
        placed = False
        for _ in range(spec.max_attempts):
            u = draws.take(1 + dim)
            r = round(rmin + u[0] * (r_hi - rmin), _QUANT)
            if r < rmin or r > r_hi:
                continue
            margin = r * (1.0 + 2.0 * gamma)
            x = np.round(lo + margin + u[1:] * (hi - lo - 2.0 * margin), _QUANT)
            if np.any(x - lo < margin) or np.any(hi - x < margin):
                continue
            if not overlaps(x, r, code, centers[:n], radii[:n], phases[:n], cells.head, cells.nxt,
                            cells.lo, cells.cell, cells.ncell, gamma, spec.enlarge_voids):
                placed = True
                break
        if not placed:
            ms = Microstructure(spec.lo, spec.hi, gamma, centers[:n].copy(), radii[:n].copy(),
                                phases[:n].copy(), rng.seed, rng.stream_id, spec, spec.enlarge_voids)
            raise PackingSaturated(
                f"no admissible {phase} position after {spec.max_attempts} attempts", achieved_fractions(ms)
            )
        if n == radii.size:
            centers = np.vstack([centers, np.zeros_like(centers)])
            radii = np.concatenate([radii, np.zeros_like(radii)])
            phases = np.concatenate([phases, np.zeros_like(phases)])
        centers[n], radii[n], phases[n] = x, r, code
        cells.insert(n, x)
        n += 1
        acc[phase] += float(ball_measure(r, dim))
        assert acc["void"] + acc["inclusion"] < volume

    return Microstructure(spec.lo, spec.hi, gamma, centers[:n].copy(), radii[:n].copy(), phases[:n].copy(),
                          rng.seed, rng.stream_id, spec, spec.enlarge_voids)


# --------------------------------------------------------------------------
# queries and checks
# --------------------------------------------------------------------------


def phase_codes_at(ms: Microstructure, points) -> np.ndarray:
    """Vectorised phase lookup; closed balls with the true radii."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.zeros(len(pts), dtype=np.int64)
    if len(ms.radii) == 0:
        return out
    for start in range(0, len(pts), 2048):
        chunk = pts[start : start + 2048]
        d2 = ((chunk[:, None, :] - ms.centers[None, :, :]) ** 2).sum(-1)
        inside = d2 <= ms.radii[None, :] ** 2
        hit = inside.any(axis=1)
        first = inside.argmax(axis=1)
        out[start : start + len(chunk)] = np.where(hit, ms.phases[first], 0)
    return out


def phase_at(ms: Microstructure, x) -> str:
    x = np.asarray(x, dtype=float)
    if x.shape != (ms.dim,):
        raise ArgumentError(f"point must have {ms.dim} coordinates")
    if np.any(x < np.asarray(ms.lo)) or np.any(x > np.asarray(ms.hi)):
        raise ArgumentError("point lies outside the domain box")
    return PHASE_NAMES[int(phase_codes_at(ms, x)[0])]


def pair_violations(ms: Microstructure) -> list[tuple[int, int]]:
    """All pairs breaking the spacing rule (brute force, O(n^2))."""
    out = []
    c, r, p = ms.centers, ms.radii, ms.phases
    for i in range(len(r)):
        d = np.sqrt(((c[i + 1 :] - c[i]) ** 2).sum(axis=1))
        s = r[i] + r[i + 1 :]
        enlarged = (p[i] == 2) | (p[i + 1 :] == 2) | ms.enlarge_voids
        s = np.where(enlarged, (1.0 + ms.gamma) * s, s)
        for j in np.nonzero(d < s)[0]:
            out.append((i, i + 1 + int(j)))
    return out


def boundary_violations(ms: Microstructure) -> list[int]:
    """Particles closer than ``2 gamma r`` to a face (brute force)."""
    lo, hi = np.asarray(ms.lo), np.asarray(ms.hi)
    gap = np.minimum(ms.centers - lo, hi - ms.centers).min(axis=1) - ms.radii if len(ms.radii) else np.zeros(0)
    return [int(i) for i in np.nonzero(gap < 2.0 * ms.gamma * ms.radii)[0]]


# --------------------------------------------------------------------------
# text format
# --------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.{_QUANT}f}"


def dumps(ms: Microstructure) -> str:
    lines = [
        _FORMAT_TAG,
        f"dim {ms.dim}",
        "box " + " ".join(_fmt(v) for v in (*ms.lo, *ms.hi)),
        f"gamma {_fmt(ms.gamma)}",
        f"enlarge_voids {int(ms.enlarge_voids)}",
        f"seed {'-' if ms.seed is None else ms.seed} {'-' if ms.stream_id is None else ms.stream_id}",
        f"particles {len(ms)}",
    ]
    for c, r, p in zip(ms.centers, ms.radii, ms.phases):
        lines.append(" ".join([PHASE_NAMES[int(p)], *(_fmt(v) for v in c), _fmt(r)]))
    return "\n".join(lines) + "\n"


def loads(text: str) -> Microstructure:
    rows = [ln.split() for ln in text.splitlines() if ln.strip()]
    if not rows or " ".join(rows[0]) != _FORMAT_TAG:
        raise ArgumentError("not a stochfrac microstructure file")
    head = {r[0]: r[1:] for r in rows[1:7]}
    dim = int(head["dim"][0])
    box = [float(v) for v in head["box"]]
    seed, stream = head["seed"]
    n = int(head["particles"][0])
    body = rows[7 : 7 + n]
    if len(body) != n:
        raise ArgumentError("particle count does not match the header")
    centers = np.array([[float(v) for v in r[1 : 1 + dim]] for r in body]).reshape(n, dim)
    radii = np.array([float(r[1 + dim]) for r in body])
    phases = np.array([PHASE_CODES[r[0]] for r in body], dtype=np.int64)
    return Microstructure(
        tuple(box[:dim]), tuple(box[dim:]), float(head["gamma"][0]), centers, radii, phases,
        None if seed == "-" else int(seed), None if stream == "-" else int(stream),
        enlarge_voids=bool(int(head["enlarge_voids"][0])),
    )


def save(ms: Microstructure, path) -> None:
    Path(path).write_text(dumps(ms))


def load(path) -> Microstructure:
    return loads(Path(path).read_text())
