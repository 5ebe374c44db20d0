"""Random streams, parameter perturbation and Monte Carlo estimators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ArgumentError, ConfigurationError

PARAMETER_NAMES = ("E", "mu", "K", "G_c", "psi_c", "H", "sigma_Y")
# H may be zero; every other parameter must stay strictly positive.
STRICTLY_POSITIVE = frozenset({"E", "mu", "K", "G_c", "psi_c", "sigma_Y"})

CI_Z = 1.96


class RandomStream:
    """Counter-based random stream keyed by ``(seed, stream_id, path)``.

    Backed by the Philox4x64 generator: the key is derived from the seed and
    the stream coordinates, the counter is the draw index. Two streams with
    the same coordinates replay the same sequence; distinct coordinates give
    independent keys.
    """

    def __init__(self, seed: int, stream_id: int = 0, path: tuple[int, ...] = ()):
        if seed < 0 or stream_id < 0:
            raise ArgumentError("seed and stream_id must be nonnegative")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.path = tuple(int(p) for p in path)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *self.path))
        key = ss.generate_state(2, dtype=np.uint64)
        self._bitgen = np.random.Philox(key=key)
        self._gen = np.random.Generator(self._bitgen)

    def child(self, index: int) -> "RandomStream":
        """Independent substream, e.g. one for packing and one for parameters."""
        return RandomStream(self.seed, self.stream_id, self.path + (int(index),))

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def random(self, size=None):
        return self._gen.random(size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, stream_id={self.stream_id}, path={self.path})"


@dataclass(frozen=True)
class PerturbedParameterSet:
    """Baseline values, uniform perturbation amplitudes and realization mode.

    A realized value is ``baseline + eta * theta`` with ``theta ~ U[-1, 1]``.
    """

    baseline: Mapping[str, float]
    eta: Mapping[str, float] = field(default_factory=dict)
    mode: str = "homogeneous"

    def __post_init__(self):
        if self.mode not in ("homogeneous", "heterogeneous"):
            raise ConfigurationError(f"unknown perturbation mode {self.mode!r}")
        for name in list(self.baseline) + list(self.eta):
            if name not in PARAMETER_NAMES:
                raise ConfigurationError(f"unknown parameter {name!r}")
        for name, amp in self.eta.items():
            if name not in self.baseline:
                raise ConfigurationError(f"eta given for {name!r} without a baseline")
            if amp < 0 or not math.isfinite(amp):
                raise ConfigurationError(f"eta({name}) must be finite and nonnegative")
        for name, base in self.baseline.items():
            amp = self.eta.get(name, 0.0)
            if name in STRICTLY_POSITIVE:
                if base <= 0:
                    raise ConfigurationError(f"baseline({name}) must be positive")
                if amp >= base:
                    raise ConfigurationError(
                        f"eta({name})={amp} >= baseline={base} could realize a nonpositive value"
                    )
            elif base < 0 or amp > base:
                raise ConfigurationError(f"{name} must stay nonnegative under perturbation")

    def names(self) -> list[str]:
        # Fixed draw order regardless of mapping order.
        return [n for n in PARAMETER_NAMES if n in self.baseline]


def realize_parameters(pset: PerturbedParameterSet, rng: RandomStream, n_points: int) -> dict[str, np.ndarray]:
    """Draw one realization of every parameter for ``n_points`` material points."""
    if n_points < 1:
        raise ArgumentError("n_points must be >= 1")
    out = {}
    for name in pset.names():
        base = float(pset.baseline[name])
        amp = float(pset.eta.get(name, 0.0))
        if pset.mode == "homogeneous":
            theta = np.full(n_points, rng.uniform(-1.0, 1.0))
        else:
            theta = rng.uniform(-1.0, 1.0, n_points)
        out[name] = base + amp * theta
    return out


def _as_values(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ArgumentError("estimator needs at least one sample")
    return arr


def mc_mean(values, axis=0):
    """Sample mean ``1/M sum_i J_i``."""
    arr = _as_values(values)
    return _shifted_mean(arr, axis)


def _shifted_mean(arr, axis, keepdims=False):
    # shifting by the first sample makes identical samples average to themselves exactly
    ref = np.take(arr, [0], axis=axis)
    out = ref + (arr - ref).mean(axis=axis, keepdims=True)
    return out if keepdims else np.squeeze(out, axis=axis)


def mc_variance(values, axis=0, unbiased: bool = False):
    """Sample variance with divisor ``M`` (``M - 1`` when ``unbiased``)."""
    arr = _as_values(values)
    m = arr.shape[axis]
    if unbiased and m < 2:
        raise ArgumentError("unbiased variance needs M >= 2")
    mean = _shifted_mean(arr, axis, keepdims=True)
    sq = ((arr - mean) ** 2).sum(axis=axis)
    return sq / (m - 1 if unbiased else m)


@dataclass(frozen=True)
class QoICurve:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        if t.shape != v.shape or t.ndim != 1:
            raise ArgumentError("times and values must be 1-D arrays of equal length")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ArgumentError("QoI times must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise ArgumentError("QoI values must be finite")

    def peak(self) -> float:
        return float(self.values.max()) if self.values.size else float("nan")


@dataclass(frozen=True)
class McSummary:
    samples: int
    mean: QoICurve
    variance: QoICurve
    ci95: tuple[QoICurve, QoICurve]
    per_sample_qoi: list[QoICurve] | None = None


class McAccumulator:
    """Order-independent collection of per-sample curves.

    Partial accumulators from different workers merge by union; the
    estimators are always evaluated in sample-index order, so any split of
    the work reproduces the single-worker summary exactly.
    """

    def __init__(self, times: Sequence[float]):
        self.times = np.asarray(times, dtype=float)
        self._curves: dict[int, np.ndarray] = {}

    def add(self, index: int, values) -> None:
        if index in self._curves:
            raise ArgumentError(f"sample {index} already recorded")
        v = np.zeros(self.times.size)
        vals = np.asarray(values, dtype=float)
        # Curves cut short by the failure stop are padded with zero force.
        v[: vals.size] = vals[: self.times.size]
        self._curves[int(index)] = v

    def merge(self, other: "McAccumulator") -> "McAccumulator":
        if not np.array_equal(self.times, other.times):
            raise ArgumentError("cannot merge accumulators over different time grids")
        overlap = self._curves.keys() & other._curves.keys()
        if overlap:
            raise ArgumentError(f"samples recorded twice: {sorted(overlap)[:5]}")
        out = McAccumulator(self.times)
        out._curves = {**self._curves, **other._curves}
        return out

    def __len__(self):
        return len(self._curves)

    def indices(self) -> list[int]:
        return sorted(self._curves)

    def matrix(self) -> np.ndarray:
        return np.array([self._curves[i] for i in self.indices()])

    def summary(self, keep_samples: bool = False, unbiased: bool = False) -> McSummary:
        data = self.matrix()
        m = data.shape[0]
        mean = mc_mean(data)
        var = np.maximum(mc_variance(data, unbiased=unbiased), 0.0)
        half = CI_Z * np.sqrt(var / m)
        per = [QoICurve(self.times, row) for row in data] if keep_samples else None
        return McSummary(
            samples=m,
            mean=QoICurve(self.times, mean),
            variance=QoICurve(self.times, var),
            ci95=(QoICurve(self.times, mean - half), QoICurve(self.times, mean + half)),
            per_sample_qoi=per,
        )


@dataclass(frozen=True)
class RateFit:
    """Least-squares line through ``log(error)`` against ``log(level)``."""

    slope: float
    intercept: float
    levels: tuple[float, ...]
    errors: tuple[float, ...]
    degenerate: bool = False


def _loglog_fit(levels: Sequence[float], errors: Sequence[float]) -> RateFit:
    x = np.asarray(levels, dtype=float)
    y = np.asarray(errors, dtype=float)
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        return RateFit(float("nan"), float("nan"), tuple(x), tuple(y), degenerate=True)
    slope, intercept = np.polyfit(np.log(x), np.log(y), 1)
    return RateFit(float(slope), float(intercept), tuple(x), tuple(y))


def mc_rate_study(qoi_per_M: Mapping[int, Sequence[float]]) -> RateFit:
    """Fit the decay of the RMS replicate error against the sample count.

    ``qoi_per_M`` maps each sample count ``M`` to the replicate errors
    ``E_MC - reference`` observed at that level.
    """
    levels = sorted(int(m) for m in qoi_per_M)
    if len(levels) < 4:
        raise ArgumentError("rate study needs at least 4 distinct M levels")
    if levels[0] < 1:
        raise ArgumentError("M levels must be positive")
    for a, b in zip(levels, levels[1:]):
        if b % a:
            raise ArgumentError("successive M levels must differ by an integer ratio")
    rms = []
    for m in levels:
        errs = np.asarray(qoi_per_M[m], dtype=float)
        if errs.size == 0:
            raise ArgumentError(f"no replicates at M={m}")
        rms.append(math.sqrt(float(np.mean(errs**2))))
    return _loglog_fit(levels, rms)


def _monotone_series(errors, what: str) -> tuple[list[float], list[float]]:
    pairs = list(errors.items()) if isinstance(errors, Mapping) else [tuple(p) for p in errors]
    if len(pairs) < 2:
        raise ArgumentError(f"need at least two {what} levels")
    keys = [float(k) for k, _ in pairs]
    diffs = np.diff(keys)
    if not (np.all(diffs > 0) or np.all(diffs < 0)):
        raise ArgumentError(f"{what} grid must be strictly monotone")
    if min(keys) <= 0:
        raise ArgumentError(f"{what} levels must be positive")
    return keys, [float(v) for _, v in pairs]


def total_error_decomposition(errors_h, errors_M) -> tuple[RateFit, RateFit]:
    """Separate log-log fits for the mesh-size and sample-count error series.

    Returns ``(discretization_fit, statistical_fit)``; the first slope is the
    observed order in ``h``, the second should sit near ``-1/2``.
    """
    h, eh = _monotone_series(errors_h, "h")
    m, em = _monotone_series(errors_M, "M")
    return _loglog_fit(h, eh), _loglog_fit(m, em)


def rms_replicate_errors(
    pool: Sequence[float], levels: Iterable[int], replicates: int, rng: RandomStream
) -> tuple[float, dict[int, np.ndarray]]:
    """Replicate estimator errors resampled from a pool of QoI samples.

    Each replicate at level ``M`` draws ``M`` pool entries with replacement;
    its error is taken against the pool mean, which is the exact expectation
    of the resampling distribution.
    """
    values = np.asarray(pool, dtype=float)
    if values.size < 2:
        raise ArgumentError("pool needs at least two samples")
    reference = float(mc_mean(values))
    out = {}
    for m in levels:
        idx = rng.integers(0, values.size, size=(replicates, int(m)))
        out[int(m)] = values[idx].mean(axis=1) - reference
    return reference, out
