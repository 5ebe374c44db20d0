"""Campaign configuration: YAML file with a versioned schema."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from ..constitutive import MaterialParams
from ..errors import ConfigurationError
from ..microstructure import AllocationSpec
from ..solver import SolverConfig
from ..stochastic import PerturbedParameterSet

SCHEMA_VERSION = 1
STUDIES = ("single", "mc", "rate_M", "rate_h")

_TOP_KEYS = {"schema_version", "study", "samples", "seed", "output", "threads", "problem", "material",
             "microstructure", "perturbation", "solver", "rate_M", "rate_h", "export_vtk"}
_PROBLEM_KEYS = {"dimension", "box", "divisions", "dirichlet", "neumann", "d_fixed", "alpha_fixed", "schedule",
                 "reaction_tag"}
_MATERIAL_KEYS = {"E", "nu", "K", "mu", "sigma_Y", "H", "l_p", "l_f", "psi_c", "G_c", "eta_f", "eta_p", "zeta",
                  "at_model", "fracture_form", "residual_stiffness", "hardening_degradation"}
_SOLVER_KEYS = set(SolverConfig.__dataclass_fields__)


@dataclass
class ProblemSpec:
    dimension: int
    box: tuple[tuple[float, ...], tuple[float, ...]]
    divisions: tuple[int, ...]
    dirichlet: list[dict]
    neumann: list[dict]
    d_fixed: tuple[str, ...]
    alpha_fixed: tuple[str, ...]
    schedule: np.ndarray
    reaction_tag: str


@dataclass
class RateMSpec:
    levels: tuple[int, ...] = (16, 64, 256, 1024)
    replicates: int = 32
    pool: int = 512


@dataclass
class RateHSpec:
    coarsest: int = 4
    levels: int = 4
    samples: int = 16
    E_b: float = 1.0
    eta: float = 0.5
    M_levels: tuple[int, ...] = (16, 64, 256, 1024)
    replicates: int = 32


@dataclass
class CampaignConfig:
    study: str
    samples: int
    seed: int
    output: Path
    threads: int
    problem: ProblemSpec
    phases: dict[str, MaterialParams]
    allocation: AllocationSpec | None
    perturbation: PerturbedParameterSet | None
    cells: tuple[int, ...] | None
    solver: SolverConfig
    rate_M: RateMSpec
    rate_h: RateHSpec
    export_vtk: bool = False
    raw: dict = field(default_factory=dict, repr=False)

    def digest(self) -> str:
        """SHA-256 of the canonical JSON configuration, ignoring threads and output location."""
        body = {k: v for k, v in self.raw.items() if k not in ("threads", "output")}
        body.update(samples=self.samples, seed=self.seed)
        text = json.dumps(body, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(text.encode()).hexdigest()


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigurationError(f"{where}: missing required key {key!r}")
    return d[key]


def _check_keys(d: Any, allowed: set, where: str) -> dict:
    if not isinstance(d, dict):
        raise ConfigurationError(f"{where}: expected a mapping")
    unknown = set(d) - allowed
    if unknown:
        raise ConfigurationError(f"{where}: unknown keys {sorted(unknown)}")
    return d


def _material(d: dict, where: str) -> MaterialParams:
    d = dict(_check_keys(d, _MATERIAL_KEYS, where))
    try:
        if "E" in d or "nu" in d:
            if "K" in d or "mu" in d:
                raise ConfigurationError(f"{where}: give either (E, nu) or (K, mu), not both")
            E = float(_require(d, "E", where))
            nu = float(d.pop("nu", 0.0))
            d.pop("E")
            return MaterialParams.from_young(E, nu, **d)
        return MaterialParams(**d)
    except TypeError as exc:
        raise ConfigurationError(f"{where}: {exc}") from None


def _schedule(s) -> np.ndarray:
    if isinstance(s, dict):
        _check_keys(s, {"start", "stop", "steps"}, "problem.schedule")
        steps = int(_require(s, "steps", "problem.schedule"))
        if steps < 1:
            raise ConfigurationError("problem.schedule.steps must be >= 1")
        return np.linspace(float(_require(s, "start", "problem.schedule")), float(_require(s, "stop", "problem.schedule")),
                           steps)
    arr = np.asarray(s, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ConfigurationError("problem.schedule must be a list of times or {start, stop, steps}")
    return arr


def _problem(d: dict) -> ProblemSpec:
    d = _check_keys(d, _PROBLEM_KEYS, "problem")
    dim = int(_require(d, "dimension", "problem"))
    if dim not in (1, 2):
        raise ConfigurationError("problem.dimension must be 1 or 2")
    box = _require(d, "box", "problem")
    lo, hi = (tuple(float(x) for x in np.atleast_1d(b)) for b in box)
    div = tuple(int(x) for x in np.atleast_1d(_require(d, "divisions", "problem")))
    if len(lo) != dim or len(hi) != dim or len(div) != dim:
        raise ConfigurationError("problem: box and divisions must match the dimension")
    if any(n < 1 for n in div):
        raise ConfigurationError("problem.divisions must be >= 1")
    sched = _schedule(_require(d, "schedule", "problem"))
    if sched[0] <= 0 or np.any(np.diff(sched) <= 0):
        raise ConfigurationError("problem.schedule must be strictly increasing and positive")
    bcs = []
    for kind in ("dirichlet", "neumann"):
        items = d.get(kind, [])
        for i, bc in enumerate(items):
            _check_keys(bc, {"tag", "component", "value", "scaled"}, f"problem.{kind}[{i}]")
            _require(bc, "tag", f"problem.{kind}[{i}]")
        bcs.append([dict(bc) for bc in items])
    return ProblemSpec(dim, (lo, hi), div, bcs[0], bcs[1], tuple(d.get("d_fixed", ())), tuple(d.get("alpha_fixed", ())),
                       sched, str(d.get("reaction_tag", "right")))


def parse_config(raw: dict, base_dir: Path | None = None) -> CampaignConfig:
    """Validate a configuration mapping and build the typed configuration."""
    raw = copy.deepcopy(raw)
    _check_keys(raw, _TOP_KEYS, "config")
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigurationError(f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
    study = raw.get("study", "mc")
    if study not in STUDIES:
        raise ConfigurationError(f"study must be one of {STUDIES}")
    samples = int(raw.get("samples", 1))
    if samples < 1:
        raise ConfigurationError("samples must be >= 1")
    seed = int(raw.get("seed", 0))
    if seed < 0:
        raise ConfigurationError("seed must be nonnegative")
    threads = int(raw.get("threads", 1))
    if threads < 1:
        raise ConfigurationError("threads must be >= 1")
    out = Path(raw.get("output", "stochfrac-out"))
    if base_dir is not None and not out.is_absolute():
        out = base_dir / out

    problem = _problem(_require(raw, "problem", "config"))
    mat_raw = _check_keys(_require(raw, "material", "config"), {"matrix", "void", "inclusion"}, "material")
    phases = {name: _material(v, f"material.{name}") for name, v in mat_raw.items()}
    if "matrix" not in phases:
        raise ConfigurationError("material.matrix is required")

    allocation = None
    ms_raw = raw.get("microstructure", "homogeneous")
    if ms_raw != "homogeneous":
        ms_raw = _check_keys(ms_raw, {"void_fraction", "inclusion_fraction", "r_void", "r_inclusion", "gamma",
                                      "max_attempts", "enlarge_voids"}, "microstructure")
        if problem.dimension != 2:
            raise ConfigurationError("a particle microstructure needs a 2-D problem")
        kw = dict(ms_raw)
        for key in ("r_void", "r_inclusion"):
            if key in kw:
                kw[key] = tuple(float(x) for x in kw[key])
        allocation = AllocationSpec(problem.box[0], problem.box[1], **kw)

    perturbation = None
    cells = None
    p_raw = raw.get("perturbation")
    if p_raw:
        _check_keys(p_raw, {"mode", "eta", "cells"}, "perturbation")
        eta = {k: float(v) for k, v in dict(p_raw.get("eta", {})).items()}
        matrix = phases["matrix"]
        baseline = {}
        for name in eta:
            if name == "E":
                baseline[name] = matrix.E
            elif name in ("K", "mu", "psi_c", "H", "sigma_Y"):
                baseline[name] = float(getattr(matrix, name))
            elif name == "G_c":
                if matrix.G_c is None:
                    raise ConfigurationError("perturbation of G_c needs material.matrix.G_c")
                baseline[name] = float(matrix.G_c)
            else:
                raise ConfigurationError(f"cannot perturb unknown parameter {name!r}")
        perturbation = PerturbedParameterSet(baseline, eta, p_raw.get("mode", "homogeneous"))
        if "cells" in p_raw:
            cells = tuple(int(c) for c in np.atleast_1d(p_raw["cells"]))
            if len(cells) != problem.dimension or min(cells) < 1:
                raise ConfigurationError("perturbation.cells must give a positive count per axis")

    s_raw = dict(_check_keys(raw.get("solver", {}), _SOLVER_KEYS, "solver"))
    s_raw.setdefault("reaction_tag", problem.reaction_tag)
    solver = SolverConfig(**s_raw)

    rm = RateMSpec(**_check_keys(raw.get("rate_M", {}), set(RateMSpec.__dataclass_fields__), "rate_M"))
    rm.levels = tuple(int(x) for x in rm.levels)
    rh = RateHSpec(**_check_keys(raw.get("rate_h", {}), set(RateHSpec.__dataclass_fields__), "rate_h"))
    rh.M_levels = tuple(int(x) for x in rh.M_levels)
    if study == "rate_h" and rh.levels < 2:
        raise ConfigurationError("rate_h needs at least two mesh levels")
    if study == "rate_M" and len(rm.levels) < 4:
        raise ConfigurationError("rate_M needs at least four sample levels")

    return CampaignConfig(study, samples, seed, out, threads, problem, phases, allocation, perturbation, cells, solver,
                          rm, rh, bool(raw.get("export_vtk", False)), raw)


def load_config(path) -> CampaignConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config is not valid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigurationError("config must be a mapping")
    return parse_config(raw, base_dir=None)


def with_overrides(cfg: CampaignConfig, samples=None, seed=None, out=None, threads=None) -> CampaignConfig:
    """Apply CLI overrides; the raw mapping (and hence the digest) is updated too."""
    raw = copy.deepcopy(cfg.raw)
    if samples is not None:
        raw["samples"] = int(samples)
    if seed is not None:
        raw["seed"] = int(seed)
    if out is not None:
        raw["output"] = str(out)
    new = parse_config(raw)
    # thread count never changes results, so it stays out of the digest
    new.threads = int(threads) if threads is not None else cfg.threads
    if new.threads < 1:
        raise ConfigurationError("threads must be >= 1")
    return new
