"""Per-sample simulations, Monte Carlo aggregation and rate studies."""

from __future__ import annotations

import csv
import json
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..errors import ArgumentError, StochFracError
from ..fem import Dirichlet, Neumann, assign_materials, build_structured_mesh, make_problem
from ..fem.vtk import write_vtk
from ..microstructure import Microstructure, allocate
from ..solver import run_simulation
from ..stochastic import (
    McAccumulator,
    McSummary,
    RandomStream,
    mc_rate_study,
    realize_parameters,
    rms_replicate_errors,
    total_error_decomposition,
)
from ..verification import ManufacturedBar, mesh_levels, sampling_rms
from .config import CampaignConfig

PACKING_STREAM = 0
PARAMETER_STREAM = 1
BOOTSTRAP_STREAM = 2


def fmt(x) -> str:
    """Round-trip text form of a float: 17 significant digits."""
    return format(float(x), ".17g")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, (int, np.integer, str)) else fmt(v) for v in row])


@dataclass
class SampleResult:
    index: int
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    displacements: np.ndarray = field(default_factory=lambda: np.zeros(0))
    forces: np.ndarray = field(default_factory=lambda: np.zeros(0))
    stopped_early: bool = False
    error: dict | None = None
    fields: dict | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def peak(self) -> float:
        return float(self.forces.max()) if self.forces.size else float("nan")


@dataclass
class CampaignResult:
    summary: McSummary | None
    samples: list[SampleResult]
    failures: list[dict]
    output: Path | None = None

    @property
    def peaks(self) -> np.ndarray:
        return np.array([s.peak for s in self.samples if s.ok])


def sample_microstructure(cfg: CampaignConfig, index: int) -> Microstructure | None:
    if cfg.allocation is None:
        return None
    ms = allocate(cfg.allocation, RandomStream(cfg.seed, index).child(PACKING_STREAM))
    ms.seed, ms.stream_id = cfg.seed, index
    return ms


def build_sample_problem(cfg: CampaignConfig, index: int):
    """Problem of sample ``index``: its microstructure and parameter draw use stream ``index``."""
    ps = cfg.problem
    mesh = build_structured_mesh(ps.dimension, ps.box, ps.divisions)
    dirichlet = [Dirichlet(b["tag"], int(b.get("component", 0)), float(b.get("value", 0.0)),
                           bool(b.get("scaled", True))) for b in ps.dirichlet]
    neumann = [Neumann(b["tag"], int(b.get("component", 0)), float(b.get("value", 0.0)),
                       bool(b.get("scaled", True))) for b in ps.neumann]
    problem = make_problem(mesh, cfg.phases["matrix"], dirichlet, ps.schedule, neumann,
                           d_fixed_tags=ps.d_fixed, alpha_fixed_tags=ps.alpha_fixed)
    ms = sample_microstructure(cfg, index)
    realized = None
    if cfg.perturbation is not None:
        units = mesh.n_elements if cfg.cells is None else int(np.prod(cfg.cells))
        realized = realize_parameters(cfg.perturbation, RandomStream(cfg.seed, index).child(PARAMETER_STREAM), units)
    assign_materials(problem, ms, cfg.phases, realized, cfg.perturbation.baseline if realized else None, cfg.cells)
    return problem, ms, realized


def run_sample(cfg: CampaignConfig, index: int, keep_fields: bool = False) -> SampleResult:
    try:
        problem, _, _ = build_sample_problem(cfg, index)
        sim = run_simulation(problem, cfg.solver)
    except (StochFracError, ArithmeticError, np.linalg.LinAlgError) as exc:
        diag = getattr(exc, "diagnostics", {})
        return SampleResult(index, error={"index": index, "seed": cfg.seed, "stream_id": index,
                                          "type": type(exc).__name__, "reason": str(exc),
                                          "step": diag.get("step")})
    except Exception as exc:  # noqa: BLE001 - recorded in the manifest, never dropped silently
        return SampleResult(index, error={"index": index, "seed": cfg.seed, "stream_id": index,
                                          "type": type(exc).__name__, "reason": str(exc),
                                          "traceback": traceback.format_exc(limit=3)})
    st = problem.state
    fields = {"u": st.u.copy(), "d": st.d.copy(), "alpha": st.alpha.copy()} if keep_fields else None
    return SampleResult(index, sim.curve.times, sim.displacements, sim.forces, sim.stopped_early, None, fields)


def _run_batch(args) -> list[SampleResult]:
    cfg, indices, keep = args
    return [run_sample(cfg, i, keep) for i in indices]


def run_samples(cfg: CampaignConfig, n: int, threads: int | None = None, keep_fields: bool = False) -> list[SampleResult]:
    """Run samples ``0 .. n-1``; results come back in index order whatever the worker count."""
    threads = cfg.threads if threads is None else threads
    if n < 1:
        raise ArgumentError("need at least one sample")
    if threads <= 1 or n == 1:
        return [run_sample(cfg, i, keep_fields) for i in range(n)]
    # interleaved batches keep workers balanced when late samples are slower
    batches = [(cfg, list(range(k, n, threads)), keep_fields) for k in range(threads)]
    out: list[SampleResult] = []
    with ProcessPoolExecutor(max_workers=threads) as pool:
        for part in pool.map(_run_batch, batches):
            out.extend(part)
    return sorted(out, key=lambda r: r.index)


def summarize(times, results: list[SampleResult]) -> McSummary | None:
    acc = McAccumulator(times)
    for r in results:
        if r.ok:
            acc.add(r.index, r.forces)
    return acc.summary() if len(acc) else None


def _manifest(cfg: CampaignConfig, results: list[SampleResult], extra: dict | None = None) -> dict:
    failures = [r.error for r in results if not r.ok]
    m = {
        "stochfrac_version": __version__,
        "study": cfg.study,
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "samples": len(results),
        "succeeded": len(results) - len(failures),
        "failed": len(failures),
        "stream_ids": [r.index for r in results],
        "failures": failures,
    }
    if extra:
        m.update(extra)
    return m


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def run_campaign(cfg: CampaignConfig, write: bool = True) -> CampaignResult:
    """Monte Carlo campaign over ``cfg.samples`` samples (``single`` runs sample 0 only)."""
    n = 1 if cfg.study == "single" else cfg.samples
    results = run_samples(cfg, n, keep_fields=cfg.export_vtk)
    times = cfg.problem.schedule
    summary = summarize(times, results)
    failures = [r.error for r in results if not r.ok]
    out = None
    if write:
        out = Path(cfg.output)
        (out / "samples").mkdir(parents=True, exist_ok=True)
        for r in results:
            if r.ok:
                rows = [(k + 1, t, u, f) for k, (t, u, f) in enumerate(zip(r.times, r.displacements, r.forces))]
                write_csv(out / "samples" / f"sample_{r.index:05d}.csv", ("step", "time", "displacement", "force"),
                          rows)
                if cfg.export_vtk and r.fields is not None:
                    (out / "fields").mkdir(exist_ok=True)
                    mesh = build_structured_mesh(cfg.problem.dimension, cfg.problem.box, cfg.problem.divisions)
                    write_vtk(out / "fields" / f"sample_{r.index:05d}.vtk", mesh, r.fields["u"], r.fields["d"],
                              r.fields["alpha"], title=f"sample {r.index} final state")
        if summary is not None:
            lo, hi = summary.ci95
            rows = [(k + 1, t, m, v, a, b) for k, (t, m, v, a, b) in enumerate(
                zip(times, summary.mean.values, summary.variance.values, lo.values, hi.values))]
            write_csv(out / "summary.csv", ("step", "time", "mean", "variance", "ci_lo", "ci_hi"), rows)
        _write_json(out / "manifest.json", _manifest(cfg, results))
    return CampaignResult(summary, results, failures, out)


# --------------------------------------------------------------------------
# rate studies
# --------------------------------------------------------------------------


def run_rate_study(cfg: CampaignConfig, write: bool = True) -> dict:
    """Sample-count (``rate_M``) or mesh-size (``rate_h``) convergence study."""
    if cfg.study == "rate_M":
        report, results = _rate_M(cfg)
    elif cfg.study == "rate_h":
        report, results = _rate_h(cfg), []
    else:
        raise ArgumentError(f"study {cfg.study!r} is not a rate study")
    if write:
        out = Path(cfg.output)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "rates.json", report)
        if cfg.study == "rate_M":
            write_csv(out / "rate_M.csv", ("M", "rms_error"), zip(report["levels"], report["errors"]))
            write_csv(out / "pool.csv", ("sample", "peak"), [(r.index, r.peak) for r in results if r.ok])
            _write_json(out / "manifest.json", _manifest(cfg, results, {"pool": cfg.rate_M.pool}))
        else:
            write_csv(out / "rate_h.csv", ("h", "error"), zip(report["h"]["levels"], report["h"]["errors"]))
            write_csv(out / "rate_h_M.csv", ("M", "rms_error"), zip(report["M"]["levels"], report["M"]["errors"]))
            _write_json(out / "manifest.json", _manifest(cfg, [], {"study": "rate_h"}))
    return report


def _rate_M(cfg: CampaignConfig):
    spec = cfg.rate_M
    results = run_samples(cfg, spec.pool)
    peaks = np.array([r.peak for r in results if r.ok])
    rng = RandomStream(cfg.seed, 0).child(BOOTSTRAP_STREAM)
    reference, errs = rms_replicate_errors(peaks, spec.levels, spec.replicates, rng)
    fit = mc_rate_study(errs)
    report = {
        "study": "rate_M",
        "qoi": "peak reaction force",
        "slope": fit.slope,
        "intercept": fit.intercept,
        "levels": list(fit.levels),
        "errors": list(fit.errors),
        "degenerate": fit.degenerate,
        "reference": reference,
        "pool": int(spec.pool),
        "pool_used": int(peaks.size),
        "replicates": int(spec.replicates),
        "failed": int(spec.pool - peaks.size),
    }
    return report, results


def _rate_h(cfg: CampaignConfig) -> dict:
    spec = cfg.rate_h
    bar = ManufacturedBar(spec.E_b, spec.eta)
    levels = mesh_levels(spec.coarsest, spec.levels)
    moduli = bar.moduli(spec.samples, cfg.seed)
    errors_h = [(1.0 / n, bar.mean_error(n, moduli)) for n in levels]
    errors_M = sampling_rms(bar, spec.M_levels, spec.replicates, cfg.seed)
    fit_h, fit_M = total_error_decomposition(errors_h, errors_M)
    return {
        "study": "rate_h",
        "h": {"slope": fit_h.slope, "intercept": fit_h.intercept, "levels": list(fit_h.levels),
              "errors": list(fit_h.errors)},
        "M": {"slope": fit_M.slope, "intercept": fit_M.intercept, "levels": list(fit_M.levels),
              "errors": list(fit_M.errors)},
        "samples": spec.samples,
    }
