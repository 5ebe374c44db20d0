import copy
import csv
import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from stochfrac.campaign import cli, load_config, parse_config, run_campaign, run_rate_study, run_samples, with_overrides
from stochfrac.campaign import runner
from stochfrac.errors import ConfigurationError, NumericalError
from stochfrac.microstructure import load, pair_violations

ROOT = Path(__file__).resolve().parents[1]

BAR = {
    "schema_version": 1,
    "study": "mc",
    "samples": 6,
    "seed": 5,
    "threads": 1,
    "problem": {
        "dimension": 1,
        "box": [[0.0], [1.0]],
        "divisions": [20],
        "dirichlet": [{"tag": "left", "value": 0.0, "scaled": False}, {"tag": "right", "value": 1.0}],
        "schedule": {"start": 1e-3, "stop": 0.04, "steps": 40},
    },
    "material": {"matrix": {"E": 1.0, "nu": 0.0, "l_f": 0.05, "psi_c": 5e-5, "at_model": "AT1"}},
    "perturbation": {"mode": "heterogeneous", "eta": {"psi_c": 2e-5}, "cells": [10]},
}

RVE = {
    "schema_version": 1,
    "study": "mc",
    "samples": 2,
    "seed": 3,
    "export_vtk": True,
    "problem": {
        "dimension": 2,
        "box": [[0.0, 0.0], [1.0, 1.0]],
        "divisions": [6, 6],
        "dirichlet": [{"tag": "left", "component": 0, "value": 0.0, "scaled": False},
                      {"tag": "bottom", "component": 1, "value": 0.0, "scaled": False},
                      {"tag": "right", "component": 0, "value": 1.0}],
        "schedule": [2e-3, 4e-3],
    },
    "material": {"matrix": {"E": 1.0, "nu": 0.2, "l_f": 0.2, "psi_c": 1e-4},
                 "inclusion": {"E": 3.0, "nu": 0.2, "l_f": 0.2, "psi_c": 1e-3}},
    "microstructure": {"void_fraction": 0.03, "inclusion_fraction": 0.03, "r_void": [0.04, 0.06],
                       "r_inclusion": [0.04, 0.06], "gamma": 0.1},
}


def make(raw=BAR, out=None, **top):
    raw = copy.deepcopy(raw)
    raw.update(top)
    if out is not None:
        raw["output"] = str(out)
    return parse_config(raw)


def write_yaml(tmp_path, raw, name="c.yaml", **top):
    raw = copy.deepcopy(raw)
    raw.update(top)
    raw.setdefault("output", str(tmp_path / "out"))
    path = tmp_path / name
    path.write_text(yaml.safe_dump(raw))
    return path


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


# ---- configuration ---------------------------------------------------------------------


def _broken(path, value):
    raw = copy.deepcopy(BAR)
    node = raw
    for key in path[:-1]:
        node = node[key]
    if value is KeyError:
        del node[path[-1]]
    else:
        node[path[-1]] = value
    return raw


@pytest.mark.parametrize("path,value", [
    (("schema_version",), 2),
    (("study",), "nope"),
    (("samples",), 0),
    (("seed",), -1),
    (("threads",), 0),
    (("bogus",), 1),
    (("problem",), KeyError),
    (("problem", "dimension"), 3),
    (("problem", "divisions"), [0]),
    (("problem", "schedule"), [0.2, 0.1]),
    (("problem", "dirichlet"), [{"component": 0}]),
    (("material", "matrix", "K"), 1.0),
    (("material", "matrix", "psi_c"), -1.0),
    (("material", "steel"), {"E": 1.0}),
    (("perturbation", "cells"), [10, 10]),
    (("perturbation", "eta"), {"l_f": 0.1}),
    (("perturbation", "mode"), "sideways"),
    (("solver",), {"regime": "E-Q"}),
    (("microstructure",), {"void_fraction": 0.1}),
])
def test_invalid_configs_are_rejected(path, value):
    with pytest.raises(ConfigurationError):
        parse_config(_broken(path, value))


def test_rate_study_level_checks():
    with pytest.raises(ConfigurationError):
        make(study="rate_h", rate_h={"levels": 1})
    with pytest.raises(ConfigurationError):
        make(study="rate_M", rate_M={"levels": [16, 64]})


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("a: [1, 2\n")
    with pytest.raises(ConfigurationError):
        load_config(bad)
    bad.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigurationError):
        load_config(bad)


def test_digest_ignores_threads_and_output():
    cfg = make(out="a")
    assert with_overrides(cfg, threads=4, out="b").digest() == cfg.digest()
    assert with_overrides(cfg, seed=6).digest() != cfg.digest()
    assert with_overrides(cfg, samples=7).samples == 7
    with pytest.raises(ConfigurationError):
        with_overrides(cfg, threads=0)


def test_shipped_configs_are_valid():
    for path in sorted((ROOT / "configs").glob("*.yaml")):
        load_config(path)


# ---- Monte Carlo campaigns ---------------------------------------------------------------


def test_campaign_outputs(tmp_path):
    cfg = make(out=tmp_path)
    res = run_campaign(cfg)
    assert res.summary.samples == 6 and not res.failures
    header, rows = read_csv(tmp_path / "summary.csv")
    assert header == ["step", "time", "mean", "variance", "ci_lo", "ci_hi"]
    assert len(rows) == 40
    mean = np.array([float(r[2]) for r in rows])
    # 17 significant digits round-trip exactly
    assert np.array_equal(mean, res.summary.mean.values)
    assert all(len(r[2].replace("-", "").replace(".", "").split("e")[0].lstrip("0")) <= 17 for r in rows)
    peaks = [float(max(read_csv(tmp_path / "samples" / f"sample_{i:05d}.csv")[1], key=lambda r: float(r[3]))[3])
             for i in range(6)]
    assert np.allclose(peaks, res.peaks, rtol=0, atol=0)
    assert np.var(peaks) > 0
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["succeeded"] == 6 and m["failed"] == 0 and m["stream_ids"] == list(range(6))
    assert m["config_sha256"] == cfg.digest()


def test_summary_matches_direct_estimators(tmp_path):
    res = run_campaign(make(out=tmp_path), write=False)
    F = np.zeros((6, 40))
    for i, s in enumerate(res.samples):
        F[i, : s.forces.size] = s.forces
    assert np.allclose(res.summary.mean.values, F.mean(axis=0), rtol=1e-14, atol=1e-18)
    assert np.allclose(res.summary.variance.values, F.var(axis=0), rtol=1e-12, atol=1e-20)


def test_single_sample_campaign(tmp_path):
    res = run_campaign(make(out=tmp_path, samples=1))
    assert res.summary.samples == 1
    assert np.all(res.summary.variance.values == 0.0)
    lo, hi = res.summary.ci95
    assert np.array_equal(lo.values, hi.values)


def test_zero_perturbation_has_zero_variance(tmp_path):
    raw = copy.deepcopy(BAR)
    raw["perturbation"]["eta"] = {"psi_c": 0.0}
    res = run_campaign(make(raw, out=tmp_path, samples=3))
    assert np.all(res.summary.variance.values == 0.0)


def test_thread_count_does_not_change_results(tmp_path):
    texts = []
    for threads in (1, 3):
        cfg = with_overrides(make(), out=tmp_path / f"t{threads}", threads=threads)
        run_campaign(cfg)
        texts.append((tmp_path / f"t{threads}" / "summary.csv").read_bytes())
    assert texts[0] == texts[1]


def test_failed_samples_are_recorded(tmp_path, monkeypatch):
    real = runner.build_sample_problem

    def flaky(cfg, index):
        if index == 2:
            raise NumericalError("synthetic failure", step=4)
        return real(cfg, index)

    monkeypatch.setattr(runner, "build_sample_problem", flaky)
    res = run_campaign(make(out=tmp_path, samples=4))
    assert res.summary.samples == 3
    (fail,) = res.failures
    assert fail["index"] == 2 and fail["type"] == "NumericalError" and fail["step"] == 4 and fail["seed"] == 5
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["failed"] == 1 and m["failures"][0]["stream_id"] == 2
    assert not (tmp_path / "samples" / "sample_00002.csv").exists()


def test_run_samples_rejects_empty():
    with pytest.raises(Exception):
        run_samples(make(), 0)


def test_rve_campaign_exports_fields(tmp_path):
    res = run_campaign(make(RVE, out=tmp_path))
    assert not res.failures
    for i in range(2):
        text = (tmp_path / "fields" / f"sample_{i:05d}.vtk").read_text()
        assert text.startswith("# vtk DataFile") and "POINT_DATA 49" in text
    ms0 = runner.sample_microstructure(make(RVE), 0)
    ms1 = runner.sample_microstructure(make(RVE), 1)
    assert not np.array_equal(ms0.centers, ms1.centers)
    assert not pair_violations(ms0)


# ---- rate studies ---------------------------------------------------------------------


def test_rate_h_study(tmp_path):
    cfg = load_config(ROOT / "configs" / "rate_h.yaml")
    cfg = with_overrides(cfg, out=tmp_path)
    rep = run_rate_study(cfg)
    assert 1.7 <= rep["h"]["slope"] <= 2.3
    assert -0.65 <= rep["M"]["slope"] <= -0.35
    header, rows = read_csv(tmp_path / "rate_h.csv")
    assert header == ["h", "error"] and len(rows) == 4
    assert json.loads((tmp_path / "rates.json").read_text())["study"] == "rate_h"


def test_rate_M_study_small(tmp_path):
    cfg = make(out=tmp_path, study="rate_M", rate_M={"levels": [2, 4, 8, 16], "replicates": 8, "pool": 12})
    rep = run_rate_study(cfg)
    assert rep["pool_used"] == 12 and len(rep["errors"]) == 4
    header, rows = read_csv(tmp_path / "pool.csv")
    assert header == ["sample", "peak"] and len(rows) == 12
    assert (tmp_path / "rate_M.csv").exists()
    with pytest.raises(Exception):
        run_rate_study(make(out=tmp_path))


# ---- command line ----------------------------------------------------------------------


def _err(capsys):
    rec = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert rec["status"] == "error"
    return rec


def test_cli_validate_config(tmp_path, capsys):
    path = write_yaml(tmp_path, BAR)
    assert cli.main(["validate-config", "--config", str(path)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["status"] == "ok" and info["config_sha256"] == load_config(path).digest()


def test_cli_run_and_overrides(tmp_path, capsys):
    path = write_yaml(tmp_path, BAR)
    out = tmp_path / "cli"
    code = cli.main(["run", "--config", str(path), "--samples", "2", "--seed", "9", "--out", str(out),
                     "--threads", "2"])
    assert code == 0
    info = json.loads(capsys.readouterr().out)
    assert info["samples"] == 2 and info["failed"] == 0
    m = json.loads((out / "manifest.json").read_text())
    assert m["seed"] == 9 and m["samples"] == 2


def test_cli_rates(tmp_path, capsys):
    raw = copy.deepcopy(BAR)
    raw.update(study="rate_M", rate_M={"levels": [2, 4, 8, 16], "replicates": 4, "pool": 6})
    path = write_yaml(tmp_path, raw)
    assert cli.main(["rates", "--config", str(path)]) == 0
    assert "slope" in json.loads(capsys.readouterr().out)
    assert cli.main(["run", "--config", str(path)]) == cli.EXIT_CONFIG
    assert _err(capsys)["error"] == "ConfigurationError"
    assert cli.main(["rates", "--config", str(write_yaml(tmp_path, BAR, "mc.yaml"))]) == cli.EXIT_CONFIG
    _err(capsys)


def test_cli_pack(tmp_path, capsys):
    path = write_yaml(tmp_path, RVE)
    assert cli.main(["pack", "--config", str(path), "--sample", "1"]) == 0
    info = json.loads(capsys.readouterr().out)
    ms = load(info["output"])
    ref = runner.sample_microstructure(load_config(path), 1)
    assert np.allclose(ms.centers, ref.centers, rtol=0, atol=1e-12)
    assert ms.seed == 3 and ms.stream_id == 1
    assert cli.main(["pack", "--config", str(write_yaml(tmp_path, BAR, "bar.yaml"))]) == cli.EXIT_CONFIG
    _err(capsys)


def test_cli_error_records(tmp_path, capsys):
    assert cli.main(["run", "--config", str(tmp_path / "none.yaml")]) == cli.EXIT_CONFIG
    rec = _err(capsys)
    assert rec["error"] == "ConfigurationError" and rec["exit_code"] == 2
    assert cli.main(["run"]) == cli.EXIT_CONFIG
    assert _err(capsys)["error"] == "UsageError"
    path = write_yaml(tmp_path, BAR)
    assert cli.main(["run", "--config", str(path), "--seed", "-3"]) == cli.EXIT_CONFIG
    _err(capsys)
    assert cli.main(["frobnicate", "--config", str(path)]) == cli.EXIT_CONFIG
    _err(capsys)


def test_cli_numerical_failure(tmp_path, capsys):
    raw = copy.deepcopy(BAR)
    raw["solver"] = {"max_stag": 1}
    path = write_yaml(tmp_path, raw, samples=2)
    assert cli.main(["run", "--config", str(path)]) == cli.EXIT_SAMPLES_FAILED
    rec = _err(capsys)
    assert rec["error"] == "SamplesFailed" and len(rec["failures"]) == 2
    assert rec["failures"][0]["type"] == "NonConvergenceError"
    assert json.loads((tmp_path / "out" / "manifest.json").read_text())["failed"] == 2


def test_console_script_entry_point(tmp_path):
    import subprocess
    import sys

    path = write_yaml(tmp_path, BAR)
    proc = subprocess.run([sys.executable, "-m", "stochfrac.campaign.cli", "validate-config", "--config", str(path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["status"] == "ok"
    proc = subprocess.run([sys.executable, "-m", "stochfrac.campaign.cli", "run", "--config", "/nonexistent"],
                          capture_output=True, text=True)
    assert proc.returncode == 2 and json.loads(proc.stderr.splitlines()[-1])["status"] == "error"
