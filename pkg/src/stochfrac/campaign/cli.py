"""Command line entry point: ``stochfrac {run,rates,pack,validate-config}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..errors import ConfigurationError, NumericalError, PackingSaturated, StochFracError
from ..microstructure import achieved_fractions, save
from .config import load_config, with_overrides
from .runner import run_campaign, run_rate_study, sample_microstructure

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_SAMPLES_FAILED = 4


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int, **details):
        super().__init__(message)
        self.kind, self.code, self.details = kind, code, details


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stochfrac", description="Stochastic phase-field fracture campaigns.")
    sub = p.add_subparsers(dest="verb", required=True)
    helps = {
        "run": "run a single simulation or a Monte Carlo campaign",
        "rates": "run a sample-count or mesh-size convergence study",
        "pack": "generate the microstructure of one sample and write its particle file",
        "validate-config": "check a configuration file and print its digest",
    }
    for verb, text in helps.items():
        s = sub.add_parser(verb, help=text)
        s.add_argument("--config", required=True, type=Path)
        s.add_argument("--samples", type=_positive)
        s.add_argument("--seed", type=_u64)
        s.add_argument("--out", type=Path)
        s.add_argument("--threads", type=_positive)
        if verb == "pack":
            s.add_argument("--sample", type=int, default=0, help="sample index (stream id), default 0")
    return p


def _load(args):
    cfg = load_config(args.config)
    return with_overrides(cfg, args.samples, args.seed, args.out, args.threads)


def _cmd_run(args) -> dict:
    cfg = _load(args)
    if cfg.study not in ("single", "mc"):
        raise CliError("ConfigurationError", f"'run' needs study single or mc, got {cfg.study!r}", EXIT_CONFIG)
    res = run_campaign(cfg)
    info = {"status": "ok", "output": str(res.output), "samples": len(res.samples), "failed": len(res.failures)}
    if res.summary is None:
        raise CliError("SamplesFailed", "every sample failed", EXIT_SAMPLES_FAILED, failures=res.failures)
    return info


def _cmd_rates(args) -> dict:
    cfg = _load(args)
    if cfg.study not in ("rate_M", "rate_h"):
        raise CliError("ConfigurationError", f"'rates' needs study rate_M or rate_h, got {cfg.study!r}", EXIT_CONFIG)
    report = run_rate_study(cfg)
    slope = report["slope"] if cfg.study == "rate_M" else report["h"]["slope"]
    return {"status": "ok", "output": str(cfg.output), "study": cfg.study, "slope": slope}


def _cmd_pack(args) -> dict:
    cfg = _load(args)
    if cfg.allocation is None:
        raise CliError("ConfigurationError", "'pack' needs a microstructure allocation in the config", EXIT_CONFIG)
    ms = sample_microstructure(cfg, args.sample)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"microstructure_{args.sample:05d}.txt"
    save(ms, path)
    fv, fi = achieved_fractions(ms)
    return {"status": "ok", "output": str(path), "particles": len(ms), "void_fraction": fv, "inclusion_fraction": fi}


def _cmd_validate(args) -> dict:
    cfg = _load(args)
    return {"status": "ok", "study": cfg.study, "samples": cfg.samples, "seed": cfg.seed,
            "config_sha256": cfg.digest()}


_COMMANDS = {"run": _cmd_run, "rates": _cmd_rates, "pack": _cmd_pack, "validate-config": _cmd_validate}


def _error_record(kind: str, message: str, code: int, **details) -> str:
    rec = {"status": "error", "error": kind, "message": message, "exit_code": code}
    rec.update(details)
    return json.dumps(rec, sort_keys=True, default=str)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse already printed usage; add the machine-readable record
        if exc.code:
            print(_error_record("UsageError", "invalid command line", EXIT_CONFIG), file=sys.stderr)
            return EXIT_CONFIG
        return EXIT_OK
    try:
        info = _COMMANDS[args.verb](args)
    except CliError as exc:
        print(_error_record(exc.kind, str(exc), exc.code, **exc.details), file=sys.stderr)
        return exc.code
    except (ConfigurationError, PackingSaturated) as exc:
        print(_error_record(type(exc).__name__, str(exc), EXIT_CONFIG), file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(_error_record(type(exc).__name__, str(exc), EXIT_NUMERICAL, **exc.diagnostics), file=sys.stderr)
        return EXIT_NUMERICAL
    except StochFracError as exc:
        print(_error_record(type(exc).__name__, str(exc), EXIT_CONFIG), file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(_error_record(type(exc).__name__, str(exc), EXIT_INTERNAL), file=sys.stderr)
        return EXIT_INTERNAL
    print(json.dumps(info, sort_keys=True, default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
