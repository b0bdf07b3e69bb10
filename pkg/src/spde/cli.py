"""Command-line front end: `spde <command> --config <path> [--seed <u64>] [--out <dir>]`.

Commands dispatch to the engine and diagnostic studies, write CSV/JSON (and,
for simulate, a binary snapshot) into the output directory, and finish with a
manifest listing every emitted file with its SHA-256 digest.  The process
exits 0 exactly when all pass flags are true.

Output directory precedence: --out, then $SPDE_OUT, then the config value.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import COMMANDS, ConfigError, RunConfig, parse_config_file, render
from .engine import simulate_path
from .snapshots import save_path, write_norms_csv
from .studies import (
    EstimateReport,
    assumption_audit,
    cauchy_convergence_study,
    energy_residual_study,
    equicontinuity_study,
    functional_tightness_study,
    hitting_probability_study,
    hv_bound_study,
    increment_tightness_study,
    moment_bound_study,
    strat_ito_check,
)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_report(report: EstimateReport, out: Path, name: str) -> list[Path]:
    csv_path = out / f"{name}.csv"
    with open(csv_path, "w", newline="") as fh:
        for row in report.csv_rows():
            fh.write(",".join(str(v) for v in row) + "\n")
    json_path = out / f"{name}.json"
    with open(json_path, "w") as fh:
        json.dump(report.summary(), fh, sort_keys=True, indent=1)
        fh.write("\n")
    return [csv_path, json_path]


def run(command: str, cfg: RunConfig, out_dir: str | None = None) -> dict:
    """Execute one command; returns the manifest dictionary."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; expected one of {COMMANDS}")
    out = Path(out_dir or os.environ.get("SPDE_OUT") or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    ecfg = cfg.ensemble()
    files: list[Path] = []
    passed = True

    if command == "simulate":
        level = max(cfg.levels)
        pair = cfg.model.pair(level)
        x0 = cfg.init.build(cfg.n_max)
        R = None if cfg.R_policy == "auto" else float(cfg.R_policy)
        rec = simulate_path(
            pair, x0, cfg.dt, cfg.T, M=cfg.M, seed=cfg.master_seed, scheme=cfg.scheme, R=R
        )
        snap = out / "path.spde"
        save_path(rec, snap)
        csv = out / "path_norms.csv"
        write_norms_csv(rec, csv)
        summary = {
            "study": "simulate",
            "level": level,
            "hit_time": rec.hit_time,
            "blown_up": rec.blown_up,
            "blowup_time": rec.blowup_time,
            "R": rec.R,
            "baseline": rec.baseline,
            "terminal_uh": float(rec.uh_series[-1]),
            "terminal_hv": float(rec.hv_series[-1]),
            "passed": not rec.blown_up,
        }
        jpath = out / "simulate.json"
        with open(jpath, "w") as fh:
            json.dump(summary, fh, sort_keys=True, indent=1)
            fh.write("\n")
        files += [snap, csv, jpath]
        passed = not rec.blown_up
    elif command == "assumptions":
        pair = cfg.model.pair(cfg.audit_level)
        report = assumption_audit(pair, n_samples=cfg.audit_samples, seed=cfg.master_seed)
        files += _write_report(report, out, "assumptions")
        passed = report.passed
    else:
        study = {
            "moments": lambda: moment_bound_study(ecfg),
            "hitting": lambda: hitting_probability_study(ecfg),
            "tightness": lambda: increment_tightness_study(ecfg),
            "tightness-functional": lambda: functional_tightness_study(ecfg),
            "cauchy": lambda: cauchy_convergence_study(ecfg),
            "equicontinuity": lambda: equicontinuity_study(ecfg),
            "hv-bounds": lambda: hv_bound_study(ecfg),
            "energy-check": lambda: energy_residual_study(ecfg, level=cfg.energy_level),
            "strat-ito-check": lambda: strat_ito_check(ecfg, level=min(cfg.levels)),
        }[command]
        report = study()
        files += _write_report(report, out, command)
        passed = report.passed

    manifest = {
        "command": command,
        "version": __version__,
        "config": render(cfg),
        "started": started,
        "finished": time.time(),
        "passed": bool(passed),
        "files": [{"name": f.name, "sha256": _sha256(f)} for f in sorted(files)],
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return manifest


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="spde",
        description="Spectral Galerkin simulator and verification harness for "
        "transport-noise stochastic fluid equations.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="path to the run configuration")
    parser.add_argument("--seed", type=int, default=None, help="override the master seed")
    parser.add_argument("--out", default=None, help="output directory (overrides $SPDE_OUT)")
    args = parser.parse_args(argv)
    try:
        cfg = parse_config_file(args.config)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    try:
        manifest = run(args.command, cfg, out_dir=args.out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    status = "pass" if manifest["passed"] else "FAIL"
    print(f"{args.command}: {status} ({len(manifest['files'])} files)")
    return 0 if manifest["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
