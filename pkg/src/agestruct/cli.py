"""Command-line front end.

Every subcommand reads one JSON config, writes its outputs under a single
directory, and registers each written file in ``manifest.json`` there.
Data files (CSV) are deterministic byte-for-byte for a given config; wall
clock timings live only in the manifest and run summary.

Exit codes: 0 success; 1 validation threshold failure; 2 config parse or
schema error; 3 config invariant violation; 4 runtime solver error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, reconstruct, stability, steady
from .config import RunConfig, load_config
from .csvio import (
    density_filename,
    write_density_csv,
    write_oracle_csv,
    write_sweep_csv,
    write_trajectory_csv,
)
from .errors import AgestructError, ConfigSchemaError, ParameterError
from .model import density_moments
from .oracle import cross_validate
from .reduction import Trajectory, integrate

MANIFEST_NAME = "manifest.json"
SUMMARY_NAME = "run_summary.json"


def _outdir(args, cfg: RunConfig) -> Path:
    if args.out:
        chosen = args.out
    elif os.environ.get("AGESTRUCT_OUTDIR"):
        chosen = os.environ["AGESTRUCT_OUTDIR"]
    elif cfg.output_dir:
        chosen = cfg.output_dir
    else:
        chosen = "out"
    path = Path(chosen)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_manifest(outdir: Path) -> dict:
    path = outdir / MANIFEST_NAME
    if path.exists():
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
            if isinstance(doc, dict) and isinstance(doc.get("files"), list):
                doc.setdefault("timings", {})
                return doc
        except json.JSONDecodeError:
            pass
    return {"files": [], "timings": {}}


def _register(outdir: Path, command: str, files, elapsed: float) -> None:
    manifest = _load_manifest(outdir)
    for name in files:
        if name not in manifest["files"]:
            manifest["files"].append(name)
    manifest["timings"][command] = elapsed
    _write_json(outdir / MANIFEST_NAME, manifest)


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _json_complex_list(values) -> list:
    return [[float(z.real), float(z.imag)] for z in values]


def _stability_doc(report: stability.StabilityReport) -> dict:
    return {
        "verdict": report.verdict,
        "spectral_abscissa": report.spectral_abscissa,
        "trace": report.trace,
        "eigenvalues": _json_complex_list(report.eigenvalues),
        "jacobian": [[float(v) for v in row] for row in report.jacobian],
    }


def _equilibrium_doc(cfg: RunConfig) -> dict:
    eq = steady.equilibrium(cfg.params, cfg.feedback)
    doc = {
        "r0": cfg.params.r0,
        "exists": eq.exists,
        "p_star": eq.p_star,
        "moments": list(eq.moments_star),
        "birth_rate": eq.birth_rate_star,
        "residual": eq.residual_inf_norm,
    }
    report = stability.classify(eq, cfg.params, cfg.feedback)
    doc["stability"] = _stability_doc(report)
    doc["verdict"] = report.verdict
    doc["trivial"] = _stability_doc(stability.classify_trivial(cfg.params, cfg.feedback))
    return doc


def _require_initial(cfg: RunConfig):
    if cfg.initial is None:
        raise ConfigSchemaError("initial_density: required for this subcommand")
    return cfg.initial


def _run_trajectory(cfg: RunConfig) -> Trajectory:
    p0 = _require_initial(cfg)
    start = density_moments(p0, cfg.params.rho, cfg.params.n)
    it = cfg.integrator
    return integrate(
        start,
        cfg.params,
        cfg.feedback,
        t_end=it.t_end,
        method=it.method,
        h=it.h,
        rtol=it.rtol,
        atol=it.atol,
        max_step=it.max_step,
        n_samples=it.samples,
    )


def _cmd_steady(args, cfg: RunConfig, outdir: Path) -> int:
    started = time.perf_counter()
    doc = _equilibrium_doc(cfg)
    _write_json(outdir / "steady.json", doc)
    _register(outdir, "steady", ["steady.json"], time.perf_counter() - started)
    if doc["exists"]:
        print(f"nontrivial equilibrium: p_star = {doc['p_star']!r}, birth rate {doc['birth_rate']!r}")
    else:
        print("no nontrivial equilibrium (net reproduction at zero size <= 1)")
    print(f"stability: {doc['verdict']} (spectral abscissa {doc['stability']['spectral_abscissa']!r})")
    return 0


def _cmd_simulate(args, cfg: RunConfig, outdir: Path) -> int:
    started = time.perf_counter()
    traj = _run_trajectory(cfg)
    write_trajectory_csv(outdir / "trajectory.csv", traj)
    _register(outdir, "simulate", ["trajectory.csv"], time.perf_counter() - started)
    print(
        f"integrated to t = {traj.t_end!r} ({traj.times.size} samples, "
        f"final p = {float(traj.states[-1, 0])!r})"
    )
    return 0


def _cmd_reconstruct(args, cfg: RunConfig, outdir: Path) -> int:
    started = time.perf_counter()
    p0 = _require_initial(cfg)
    traj = _run_trajectory(cfg)
    settings = cfg.reconstruction
    if settings.age_max is not None:
        n_steps = int(np.ceil(settings.age_max / settings.age_step - 1e-9))
        grid = np.linspace(0.0, n_steps * settings.age_step, n_steps + 1)
    else:
        grid = reconstruct.default_age_grid(traj, p0, settings.age_step)
    files = []
    checks = []
    for t in settings.times:
        field = reconstruct.reconstruct_density(traj, p0, cfg.params, cfg.feedback, t, grid)
        name = density_filename(t)
        write_density_csv(outdir / name, field)
        files.append(name)
        report = reconstruct.consistency_check(field, traj, p0)
        checks.append(
            {
                "t": float(t),
                "relative_mass_error": report.relative_mass_error,
                "grid_mass": report.grid_mass,
                "tail_mass": report.tail_mass,
                "reference_mass": report.reference_mass,
                "characteristic_jump": reconstruct.characteristic_jump(traj, p0, t),
            }
        )
    _write_json(outdir / "consistency.json", {"checks": checks})
    files.append("consistency.json")
    _register(outdir, "reconstruct", files, time.perf_counter() - started)
    worst = max(c["relative_mass_error"] for c in checks)
    print(f"reconstructed {len(settings.times)} profile(s); worst relative mass error {worst:.3e}")
    return 0


def _cmd_sweep(args, cfg: RunConfig, outdir: Path) -> int:
    started = time.perf_counter()
    if cfg.sweep_r0 is None:
        raise ConfigSchemaError("sweep: required section with explicit r0_values")
    points = steady.bifurcation_sweep(cfg.params, cfg.feedback, cfg.sweep_r0)
    write_sweep_csv(outdir / "sweep.csv", points)
    _register(outdir, "sweep", ["sweep.csv"], time.perf_counter() - started)
    existing = sum(1 for pt in points if pt.exists)
    print(f"swept {len(points)} r0 values; {existing} carry a nontrivial equilibrium")
    return 0


def _cmd_validate(args, cfg: RunConfig, outdir: Path) -> int:
    started = time.perf_counter()
    p0 = _require_initial(cfg)
    settings = cfg.oracle
    with open(outdir / "oracle_log.txt", "w", encoding="utf-8", newline="\n") as log:
        report = cross_validate(
            cfg.params,
            cfg.feedback,
            p0,
            t_end=settings.t_end,
            dt=settings.dt,
            tol=settings.tol,
            k_max=settings.k_max,
            log=log,
        )
    write_oracle_csv(outdir / "oracle.csv", report.oracle)
    passed = report.max_gap <= settings.gap_threshold
    doc = {
        "p_gap": report.p_gap,
        "b_gap": report.b_gap,
        "gap_threshold": settings.gap_threshold,
        "passed": passed,
        "iterations": report.oracle.iterations,
        "final_update": report.oracle.final_update,
        "t_end": settings.t_end,
        "dt": settings.dt,
    }
    _write_json(outdir / "validate.json", doc)
    _register(
        outdir,
        "validate",
        ["oracle.csv", "oracle_log.txt", "validate.json"],
        time.perf_counter() - started,
    )
    status = "PASS" if passed else "FAIL"
    print(
        f"{status}: sup-norm gaps p = {report.p_gap:.3e}, b = {report.b_gap:.3e} "
        f"(threshold {settings.gap_threshold:.3e})"
    )
    return 0 if passed else 1


def _cmd_report(args, cfg: RunConfig, outdir: Path) -> int:
    started = time.perf_counter()
    manifest = _load_manifest(outdir)
    missing = [name for name in manifest["files"] if not (outdir / name).exists()]
    if missing:
        raise AgestructError(f"manifest entries missing on disk: {', '.join(sorted(missing))}")
    metrics = {}
    for name, key in (("validate.json", "validation"), ("consistency.json", "consistency")):
        path = outdir / name
        if path.exists():
            metrics[key] = json.loads(path.read_text(encoding="utf-8"))
    summary = {
        "config": cfg.resolved,
        "equilibrium": _equilibrium_doc(cfg),
        "metrics": metrics,
        "manifest": sorted(manifest["files"]),
        "timings": dict(manifest["timings"], report=time.perf_counter() - started),
    }
    _write_json(outdir / SUMMARY_NAME, summary)
    _register(outdir, "report", [SUMMARY_NAME], time.perf_counter() - started)
    print(f"wrote {SUMMARY_NAME} covering {len(manifest['files'])} output file(s)")
    return 0


_COMMANDS = {
    "steady": _cmd_steady,
    "simulate": _cmd_simulate,
    "reconstruct": _cmd_reconstruct,
    "sweep": _cmd_sweep,
    "validate": _cmd_validate,
    "report": _cmd_report,
}

_HELP = {
    "steady": "solve for the equilibrium and classify its stability",
    "simulate": "integrate the reduced moment system and write trajectory.csv",
    "reconstruct": "rebuild age profiles from a simulation and check mass balance",
    "sweep": "tabulate the equilibrium branch over a grid of r0 values",
    "validate": "cross-check the ODE reduction against the integral-equation solver",
    "report": "aggregate prior outputs into run_summary.json",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="agestruct",
        description="Age-structured population model: equilibria, dynamics, and validation.",
    )
    parser.add_argument("--version", action="version", version=f"agestruct {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, blurb in _HELP.items():
        cmd = sub.add_parser(name, help=blurb)
        cmd.add_argument("--config", required=True, help="path to the JSON run configuration")
        cmd.add_argument("--out", help="output directory (overrides AGESTRUCT_OUTDIR and config)")
    return parser


def run(argv=None) -> int:
    """Entry point; returns the process exit code."""
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigSchemaError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ParameterError as exc:
        print(f"invalid configuration value: {exc}", file=sys.stderr)
        return 3
    try:
        outdir = _outdir(args, cfg)
        return _COMMANDS[args.command](args, cfg, outdir)
    except ConfigSchemaError as exc:
        # a section required by this subcommand is absent
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except AgestructError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(run())
