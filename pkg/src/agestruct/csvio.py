"""CSV writers for run outputs.

All numeric cells use Python's shortest round-trip float repr so files are
byte-identical across runs and reload to the exact binary values. Writers
return the path they wrote so callers can collect a manifest.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable

from .oracle import OracleSolution
from .reconstruct import DensityField
from .reduction import Trajectory
from .steady import SweepPoint


def fmt(value: float) -> str:
    """Shortest decimal string that round-trips to the same float."""
    return repr(float(value))


def _write_lines(path, header: str, rows: Iterable[str]) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(row + "\n")
    return path


def write_trajectory_csv(path, traj: Trajectory) -> Path:
    """Sampled trajectory: t,p,p1,...,pn,b,psi_int."""
    n = traj.states.shape[1] - 1
    header = "t,p," + ",".join(f"p{i}" for i in range(1, n + 1)) + ",b,psi_int"
    rows = (
        ",".join(
            [fmt(t)]
            + [fmt(v) for v in state]
            + [fmt(b), fmt(z)]
        )
        for t, state, b, z in zip(traj.times, traj.states, traj.birth_rates, traj.psi_integral)
    )
    return _write_lines(path, header, rows)


def write_sweep_csv(path, points: Iterable[SweepPoint]) -> Path:
    """Bifurcation sweep: r0,p_star,exists (empty p_star when none)."""
    rows = (
        ",".join(
            [fmt(pt.r0), fmt(pt.p_star) if pt.exists else "", "true" if pt.exists else "false"]
        )
        for pt in points
    )
    return _write_lines(path, "r0,p_star,exists", rows)


def write_density_csv(path, field: DensityField) -> Path:
    """Reconstructed age profile at one time: a,p."""
    rows = (f"{fmt(a)},{fmt(v)}" for a, v in zip(field.age_grid, field.values))
    return _write_lines(path, "a,p", rows)


def density_filename(t: float) -> str:
    return f"density_t{fmt(t)}.csv"


def write_oracle_csv(path, solution: OracleSolution) -> Path:
    """Integral-equation solution: t,b,p."""
    rows = (
        f"{fmt(t)},{fmt(b)},{fmt(p)}"
        for t, b, p in zip(solution.times, solution.birth_rates, solution.populations)
    )
    return _write_lines(path, "t,b,p", rows)
