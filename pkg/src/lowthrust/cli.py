"""Command-line entry point: scenario runs and result persistence.

    lt run --scenario <file-or-name> --mode guidance|optimize
           [--alpha A] [--mesh-tol E] [--out DIR]

Exit codes: 0 success, 2 scenario validation failure, 3 pipeline
(guidance or solver) failure.  The environment variable LT_THREADS
caps the worker threads used for batched constraint evaluation (the
default pipeline is sequential and fully deterministic).

Outputs per run: trajectory.csv (full state/control history),
summary.txt (key = value lines plus the mesh iteration history), and
plot-data CSVs: the planar projection with phase labels, the thrust
direction components versus time over sunlit samples, and the throttle
profile.
"""
from __future__ import annotations

import argparse
import dataclasses
import math
import os
import sys

import numpy as np

from . import ocp as ocp_mod
from .elements import ideal_to_cartesian
from .guidance import GuidanceError, propagate_guidance
from .scenario import ScenarioConfig, ScenarioError, load_scenario
from .solver import SolverOptions, optimize_transfer
from .trajectory import Trajectory, export_trajectory, read_trajectory  # noqa: F401

__all__ = ["main", "run", "load_scenario", "export_trajectory", "ScenarioConfig"]


def run(mode: str, scenario: ScenarioConfig, out_dir: str,
        options: SolverOptions | None = None) -> int:
    """Execute one scenario and persist results; returns the exit code."""
    os.makedirs(out_dir, exist_ok=True)
    log_path = os.path.join(out_dir, "run.log")
    log_lines: list[str] = []

    def log(line: str) -> None:
        log_lines.append(line)

    try:
        if mode == "guidance":
            traj = propagate_guidance(scenario)
            reports = []
            fuel_bound = math.nan
        elif mode == "optimize":
            opts = options or SolverOptions()
            opts = dataclasses.replace(opts, log=log)
            result = optimize_transfer(scenario, opts)
            traj = result.trajectory
            reports = result.reports
            fuel_bound = result.fuel_bound_kg
            if reports and reports[-1].status == "failed":
                _write_log(log_path, log_lines)
                print(f"error: solver failed ({reports[-1].message})", file=sys.stderr)
                return 3
        else:
            raise ValueError(f"unknown mode {mode!r}")
    except GuidanceError as exc:
        _write_log(log_path, log_lines)
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except RuntimeError as exc:
        _write_log(log_path, log_lines)
        print(f"error: {exc}", file=sys.stderr)
        return 3

    export_trajectory(traj, os.path.join(out_dir, "trajectory.csv"), scenario.constants)
    _write_summary(os.path.join(out_dir, "summary.txt"), scenario, mode, traj,
                   reports, fuel_bound)
    _write_plot_data(out_dir, scenario, traj)
    _write_log(log_path, log_lines)
    return 0


def _write_log(path: str, lines: list[str]) -> None:
    if lines:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")


def _write_summary(path: str, scenario: ScenarioConfig, mode: str,
                   traj: Trajectory, reports, fuel_bound: float) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"scenario = {scenario.name}\n")
        fh.write(f"mode = {mode}\n")
        fh.write(f"tof_days = {traj.dt_days:.6f}\n")
        fh.write(f"fuel_kg = {traj.dm_kg:.6f}\n")
        if not math.isnan(fuel_bound):
            fh.write(f"fuel_bound_kg = {fuel_bound:.6f}\n")
        fh.write(f"revolutions = {traj.revolutions:.3f}\n")
        fh.write(f"eclipse_count = {traj.eclipse_count()}\n")
        fh.write(f"throttle_transitions = {traj.throttle_transitions()}\n")
        if reports:
            fh.write("mesh_history = iter status n_vars mesh_error objective\n")
            for i, rep in enumerate(reports, start=1):
                fh.write(f"mesh_iter_{i} = {rep.status} {rep.n_vars} "
                         f"{rep.mesh_error:.3e} {rep.objective:.8f}\n")


def _write_plot_data(out_dir: str, scenario: ScenarioConfig, traj: Trajectory) -> None:
    consts = scenario.constants
    n = len(traj)
    pos = np.empty((n, 3))
    for i in range(n):
        pos[i] = ideal_to_cartesian(traj.state_at(i), float(traj.s[i]), consts)[0]

    shadowed = traj.psi_l < 0.5
    thrusting = traj.eta > 1e-3
    with open(os.path.join(out_dir, "plot_planar.csv"), "w", encoding="utf-8") as fh:
        fh.write("x_km,y_km,phase\n")
        for i in range(n):
            if shadowed[i]:
                phase = "eclipse"
            elif thrusting[i]:
                phase = "thrust"
            else:
                phase = "coast"
            fh.write(f"{pos[i, 0] / 1e3:.6f},{pos[i, 1] / 1e3:.6f},{phase}\n")

    with open(os.path.join(out_dir, "plot_thrust_direction.csv"), "w", encoding="utf-8") as fh:
        fh.write("t_days,qR,qT,qN\n")
        for i in range(n):
            if not shadowed[i]:
                fh.write(f"{traj.t[i] / 86400.0:.8f},{traj.q[i, 0]:.8f},"
                         f"{traj.q[i, 1]:.8f},{traj.q[i, 2]:.8f}\n")

    with open(os.path.join(out_dir, "plot_throttle.csv"), "w", encoding="utf-8") as fh:
        fh.write("t_days,eta,psi_l\n")
        for i in range(n):
            fh.write(f"{traj.t[i] / 86400.0:.8f},{traj.eta[i]:.8f},{traj.psi_l[i]:.8e}\n")


def _thread_count() -> int:
    raw = os.environ.get("LT_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        print(f"warning: ignoring invalid LT_THREADS={raw!r}", file=sys.stderr)
        return 1


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="lt", description="Low-thrust orbit transfer planning")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a transfer scenario")
    p_run.add_argument("--scenario", required=True,
                       help="scenario file path or bundled name "
                            "(gto-geo, leo-geo, gto-geo-desk)")
    p_run.add_argument("--mode", choices=("guidance", "optimize"), required=True)
    p_run.add_argument("--alpha", type=float, default=None,
                       help="override the time/fuel blend in [0, 1]")
    p_run.add_argument("--mesh-tol", type=float, default=None,
                       help="override the mesh refinement tolerance")
    p_run.add_argument("--out", default="out", help="output directory")
    args = parser.parse_args(argv)

    try:
        scenario = load_scenario(args.scenario)
        if args.alpha is not None or args.mesh_tol is not None:
            ocp = scenario.ocp
            if args.alpha is not None:
                if not 0.0 <= args.alpha <= 1.0:
                    raise ScenarioError("ocp.alpha", "must be in [0, 1]")
                ocp = dataclasses.replace(ocp, alpha=args.alpha)
            if args.mesh_tol is not None:
                if args.mesh_tol <= 0.0:
                    raise ScenarioError("ocp.mesh_tol", "must be positive")
                ocp = dataclasses.replace(ocp, mesh_tol=args.mesh_tol)
            scenario = dataclasses.replace(scenario, ocp=ocp)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    ocp_mod.set_evaluation_threads(_thread_count())
    return run(args.mode, scenario, args.out)


if __name__ == "__main__":
    sys.exit(main())
