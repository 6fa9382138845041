"""NLP backends, mesh refinement, and the optimization pipeline.

The reference backend is an augmented Lagrangian method: equality
constraints and (shifted, clipped) inequalities are folded into a merit
function minimized under the variable bounds by a projected
limited-memory quasi-Newton inner solver; multipliers follow the
first-order update and the penalty grows on stalled feasibility.

The outer loop refines the mesh until the relative collocation error
drops below the configured tolerance: segments above tolerance get one
more collocation point (up to order 6) or are bisected, quiet adjacent
segments merge, and every solve warm-starts from the previous solution
interpolated onto the new mesh.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.optimize
import scipy.integrate
import scipy.sparse as sp

from . import ocp as ocp_mod
from .guidance import propagate_guidance
from .mesh import Mesh, build_initial_mesh, detect_eclipse_events
from .ocp import NlpProblem, OcpConfig, transcribe
from .scenario import ScenarioConfig
from .trajectory import Trajectory

_MAX_ORDER = 6
_MERGE_QUIET_FACTOR = 0.01   # segments below eps * this are merge candidates


@dataclass(frozen=True)
class SolverOptions:
    """Backend selection and convergence tolerances."""

    feas_tol: float = 5e-7
    opt_tol: float = 1e-6
    max_iter: int = 40          # outer multiplier updates
    inner_max_iter: int = 600   # quasi-Newton iterations per outer round
    backend: str = "reference"
    log: Callable[[str], None] | None = None

    def __post_init__(self) -> None:
        if self.feas_tol <= 0.0 or self.opt_tol <= 0.0:
            raise ValueError("tolerances must be positive")


@dataclass
class SolveReport:
    """Outcome of one NLP solve."""

    status: str                 # optimal | feasible-suboptimal | failed
    objective: float
    feasibility: float
    iterations: int
    wall_time: float
    mesh_error: float = math.nan
    n_vars: int = 0
    message: str = ""


_BACKENDS: dict[str, Callable] = {}


def register_backend(name: str, fn: Callable) -> None:
    """Register an external solve backend fn(nlp, init, opts) -> (report, z)."""
    _BACKENDS[name] = fn


def solve(nlp: NlpProblem, init: np.ndarray,
          opts: SolverOptions = SolverOptions()) -> tuple[SolveReport, np.ndarray]:
    """Solve an NLP from an initial point with the selected backend."""
    if opts.backend == "reference":
        return _solve_auglag(nlp, init, opts)
    if opts.backend in _BACKENDS:
        return _BACKENDS[opts.backend](nlp, init, opts)
    raise ValueError(f"unknown backend {opts.backend!r}")


def _solve_auglag(nlp: NlpProblem, init: np.ndarray,
                  opts: SolverOptions) -> tuple[SolveReport, np.ndarray]:
    t_start = time.perf_counter()
    z = np.clip(np.asarray(init, dtype=float), nlp.lb, nlp.ub)
    lam = np.zeros(nlp.n_eq)
    mu = np.zeros(nlp.n_ineq)
    rho = 10.0
    log = opts.log or (lambda line: None)

    def al_value_grad(zz: np.ndarray) -> tuple[float, np.ndarray]:
        ceq, cineq = nlp.constraints(zz)
        Jeq, Jineq = nlp.jacobian(zz)
        val = nlp.objective(zz)
        grad = nlp.gradient(zz)
        if nlp.n_eq:
            val += float(lam @ ceq + 0.5 * rho * ceq @ ceq)
            grad = grad + Jeq.T @ (lam + rho * ceq)
        if nlp.n_ineq:
            shifted = np.maximum(0.0, mu / rho + cineq)
            val += float(0.5 * rho * shifted @ shifted - 0.5 * (mu @ mu) / rho)
            grad = grad + Jineq.T @ (rho * shifted)
        return val, grad

    def feasibility(ceq: np.ndarray, cineq: np.ndarray) -> float:
        f = 0.0
        if ceq.size:
            f = float(np.max(np.abs(ceq)))
        if cineq.size:
            f = max(f, float(np.max(np.maximum(cineq, 0.0))))
        return f

    bounds = list(zip(nlp.lb, nlp.ub))
    feas_prev = math.inf
    status = "failed"
    message = ""
    it = 0
    for it in range(1, opts.max_iter + 1):
        gtol = max(opts.opt_tol, 1e-2 * 0.3 ** it)
        res = scipy.optimize.minimize(
            al_value_grad, z, jac=True, method="L-BFGS-B", bounds=bounds,
            options={"maxiter": opts.inner_max_iter, "maxcor": 25,
                     "ftol": 1e-16, "gtol": gtol},
        )
        z = np.clip(res.x, nlp.lb, nlp.ub)
        ceq, cineq = nlp.constraints(z)
        feas = feasibility(ceq, cineq)
        obj = nlp.objective(z)
        log(f"iter {it} obj {obj:.8e} feas {feas:.3e} rho {rho:.1e}")

        if feas < opts.feas_tol:
            inner_ok = bool(res.success) or res.status == 1
            status = "optimal" if inner_ok else "feasible-suboptimal"
            message = str(res.message)
            break
        if nlp.n_eq:
            lam = np.clip(lam + rho * ceq, -1e10, 1e10)
        if nlp.n_ineq:
            mu = np.clip(np.maximum(0.0, mu + rho * cineq), 0.0, 1e10)
        if feas > 0.25 * feas_prev:
            rho = min(rho * 10.0, 1e12)
        feas_prev = feas
    else:
        ceq, cineq = nlp.constraints(z)
        feas = feasibility(ceq, cineq)
        obj = nlp.objective(z)
        status = "feasible-suboptimal" if feas < opts.feas_tol else "failed"
        message = "outer iteration limit reached"

    report = SolveReport(
        status=status, objective=float(obj), feasibility=float(feas),
        iterations=it, wall_time=time.perf_counter() - t_start,
        n_vars=nlp.n_vars, message=message,
    )
    return report, z


# ---------------------------------------------------------------------------
# Mesh refinement
# ---------------------------------------------------------------------------

def refine_mesh(nlp: NlpProblem, solution: np.ndarray, mesh: Mesh,
                eps: float) -> Mesh | None:
    """One refinement pass; returns the new mesh or None when converged.

    Segments whose error exceeds eps gain a collocation point (up to
    order 6), then bisect; adjacent segments both below eps/100 with
    equal orders merge, except across event-tagged boundaries.

    Raises:
        RuntimeError: If refinement stagnates (identical mesh twice).
    """
    tr = nlp.meta["transcription"]
    errs = tr.segment_errors(solution)
    if np.all(errs < eps):
        return None

    bounds = list(mesh.boundaries)
    orders = list(mesh.orders)
    tags = list(mesh.event_tags)

    new_bounds = [bounds[0]]
    new_orders = []
    new_tags = [tags[0]]
    k = 0
    while k < len(orders):
        a, b = bounds[k], bounds[k + 1]
        if errs[k] > eps:
            if orders[k] < _MAX_ORDER:
                new_orders.append(orders[k] + 1)
                new_bounds.append(b)
                new_tags.append(tags[k + 1])
            else:
                mid = 0.5 * (a + b)
                new_orders.extend([orders[k], orders[k]])
                new_bounds.extend([mid, b])
                new_tags.extend([False, tags[k + 1]])
            k += 1
        elif (k + 1 < len(orders)
              and errs[k] < _MERGE_QUIET_FACTOR * eps
              and errs[k + 1] < _MERGE_QUIET_FACTOR * eps
              and orders[k] == orders[k + 1]
              and not tags[k + 1]):
            new_orders.append(orders[k])
            new_bounds.append(bounds[k + 2])
            new_tags.append(tags[k + 2])
            k += 2
        else:
            new_orders.append(orders[k])
            new_bounds.append(b)
            new_tags.append(tags[k + 1])
            k += 1

    new_mesh = Mesh(boundaries=np.array(new_bounds),
                    orders=np.array(new_orders),
                    event_tags=np.array(new_tags))
    if (new_mesh.n_segments == mesh.n_segments
            and np.array_equal(new_mesh.boundaries, mesh.boundaries)
            and np.array_equal(new_mesh.orders, mesh.orders)):
        raise RuntimeError("mesh refinement stagnated: identical mesh produced twice")
    return new_mesh


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------

@dataclass
class TransferResult:
    """Outcome of :func:`optimize_transfer`."""

    trajectory: Trajectory
    reports: list[SolveReport]
    meshes: list[Mesh]
    nlp: NlpProblem
    solution: np.ndarray
    guess: Trajectory
    fuel_bound_kg: float = math.nan


def optimize_transfer(scenario: ScenarioConfig,
                      options: SolverOptions = SolverOptions(),
                      guess: Trajectory | None = None) -> TransferResult:
    """Guidance guess, event-aware mesh, transcription, solve/refine loop.

    Each mesh iteration warm-starts from the previous solution; the
    objective is expected not to increase across iterations (checked
    and logged, not fatal).
    """
    log = options.log or (lambda line: None)
    if guess is None:
        guess = propagate_guidance(scenario)
    eclipse = scenario.eclipse_context()
    events = detect_eclipse_events(guess, eclipse, scenario.constants)
    mesh = build_initial_mesh(guess, events, scenario.mesh)

    config = OcpConfig(
        alpha=scenario.ocp.alpha,
        x0=scenario.initial_ideal_state(),
        m0=scenario.m0,
        t0=0.0,
        L_min=scenario.ocp.L_min_rad,
        L_max=scenario.ocp.L_max_rad,
        dt_min=scenario.ocp.dt_min_days,
        dt_max=scenario.ocp.dt_max_days,
        mesh_tol=scenario.ocp.mesh_tol,
    )
    target = scenario.target_vector()

    reports: list[SolveReport] = []
    meshes: list[Mesh] = [mesh]
    nlp, z0 = transcribe(config, target, scenario.propulsion, scenario.constants,
                         eclipse, mesh, guess)
    prev_obj = math.inf
    for it in range(1, scenario.ocp.max_mesh_iterations + 1):
        log(f"mesh iteration {it}: {mesh.n_segments} segments, {nlp.n_vars} variables")
        report, z = solve(nlp, z0, options)
        report.mesh_error = ocp_mod.defect_norm(nlp, z)
        reports.append(report)
        log(f"mesh iteration {it}: status {report.status} obj {report.objective:.6f} "
            f"mesh error {report.mesh_error:.3e}")
        if report.status == "failed":
            break
        if report.objective > prev_obj + options.opt_tol:
            log(f"warning: objective increased across mesh iterations "
                f"({prev_obj:.8f} -> {report.objective:.8f})")
        prev_obj = report.objective

        new_mesh = refine_mesh(nlp, z, mesh, scenario.ocp.mesh_tol)
        if new_mesh is None:
            break
        mesh = new_mesh
        meshes.append(mesh)
        nlp_new, _ = transcribe(config, target, scenario.propulsion,
                                scenario.constants, eclipse, mesh, guess)
        z0 = ocp_mod.interpolate_point(nlp, z, nlp_new)
        nlp = nlp_new

    traj = ocp_mod.extract_trajectory(nlp, z)
    tr = nlp.meta["transcription"]
    return TransferResult(
        trajectory=traj, reports=reports, meshes=meshes, nlp=nlp,
        solution=z, guess=guess, fuel_bound_kg=tr.fuel_upper_bound(z),
    )


def consistency_residual(nlp: NlpProblem, solution: np.ndarray,
                         rtol: float = 1e-11) -> float:
    """Dynamic-consistency check of a collocation solution.

    Densely re-propagates the dynamics through the returned controls
    (interpolated from the collocation polynomials) and returns the
    max-norm difference from the returned terminal state in the scaled
    variables.
    """
    tr = nlp.meta["transcription"]
    X, U, sf_s = tr.split(solution)
    sf = sf_s * tr.sf_ref

    def controls_at(s: float) -> np.ndarray:
        tau = min(max(s / sf, 0.0), 1.0)
        k = int(np.searchsorted(tr.tau_bounds, tau, side="right") - 1)
        k = min(max(k, 0), tr.K - 1)
        a, b = tr.tau_bounds[k], tr.tau_bounds[k + 1]
        xi = 2.0 * (tau - a) / (b - a) - 1.0
        off = tr.seg_offset[k]
        n = int(tr.orders[k])
        Lc = ocp_mod.lagrange_matrix(tr.seg_nodes[k][:n], np.array([xi]))
        return (Lc @ U[off:off + n])[0]

    def rhs(s: float, y: np.ndarray) -> np.ndarray:
        u = controls_at(s)
        row = tr._rhs_scaled(y[None, :], u[None, :], np.array([s]))
        return row[0]

    y0 = X[0].copy()
    sol = scipy.integrate.solve_ivp(
        rhs, (0.0, sf), y0, method="DOP853", rtol=rtol, atol=1e-12,
        dense_output=False)
    if not sol.success:
        raise RuntimeError(f"consistency propagation failed: {sol.message}")
    return float(np.max(np.abs(sol.y[:, -1] - X[-1])))
