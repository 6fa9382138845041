"""Single-phase optimal control problem and its sparse transcription.

The transfer problem minimizes a convex blend of time of flight and a
fuel upper bound, subject to the regularized dynamics, an orbit-match
boundary condition, terminal true-longitude and TOF windows, throttle
bounds, and the unit-vector thrust direction reformulated through an
auxiliary vector w with q = w/|w| and the convex path constraint
|w|^2 <= 1.  The final anomaly s_f is itself a decision variable: the
mesh lives on fractions of s_f, so s_f scales every segment width.

Transcription uses Legendre-Gauss-Radau collocation with 4 to 6 points
per segment.  States live at all mesh points, controls at collocation
points, and the fuel bound is discretized with the same quadrature
weights as the dynamics.
"""
from __future__ import annotations

import concurrent.futures
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .dynamics import PropulsionConfig, rhs_arrays
from .eclipse import EclipseContext, psi_arrays
from .elements import EARTH, ClassicalElements, IdealState, PhysicalConstants, kappa_factors
from .mesh import Mesh
from .trajectory import Trajectory

_FD_STEP = 1e-7
_W_NORM_FLOOR = 1e-16    # softening of |w| in q = w/|w| (numerical guard only)

_STATE_DIM = 8      # rho ex ey hx hy sigma m_scaled t_days
_CTRL_DIM = 4       # wR wT wN eta

_EVAL_THREADS = 1


def set_evaluation_threads(n: int) -> None:
    """Worker threads for the finite-difference Jacobian perturbations.

    Results are merged by slot index, so parallel evaluation stays
    bit-deterministic.
    """
    global _EVAL_THREADS
    _EVAL_THREADS = max(1, int(n))


@dataclass(frozen=True)
class TargetElements:
    """Reference vector (p, f, g, h, k) of the target orbit, SI units."""

    zbar: tuple[float, float, float, float, float]

    def __post_init__(self) -> None:
        p, f, g, _, _ = self.zbar
        if p <= 0.0:
            raise ValueError(f"target semiparameter must be positive, got {p}")
        if f**2 + g**2 >= 1.0:
            raise ValueError("target f^2 + g^2 must be < 1")


@dataclass(frozen=True)
class OcpConfig:
    """Objective blend, terminal windows, tolerances, and initial data.

    ``L_min``/``L_max`` (rad) and ``dt_min``/``dt_max`` (days) may be
    None, in which case windows are derived from the trajectory guess
    at transcription time.  Equal dt bounds produce a fixed-TOF
    equality constraint.
    """

    alpha: float
    x0: IdealState
    m0: float
    t0: float = 0.0
    L_min: float | None = None
    L_max: float | None = None
    dt_min: float | None = None
    dt_max: float | None = None
    mesh_tol: float = 5e-6

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.m0 <= 0.0:
            raise ValueError(f"m0 must be positive, got {self.m0}")
        if self.L_min is not None and self.L_max is not None and self.L_min > self.L_max:
            raise ValueError("L_min must not exceed L_max")
        if self.dt_min is not None and self.dt_max is not None and self.dt_min > self.dt_max:
            raise ValueError("dt_min must not exceed dt_max")
        if self.mesh_tol <= 0.0:
            raise ValueError("mesh_tol must be positive")


@dataclass
class NlpProblem:
    """Sparse NLP with callback evaluation.

    Equality constraints come first (collocation defects, boundary
    residual, optional fixed-TOF/longitude rows), inequalities second
    (thrust-direction ball, longitude and TOF windows).  ``meta`` holds
    the transcription structure when the problem came from
    :func:`transcribe`.
    """

    n_vars: int
    n_eq: int
    n_ineq: int
    lb: np.ndarray
    ub: np.ndarray
    objective: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    constraints: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]
    jacobian: Callable[[np.ndarray], tuple[sp.csr_matrix, sp.csr_matrix]]
    meta: dict = field(default_factory=dict)

    @property
    def n_cons(self) -> int:
        return self.n_eq + self.n_ineq


# ---------------------------------------------------------------------------
# Scalar operations
# ---------------------------------------------------------------------------

def target_vector(coe_target: ClassicalElements) -> TargetElements:
    """Reference vector of an elliptic target orbit."""
    t2 = math.tan(0.5 * coe_target.i)
    lon_peri = coe_target.Omega + coe_target.omega
    return TargetElements(zbar=(
        coe_target.a * (1.0 - coe_target.e**2),
        coe_target.e * math.cos(lon_peri),
        coe_target.e * math.sin(lon_peri),
        t2 * math.cos(coe_target.Omega),
        t2 * math.sin(coe_target.Omega),
    ))


def boundary_residual(xf: IdealState, zbar: TargetElements,
                      consts: PhysicalConstants = EARTH) -> np.ndarray:
    """Orbit matching residual at the final anomaly, shape (5,).

    Zero exactly when the terminal osculating orbit coincides with the
    target; the target vectors are rotated by -sigma(s_f), so the
    residual is independent of the terminal phase.
    """
    p, f, g, h, k = zbar.zbar
    c, sn = math.cos(xf.sigma), math.sin(xf.sigma)
    return np.array([
        xf.rho - p / consts.Re,
        xf.ex - (f * c + g * sn),
        xf.ey - (-f * sn + g * c),
        xf.hx - (h * c + k * sn),
        xf.hy - (-h * sn + k * c),
    ])


def cost(dt: float, dm: float, alpha: float) -> float:
    """Blended objective (1 - alpha) * dt + alpha * dm (days and kg)."""
    if dt < 0.0 or dm < 0.0:
        raise ValueError("time of flight and fuel bound must be nonnegative")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    return (1.0 - alpha) * dt + alpha * dm


# ---------------------------------------------------------------------------
# Legendre-Gauss-Radau machinery
# ---------------------------------------------------------------------------

def lgr_nodes(n: int) -> tuple[np.ndarray, np.ndarray]:
    """LGR collocation nodes and quadrature weights on [-1, 1).

    The n nodes include -1 and exclude +1; the quadrature is exact for
    polynomials up to degree 2n - 2.
    """
    if n < 1:
        raise ValueError("need at least one collocation node")
    if n == 1:
        return np.array([-1.0]), np.array([2.0])
    coeffs = np.zeros(n + 1)
    coeffs[n - 1] = 1.0
    coeffs[n] = 1.0
    nodes = np.sort(np.polynomial.legendre.legroots(coeffs))
    nodes[0] = -1.0
    leg = np.polynomial.legendre.Legendre.basis(n - 1)(nodes)
    weights = (1.0 - nodes) / (n**2 * leg**2)
    weights[0] = 2.0 / n**2
    return nodes, weights


def _bary_weights(xs: np.ndarray) -> np.ndarray:
    v = np.ones(len(xs))
    for j in range(len(xs)):
        v[j] = 1.0 / np.prod(xs[j] - np.delete(xs, j))
    return v


def lagrange_matrix(xs: np.ndarray, xe: np.ndarray) -> np.ndarray:
    """Interpolation matrix L with p(xe) = L @ p(xs)."""
    v = _bary_weights(xs)
    L = np.zeros((len(xe), len(xs)))
    for i, e in enumerate(xe):
        d = e - xs
        hit = np.nonzero(np.abs(d) < 1e-13)[0]
        if hit.size:
            L[i, hit[0]] = 1.0
        else:
            t = v / d
            L[i] = t / np.sum(t)
    return L


def lagrange_diff_matrix(xs: np.ndarray, xe: np.ndarray) -> np.ndarray:
    """Differentiation matrix D with p'(xe) = D @ p(xs)."""
    v = _bary_weights(xs)
    D = np.zeros((len(xe), len(xs)))
    for i, e in enumerate(xe):
        d = e - xs
        hit = np.nonzero(np.abs(d) < 1e-13)[0]
        if hit.size:
            j0 = hit[0]
            row = np.zeros(len(xs))
            for j in range(len(xs)):
                if j != j0:
                    row[j] = (v[j] / v[j0]) / (xs[j0] - xs[j])
            row[j0] = -np.sum(row)
            D[i] = row
        else:
            S = np.sum(v / d)
            Sp = -np.sum(v / d**2)
            D[i] = (-v / d**2) / S - (v / d) * Sp / S**2
    return D


# ---------------------------------------------------------------------------
# Transcription
# ---------------------------------------------------------------------------

class _Transcription:
    """Structure and evaluators of a transcribed transfer problem."""

    def __init__(self, config: OcpConfig, target: TargetElements,
                 prop: PropulsionConfig, consts: PhysicalConstants,
                 eclipse: EclipseContext, mesh: Mesh, guess: Trajectory):
        self.config = config
        self.target = target
        self.prop = prop
        self.consts = consts
        self.eclipse = eclipse
        self.mesh = mesh

        lo, hi = mesh.span
        if lo < guess.s[0] - 1e-9 or hi > guess.s[-1] + 1e-9:
            raise ValueError("guess does not cover the mesh span")
        widths = np.diff(mesh.boundaries)
        if np.any(widths <= 0.0):
            raise ValueError("degenerate (zero-width) mesh segment")

        self.sf_ref = hi
        self.tau_bounds = mesh.boundaries / self.sf_ref
        self.orders = mesh.orders.copy()
        self.K = mesh.n_segments
        self.C = int(np.sum(self.orders))
        self.P = self.C + 1
        self.n_vars = _STATE_DIM * self.P + _CTRL_DIM * self.C + 1
        self.ix_sf = self.n_vars - 1

        # per-segment LGR data and global node grids
        self.seg_offset = np.concatenate([[0], np.cumsum(self.orders)]).astype(int)
        self.tau_support = np.empty(self.P)
        self.quad_coef = np.empty(self.C)      # (dtau_k * sf_ref / 2) * w_i
        self.seg_diff = []                     # (n_k, n_k+1) scaled by 2/(dtau_k*sf_ref)
        self.seg_nodes = []
        for k in range(self.K):
            n = int(self.orders[k])
            nodes, w = lgr_nodes(n)
            support = np.concatenate([nodes, [1.0]])
            a, b = self.tau_bounds[k], self.tau_bounds[k + 1]
            dtau = b - a
            off = self.seg_offset[k]
            self.tau_support[off:off + n] = a + 0.5 * dtau * (nodes + 1.0)
            self.quad_coef[off:off + n] = 0.5 * dtau * self.sf_ref * w
            D = lagrange_diff_matrix(support, nodes) * (2.0 / (dtau * self.sf_ref))
            self.seg_diff.append(D)
            self.seg_nodes.append(support)
        self.tau_support[-1] = self.tau_bounds[-1]
        self.tau_colloc = self.tau_support[:self.C]
        self.seg_of_colloc = np.repeat(np.arange(self.K), self.orders)

        self._resolve_windows(guess)
        self._build_linear_part()
        self._build_fd_pattern()
        self._build_bounds()
        self.z_guess = self._initial_point(guess)

    # -- configuration -----------------------------------------------------

    def _resolve_windows(self, guess: Trajectory) -> None:
        cfg = self.config
        L0 = float(guess.states[0, 5] + guess.s[0])
        Lf = float(guess.states[-1, 5] + guess.s[-1])
        dt_guess = guess.dt_days
        self.L_min = cfg.L_min if cfg.L_min is not None else L0 + math.pi
        self.L_max = cfg.L_max if cfg.L_max is not None else Lf + 4.0 * math.pi
        self.dt_min = cfg.dt_min if cfg.dt_min is not None else 0.0
        self.dt_max = cfg.dt_max if cfg.dt_max is not None else 1.5 * dt_guess
        self.dt_fixed = (cfg.dt_min is not None and cfg.dt_max is not None
                         and cfg.dt_min == cfg.dt_max)
        self.L_fixed = (cfg.L_min is not None and cfg.L_max is not None
                        and cfg.L_min == cfg.L_max)
        self.t0_days = cfg.t0 / 86400.0

        self.n_eq = _STATE_DIM * self.C + 5 + int(self.dt_fixed) + int(self.L_fixed)
        self.n_ineq = self.C + (0 if self.L_fixed else 2) + (0 if self.dt_fixed else 2)

    def ix_state(self, point: int, comp: int) -> int:
        return _STATE_DIM * point + comp

    def ix_ctrl(self, colloc: int, comp: int) -> int:
        return _STATE_DIM * self.P + _CTRL_DIM * colloc + comp

    def _build_bounds(self) -> None:
        lb = np.full(self.n_vars, -np.inf)
        ub = np.full(self.n_vars, np.inf)
        state_lb = np.array([0.05, -0.95, -0.95, -3.0, -3.0, -200.0, 0.02,
                             self.t0_days - 1e-9])
        state_ub = np.array([80.0, 0.95, 0.95, 3.0, 3.0, 200.0, 1.0,
                             self.t0_days + self.dt_max + 1.0])
        for p in range(self.P):
            lb[self.ix_state(p, 0):self.ix_state(p, 0) + _STATE_DIM] = state_lb
            ub[self.ix_state(p, 0):self.ix_state(p, 0) + _STATE_DIM] = state_ub
        for c in range(self.C):
            i = self.ix_ctrl(c, 0)
            lb[i:i + 3] = -1.01
            ub[i:i + 3] = 1.01
            lb[i + 3] = 0.0
            ub[i + 3] = 1.0
        lb[self.ix_sf] = 0.3
        ub[self.ix_sf] = 2.0

        # pin the initial state
        x0 = self.config.x0.as_array()
        init = np.concatenate([x0, [1.0, self.t0_days]])
        lb[:_STATE_DIM] = init
        ub[:_STATE_DIM] = init
        self.lb, self.ub = lb, ub

    def _build_linear_part(self) -> None:
        """Constant sparse part of the defect rows (the differentiation term)."""
        rows, cols, vals = [], [], []
        for k in range(self.K):
            D = self.seg_diff[k]
            n = int(self.orders[k])
            off = self.seg_offset[k]
            for i in range(n):
                row0 = _STATE_DIM * (off + i)
                for ell in range(n + 1):
                    if D[i, ell] == 0.0:
                        continue
                    for j in range(_STATE_DIM):
                        rows.append(row0 + j)
                        cols.append(self.ix_state(off + ell, j))
                        vals.append(D[i, ell])
        self._A = sp.coo_matrix(
            (vals, (rows, cols)),
            shape=(_STATE_DIM * self.C, self.n_vars)).tocsr()

    def _build_fd_pattern(self) -> None:
        """Row/col index templates of the point-local Jacobian blocks."""
        C = self.C
        n_local = _STATE_DIM + _CTRL_DIM + 1    # states, controls, s_f
        rows = np.empty((C, _STATE_DIM, n_local), dtype=int)
        cols = np.empty((C, _STATE_DIM, n_local), dtype=int)
        for c in range(C):
            for j in range(_STATE_DIM):
                rows[c, j, :] = _STATE_DIM * c + j
                cols[c, j, :_STATE_DIM] = [self.ix_state(c, d) for d in range(_STATE_DIM)]
                cols[c, j, _STATE_DIM:_STATE_DIM + _CTRL_DIM] = [
                    self.ix_ctrl(c, d) for d in range(_CTRL_DIM)]
                cols[c, j, -1] = self.ix_sf
        self._fd_rows = rows.ravel()
        self._fd_cols = cols.ravel()

    # -- core evaluation ----------------------------------------------------

    def split(self, z: np.ndarray):
        X = z[:_STATE_DIM * self.P].reshape(self.P, _STATE_DIM)
        U = z[_STATE_DIM * self.P:_STATE_DIM * self.P + _CTRL_DIM * self.C]
        return X, U.reshape(self.C, _CTRL_DIM), float(z[self.ix_sf])

    def _rhs_scaled(self, X: np.ndarray, U: np.ndarray, s: np.ndarray) -> np.ndarray:
        """Scaled dynamics at explicit anomalies; X, U row-per-point."""
        m = X[:, 6] * self.config.m0
        t_sec = X[:, 7] * 86400.0
        _, psi_l, _ = psi_arrays(X[:, 0], X[:, 1], X[:, 2], X[:, 3], X[:, 4],
                                 X[:, 5], s, t_sec, self.eclipse.ephemeris,
                                 self.eclipse.model, self.consts)
        wnorm = np.sqrt(U[:, 0]**2 + U[:, 1]**2 + U[:, 2]**2 + _W_NORM_FLOOR)
        F = rhs_arrays(X[:, 0], X[:, 1], X[:, 2], X[:, 3], X[:, 4], s,
                       m, U[:, 3], U[:, 0] / wnorm, U[:, 1] / wnorm,
                       U[:, 2] / wnorm, psi_l, self.prop, self.consts)
        F[:, 6] /= self.config.m0
        F[:, 7] /= 86400.0
        return F

    def eval_F(self, X: np.ndarray, U: np.ndarray, sf_s: float) -> np.ndarray:
        return self._rhs_scaled(X, U, self.tau_colloc * sf_s * self.sf_ref)

    def constraints(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        X, U, sf_s = self.split(z)
        F = self.eval_F(X[:self.C], U, sf_s)
        defects = self._A @ z - sf_s * F.ravel()

        xN = IdealState.from_array(X[-1, :6])
        eq = [defects, boundary_residual(xN, self.target, self.consts)]
        if self.dt_fixed:
            eq.append([X[-1, 7] - self.t0_days - self.dt_min])
        if self.L_fixed:
            eq.append([X[-1, 5] + sf_s * self.sf_ref - self.L_min])

        ineq = [np.sum(U[:, :3]**2, axis=1) - 1.0]
        L_f = X[-1, 5] + sf_s * self.sf_ref
        if not self.L_fixed:
            ineq.append([self.L_min - L_f, L_f - self.L_max])
        dt = X[-1, 7] - self.t0_days
        if not self.dt_fixed:
            ineq.append([self.dt_min - dt, dt - self.dt_max])
        return np.concatenate(eq), np.concatenate(ineq)

    def objective(self, z: np.ndarray) -> float:
        X, U, sf_s = self.split(z)
        dt = X[-1, 7] - self.t0_days
        return cost(max(dt, 0.0), max(self.fuel_upper_bound(z), 0.0), self.config.alpha)

    def fuel_upper_bound(self, z: np.ndarray) -> float:
        """Quadrature of the fuel-consumption upper bound (kg)."""
        X, U, sf_s = self.split(z)
        s = self.tau_colloc * sf_s * self.sf_ref
        kt = kappa_factors(X[:self.C, 0], X[:self.C, 1], X[:self.C, 2],
                           X[:self.C, 3], X[:self.C, 4], s, self.consts)[4]
        rate = self.prop.Tmax / (self.consts.g0 * self.prop.Isp)
        return float(np.sum(self.quad_coef * sf_s * kt * rate * U[:, 3]))

    def gradient(self, z: np.ndarray) -> np.ndarray:
        X, U, sf_s = self.split(z)
        g = np.zeros(self.n_vars)
        alpha = self.config.alpha
        g[self.ix_state(self.P - 1, 7)] += 1.0 - alpha

        if alpha > 0.0:
            s = self.tau_colloc * sf_s * self.sf_ref
            Xc = X[:self.C]
            kc, ks, _, _, kt = kappa_factors(Xc[:, 0], Xc[:, 1], Xc[:, 2],
                                             Xc[:, 3], Xc[:, 4], s, self.consts)
            rate = self.prop.Tmax / (self.consts.g0 * self.prop.Isp)
            coef = alpha * self.quad_coef * rate
            eta = U[:, 3]
            cs, sn = np.cos(s), np.sin(s)
            dkt_drho = 1.5 * kt / Xc[:, 0]
            dkt_dex = -2.0 * kt * cs / kc
            dkt_dey = -2.0 * kt * sn / kc
            dkt_ds = 2.0 * kt * ks / kc
            for c in range(self.C):
                g[self.ix_ctrl(c, 3)] += coef[c] * sf_s * kt[c]
                g[self.ix_state(c, 0)] += coef[c] * sf_s * eta[c] * dkt_drho[c]
                g[self.ix_state(c, 1)] += coef[c] * sf_s * eta[c] * dkt_dex[c]
                g[self.ix_state(c, 2)] += coef[c] * sf_s * eta[c] * dkt_dey[c]
            g[self.ix_sf] += float(np.sum(
                coef * eta * (kt + sf_s * dkt_ds * self.tau_colloc * self.sf_ref)))
        return g

    def jacobian(self, z: np.ndarray) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        X, U, sf_s = self.split(z)
        Xc = X[:self.C].copy()
        Uc = U.copy()
        s_base = self.tau_colloc * sf_s * self.sf_ref
        F = self._rhs_scaled(Xc, Uc, s_base)

        n_local = _STATE_DIM + _CTRL_DIM + 1
        blocks = np.empty((self.C, _STATE_DIM, n_local))

        def fd_slot(d: int) -> tuple[int, np.ndarray]:
            if d < _STATE_DIM:
                h = _FD_STEP * (1.0 + np.abs(Xc[:, d]))
                Xp = Xc.copy()
                Xp[:, d] += h
                return d, -sf_s * (self._rhs_scaled(Xp, Uc, s_base) - F) / h[:, None]
            if d < _STATE_DIM + _CTRL_DIM:
                j = d - _STATE_DIM
                h = _FD_STEP * (1.0 + np.abs(Uc[:, j]))
                Up = Uc.copy()
                Up[:, j] += h
                return d, -sf_s * (self._rhs_scaled(Xc, Up, s_base) - F) / h[:, None]
            hs = _FD_STEP * (1.0 + np.abs(s_base))
            dFds = (self._rhs_scaled(Xc, Uc, s_base + hs) - F) / hs[:, None]
            return d, -(F + sf_s * dFds * (self.tau_colloc * self.sf_ref)[:, None])

        if _EVAL_THREADS > 1:
            with concurrent.futures.ThreadPoolExecutor(_EVAL_THREADS) as pool:
                for d, block in pool.map(fd_slot, range(n_local)):
                    blocks[:, :, d] = block
        else:
            for d in range(n_local):
                blocks[:, :, d] = fd_slot(d)[1]

        J_nl = sp.coo_matrix(
            (blocks.ravel(), (self._fd_rows, self._fd_cols)),
            shape=(_STATE_DIM * self.C, self.n_vars))
        J_defect = (self._A + J_nl.tocsr()).tocoo()

        rows = [J_defect.row]
        cols = [J_defect.col]
        vals = [J_defect.data]
        r = _STATE_DIM * self.C

        # boundary rows: identity in the first five elements plus the
        # sigma column from the rotating target vectors
        p, fbar, gbar, hbar, kbar = self.target.zbar
        sig = X[-1, 5]
        c, sn = math.cos(sig), math.sin(sig)
        ex_t = fbar * c + gbar * sn
        ey_t = -fbar * sn + gbar * c
        hx_t = hbar * c + kbar * sn
        hy_t = -hbar * sn + kbar * c
        dsig = [0.0, -ey_t, ex_t, -hy_t, hx_t]
        for i in range(5):
            rows.append([r + i, r + i])
            cols.append([self.ix_state(self.P - 1, i), self.ix_state(self.P - 1, 5)])
            vals.append([1.0, dsig[i]])
        r += 5
        if self.dt_fixed:
            rows.append([r])
            cols.append([self.ix_state(self.P - 1, 7)])
            vals.append([1.0])
            r += 1
        if self.L_fixed:
            rows.append([r, r])
            cols.append([self.ix_state(self.P - 1, 5), self.ix_sf])
            vals.append([1.0, self.sf_ref])
            r += 1
        J_eq = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_eq, self.n_vars)).tocsr()

        rows, cols, vals = [], [], []
        for ci in range(self.C):
            for d in range(3):
                rows.append(ci)
                cols.append(self.ix_ctrl(ci, d))
                vals.append(2.0 * U[ci, d])
        r = self.C
        if not self.L_fixed:
            rows += [r, r, r + 1, r + 1]
            cols += [self.ix_state(self.P - 1, 5), self.ix_sf,
                     self.ix_state(self.P - 1, 5), self.ix_sf]
            vals += [-1.0, -self.sf_ref, 1.0, self.sf_ref]
            r += 2
        if not self.dt_fixed:
            rows += [r, r + 1]
            cols += [self.ix_state(self.P - 1, 7), self.ix_state(self.P - 1, 7)]
            vals += [-1.0, 1.0]
            r += 2
        J_ineq = sp.coo_matrix((vals, (rows, cols)),
                               shape=(self.n_ineq, self.n_vars)).tocsr()
        return J_eq, J_ineq

    # -- error estimation ---------------------------------------------------

    def segment_errors(self, z: np.ndarray) -> np.ndarray:
        """Relative state-error estimate per segment on an interlaced grid."""
        X, U, sf_s = self.split(z)
        chk_states, chk_derivs, chk_ctrls, chk_tau, seg_slices = [], [], [], [], []
        pos = 0
        for k in range(self.K):
            n = int(self.orders[k])
            off = self.seg_offset[k]
            support = self.seg_nodes[k]
            Xseg = X[off:off + n + 1]
            Useg = U[off:off + n]
            chk, _ = lgr_nodes(n + 1)
            a, b = self.tau_bounds[k], self.tau_bounds[k + 1]
            dtau = b - a
            L = lagrange_matrix(support, chk)
            D = lagrange_diff_matrix(support, chk) * (2.0 / (dtau * self.sf_ref))
            Lc = lagrange_matrix(support[:n], chk)
            chk_states.append(L @ Xseg)
            chk_derivs.append(D @ Xseg)
            chk_ctrls.append(Lc @ Useg)
            chk_tau.append(a + 0.5 * dtau * (chk + 1.0))
            seg_slices.append(slice(pos, pos + n + 1))
            pos += n + 1

        Xchk = np.vstack(chk_states)
        Uchk = np.vstack(chk_ctrls)
        tau = np.concatenate(chk_tau)
        F = self._rhs_scaled(Xchk, Uchk, tau * sf_s * self.sf_ref)
        resid = np.vstack(chk_derivs) - sf_s * F

        errs = np.empty(self.K)
        for k in range(self.K):
            sl = seg_slices[k]
            Xseg = X[self.seg_offset[k]:self.seg_offset[k] + int(self.orders[k]) + 1]
            scale = 1.0 + np.max(np.abs(Xseg), axis=0)
            width = (self.tau_bounds[k + 1] - self.tau_bounds[k]) * self.sf_ref
            errs[k] = np.max(np.abs(resid[sl]) / scale * (0.5 * width))
        return errs

    # -- initial point and extraction ----------------------------------------

    def _initial_point(self, guess: Trajectory) -> np.ndarray:
        z = np.zeros(self.n_vars)
        s_nodes = self.tau_support * self.sf_ref
        cols = [np.interp(s_nodes, guess.s, guess.states[:, j]) for j in range(6)]
        cols.append(np.interp(s_nodes, guess.s, guess.m) / self.config.m0)
        cols.append(self.t0_days + np.interp(s_nodes, guess.s, guess.t) / 86400.0)
        X = np.column_stack(cols)
        z[:_STATE_DIM * self.P] = X.ravel()

        s_c = self.tau_colloc * self.sf_ref
        q = np.column_stack([np.interp(s_c, guess.s, guess.q[:, j]) for j in range(3)])
        norms = np.linalg.norm(q, axis=1)
        weak = norms < 1e-6
        q[weak] = np.array([0.0, 1.0, 0.0])
        norms[weak] = 1.0
        q /= norms[:, None]
        eta = np.clip(np.interp(s_c, guess.s, guess.eta), 0.0, 1.0)
        U = np.column_stack([0.99 * q, eta])
        z[_STATE_DIM * self.P:_STATE_DIM * self.P + _CTRL_DIM * self.C] = U.ravel()
        z[self.ix_sf] = 1.0
        return np.clip(z, self.lb, self.ub)

    def extract_trajectory(self, z: np.ndarray) -> Trajectory:
        X, U, sf_s = self.split(z)
        s = self.tau_support * sf_s * self.sf_ref
        q = U[:, :3] / np.maximum(np.linalg.norm(U[:, :3], axis=1), 1e-12)[:, None]
        q = np.vstack([q, q[-1]])
        eta = np.concatenate([U[:, 3], [U[-1, 3]]])
        t_sec = (X[:, 7] - self.t0_days) * 86400.0
        _, psi_l, _ = psi_arrays(X[:, 0], X[:, 1], X[:, 2], X[:, 3], X[:, 4],
                                 X[:, 5], s, X[:, 7] * 86400.0,
                                 self.eclipse.ephemeris, self.eclipse.model, self.consts)
        return Trajectory(
            s=s,
            states=X[:, :6].copy(),
            m=X[:, 6] * self.config.m0,
            t=t_sec,
            q=q,
            eta=eta,
            psi_l=np.asarray(psi_l),
        )


def transcribe(config: OcpConfig, target: TargetElements, prop: PropulsionConfig,
               consts: PhysicalConstants, eclipse: EclipseContext, mesh: Mesh,
               guess: Trajectory) -> tuple[NlpProblem, np.ndarray]:
    """Transcribe the transfer problem on a mesh into a sparse NLP.

    Returns the problem plus the initial point interpolated from the
    guess (thrust directions seeded at 0.99 of the guess directions to
    stay clear of the w = 0 singularity).
    """
    tr = _Transcription(config, target, prop, consts, eclipse, mesh, guess)
    nlp = NlpProblem(
        n_vars=tr.n_vars,
        n_eq=tr.n_eq,
        n_ineq=tr.n_ineq,
        lb=tr.lb,
        ub=tr.ub,
        objective=tr.objective,
        gradient=tr.gradient,
        constraints=tr.constraints,
        jacobian=tr.jacobian,
        meta={"transcription": tr},
    )
    return nlp, tr.z_guess


def defect_norm(nlp: NlpProblem, point: np.ndarray) -> float:
    """Maximum relative collocation error of a point, over all segments."""
    tr: _Transcription = nlp.meta["transcription"]
    return float(np.max(tr.segment_errors(point)))


def extract_trajectory(nlp: NlpProblem, point: np.ndarray) -> Trajectory:
    """Continuous trajectory sampled at the mesh support points."""
    tr: _Transcription = nlp.meta["transcription"]
    return tr.extract_trajectory(point)


def interpolate_point(nlp_old: NlpProblem, z_old: np.ndarray,
                      nlp_new: NlpProblem) -> np.ndarray:
    """Warm-start point for a refined mesh from a previous solution.

    States use the per-segment collocation polynomials; controls use
    the collocation-basis interpolant of each enclosing old segment.
    """
    tro: _Transcription = nlp_old.meta["transcription"]
    trn: _Transcription = nlp_new.meta["transcription"]
    Xo, Uo, sf_s = tro.split(z_old)

    def locate(tau: float) -> int:
        k = int(np.searchsorted(tro.tau_bounds, tau, side="right") - 1)
        return min(max(k, 0), tro.K - 1)

    z = np.zeros(trn.n_vars)
    for p_new in range(trn.P):
        tau = trn.tau_support[p_new]
        k = locate(tau)
        a, b = tro.tau_bounds[k], tro.tau_bounds[k + 1]
        xi = 2.0 * (tau - a) / (b - a) - 1.0
        off = tro.seg_offset[k]
        n = int(tro.orders[k])
        L = lagrange_matrix(tro.seg_nodes[k], np.array([xi]))
        z[trn.ix_state(p_new, 0):trn.ix_state(p_new, 0) + _STATE_DIM] = \
            (L @ Xo[off:off + n + 1])[0]
    for c_new in range(trn.C):
        tau = trn.tau_colloc[c_new]
        k = locate(tau)
        a, b = tro.tau_bounds[k], tro.tau_bounds[k + 1]
        xi = 2.0 * (tau - a) / (b - a) - 1.0
        off = tro.seg_offset[k]
        n = int(tro.orders[k])
        Lc = lagrange_matrix(tro.seg_nodes[k][:n], np.array([xi]))
        z[trn.ix_ctrl(c_new, 0):trn.ix_ctrl(c_new, 0) + _CTRL_DIM] = \
            (Lc @ Uo[off:off + n])[0]
        z[trn.ix_ctrl(c_new, 3)] = min(max(z[trn.ix_ctrl(c_new, 3)], 0.0), 1.0)
    z[trn.ix_sf] = sf_s
    return np.clip(z, trn.lb, trn.ub)


def write_nlp_exchange(nlp: NlpProblem, point: np.ndarray, path: str) -> None:
    """Serialize the problem at a point to the plain-text sparse format.

    Layout: a header with dimensions, variable bounds, the point, the
    objective value and gradient, constraint values, then the equality
    and inequality Jacobians as COO triplets.
    """
    ceq, cineq = nlp.constraints(point)
    Jeq, Jineq = nlp.jacobian(point)
    Jeq, Jineq = Jeq.tocoo(), Jineq.tocoo()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("lowthrust-nlp-exchange 1\n")
        fh.write(f"vars {nlp.n_vars} eq {nlp.n_eq} ineq {nlp.n_ineq}\n")
        fh.write(f"objective {nlp.objective(point):.17g}\n")
        fh.write("bounds\n")
        for lo, hi in zip(nlp.lb, nlp.ub):
            fh.write(f"{lo:.17g} {hi:.17g}\n")
        fh.write("point\n")
        for v in point:
            fh.write(f"{v:.17g}\n")
        fh.write("gradient\n")
        for v in nlp.gradient(point):
            fh.write(f"{v:.17g}\n")
        fh.write("eq_values\n")
        for v in ceq:
            fh.write(f"{v:.17g}\n")
        fh.write("ineq_values\n")
        for v in cineq:
            fh.write(f"{v:.17g}\n")
        fh.write(f"jac_eq nnz {Jeq.nnz}\n")
        for i, j, v in zip(Jeq.row, Jeq.col, Jeq.data):
            fh.write(f"{i} {j} {v:.17g}\n")
        fh.write(f"jac_ineq nnz {Jineq.nnz}\n")
        for i, j, v in zip(Jineq.row, Jineq.col, Jineq.data):
            fh.write(f"{i} {j} {v:.17g}\n")


def read_nlp_exchange(path: str) -> dict:
    """Parse a file written by :func:`write_nlp_exchange` into arrays."""
    with open(path, encoding="utf-8") as fh:
        magic = fh.readline().split()
        if magic[:1] != ["lowthrust-nlp-exchange"]:
            raise ValueError(f"{path}: not an NLP exchange file")
        dims = fh.readline().split()
        n, neq, nineq = int(dims[1]), int(dims[3]), int(dims[5])
        out: dict = {"n_vars": n, "n_eq": neq, "n_ineq": nineq}
        out["objective"] = float(fh.readline().split()[1])
        assert fh.readline().strip() == "bounds"
        bounds = np.array([[float(v) for v in fh.readline().split()] for _ in range(n)])
        out["lb"], out["ub"] = bounds[:, 0], bounds[:, 1]
        assert fh.readline().strip() == "point"
        out["point"] = np.array([float(fh.readline()) for _ in range(n)])
        assert fh.readline().strip() == "gradient"
        out["gradient"] = np.array([float(fh.readline()) for _ in range(n)])
        assert fh.readline().strip() == "eq_values"
        out["eq_values"] = np.array([float(fh.readline()) for _ in range(neq)])
        assert fh.readline().strip() == "ineq_values"
        out["ineq_values"] = np.array([float(fh.readline()) for _ in range(nineq)])
        for key in ("jac_eq", "jac_ineq"):
            head = fh.readline().split()
            assert head[0] == key
            nnz = int(head[2])
            rows = np.empty(nnz, dtype=int)
            cols = np.empty(nnz, dtype=int)
            vals = np.empty(nnz)
            for idx in range(nnz):
                i, j, v = fh.readline().split()
                rows[idx], cols[idx], vals[idx] = int(i), int(j), float(v)
            shape = (neq if key == "jac_eq" else nineq, n)
            out[key] = sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
    return out
