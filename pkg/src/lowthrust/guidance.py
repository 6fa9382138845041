"""Lyapunov feedback guidance and closed-loop trajectory generation.

The guidance law steers toward a target orbit by descending a Lyapunov
function V that measures, in delta-v units, the deviation in semimajor
axis, relative eccentricity vector, and relative inclination.  The
thrust direction opposes the sensitivity vector h of V' = h^T u, and an
efficiency factor decides thrust versus coast by comparing the current
descent gain against its extrema predicted over the next revolution
(sweeping the anomaly with the state frozen, eclipsed arcs excluded).

The closed-loop propagation of the resulting policy produces the
initial trajectory guess for the collocation step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .dynamics import PropulsionConfig, influence_matrix, rhs_arrays
from .eclipse import EclipseContext, psi_arrays
from .elements import EARTH, IdealState, PhysicalConstants, kappa_factors
from .ocp import TargetElements, boundary_residual
from .trajectory import Trajectory

if TYPE_CHECKING:
    from .scenario import ScenarioConfig

TWO_PI = 2.0 * math.pi

_FD_STEP = 1e-7
_PLANE_TOL = 1e-12


class GuidanceError(RuntimeError):
    """Raised when the closed loop fails to reach the target orbit."""

    def __init__(self, message: str, final_V: float, final_residual: float):
        super().__init__(message)
        self.final_V = final_V
        self.final_residual = final_residual


@dataclass(frozen=True)
class RelativeElements:
    """Geometry of the controlled orbit relative to the target.

    lambda1/lambda2 are the in-plane angles from the mutual node line
    to the target and controlled eccentricity vectors; evec is the
    relative eccentricity 2-vector built from them.  a_target is kept
    for the Lyapunov evaluation.
    """

    a: float            # controlled semimajor axis (m)
    e: float            # controlled eccentricity (-)
    gamma: float        # relative inclination (rad)
    lambda1: float      # target periapsis angle from the node line (rad)
    lambda2: float      # controlled periapsis angle from the node line (rad)
    evec: tuple[float, float]
    a_target: float     # target semimajor axis (m)


@dataclass(frozen=True)
class GuidanceWeights:
    """Lyapunov weights on the unit sphere plus the coasting threshold."""

    phi_az: float
    phi_el: float
    ka: float
    ke: float
    kgamma: float
    xi_cut: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.xi_cut <= 1.0:
            raise ValueError(f"xi_cut must be in [0, 1], got {self.xi_cut}")
        if min(self.ka, self.ke, self.kgamma) < 0.0:
            raise ValueError("weights must be nonnegative")
        norm = self.ka**2 + self.ke**2 + self.kgamma**2
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"weights must have unit norm, got |k|^2 = {norm}")

    @staticmethod
    def from_angles(phi_az: float, phi_el: float, xi_cut: float = 0.0) -> "GuidanceWeights":
        ka, ke, kgamma = weights_from_angles(phi_az, phi_el)
        return GuidanceWeights(phi_az, phi_el, ka, ke, kgamma, xi_cut)


@dataclass(frozen=True)
class GuidanceSample:
    """Lyapunov diagnostics at one instant."""

    V: float
    h: tuple[float, float, float]
    xi: float
    hmax: float
    hmin: float


def weights_from_angles(phi_az: float, phi_el: float) -> tuple[float, float, float]:
    """Spherical parametrization of the weight triple on the unit sphere."""
    if not 0.0 <= phi_az <= math.pi / 2 or not 0.0 <= phi_el <= math.pi / 2:
        raise ValueError("tuning angles must lie in [0, pi/2]")
    return (
        math.cos(phi_az) * math.cos(phi_el),
        math.sin(phi_az) * math.cos(phi_el),
        math.sin(phi_el),
    )


# ---------------------------------------------------------------------------
# Target geometry and the Lyapunov kernel
# ---------------------------------------------------------------------------

class _TargetGeometry:
    """Precomputed ECI geometry of the target orbit."""

    def __init__(self, zbar: TargetElements, consts: PhysicalConstants):
        pbar, fbar, gbar, hbar, kbar = zbar.zbar
        self.pbar = pbar
        self.ebar = math.hypot(fbar, gbar)
        self.abar = pbar / (1.0 - self.ebar**2)
        s2 = 1.0 + hbar**2 + kbar**2
        self.w_t = np.array([2.0 * kbar, -2.0 * hbar, 1.0 - hbar**2 - kbar**2]) / s2
        f_basis = np.array([1.0 + hbar**2 - kbar**2, 2.0 * hbar * kbar, -2.0 * kbar]) / s2
        g_basis = np.array([2.0 * hbar * kbar, 1.0 - hbar**2 + kbar**2, 2.0 * hbar]) / s2
        self.evec_t = fbar * f_basis + gbar * g_basis
        # Reference line for coplanar orbits: target apsidal direction,
        # else target node line, else the inertial x axis.
        if self.ebar > _PLANE_TOL:
            self.fallback = self.evec_t / self.ebar
        elif math.hypot(hbar, kbar) > _PLANE_TOL:
            node = np.array([hbar, kbar, 0.0])
            self.fallback = node / np.linalg.norm(node)
        else:
            self.fallback = np.array([1.0, 0.0, 0.0])


def _controlled_geometry(states: np.ndarray, consts: PhysicalConstants):
    """ECI orbit geometry for a batch of ideal states, shape (..., 6)."""
    rho, ex, ey, hx, hy, sigma = np.moveaxis(np.asarray(states, dtype=float), -1, 0)
    cs, sn = np.cos(sigma), np.sin(sigma)
    f = ex * cs - ey * sn
    g = ex * sn + ey * cs
    h = hx * cs - hy * sn
    k = hx * sn + hy * cs
    p = rho * consts.Re
    e2 = f**2 + g**2
    a = p / (1.0 - e2)
    s2 = 1.0 + h**2 + k**2
    w_c = np.stack([2.0 * k, -2.0 * h, 1.0 - h**2 - k**2], axis=-1) / s2[..., None]
    f_basis = np.stack([1.0 + h**2 - k**2, 2.0 * h * k, -2.0 * k], axis=-1) / s2[..., None]
    g_basis = np.stack([2.0 * h * k, 1.0 - h**2 + k**2, 2.0 * h], axis=-1) / s2[..., None]
    evec_c = f[..., None] * f_basis + g[..., None] * g_basis
    return p, np.sqrt(e2), a, w_c, evec_c


def _relative_geometry(states: np.ndarray, target: _TargetGeometry, consts: PhysicalConstants):
    """Batched (p, a, cos gamma, |evec|^2, e*cos/sin lambda terms)."""
    p, e, a, w_c, evec_c = _controlled_geometry(states, consts)
    cos_g = np.clip(np.einsum("...i,i->...", w_c, target.w_t), -1.0, 1.0)
    n_raw = np.cross(np.broadcast_to(target.w_t, w_c.shape), w_c)
    sin_g = np.linalg.norm(n_raw, axis=-1)
    safe = np.maximum(sin_g, _PLANE_TOL)[..., None]
    n_hat = np.where(sin_g[..., None] > _PLANE_TOL, n_raw / safe, target.fallback)

    e_cos2 = np.einsum("...i,...i->...", n_hat, evec_c)
    e_sin2 = np.einsum("...i,...i->...", w_c, np.cross(n_hat, evec_c))
    e_cos1 = np.einsum("...i,i->...", n_hat, target.evec_t)
    e_sin1 = np.einsum("...i,i->...", np.cross(n_hat, np.broadcast_to(target.evec_t, n_hat.shape)), target.w_t)
    # note: e_sin1 = w_t . (n_hat x evec_t) = (evec_t x w_t) . n_hat
    erel2 = (e_cos2 - e_cos1) ** 2 + (e_sin2 - e_sin1) ** 2
    return p, e, a, cos_g, erel2, (e_cos1, e_sin1, e_cos2, e_sin2)


def _lyapunov_value_arrays(states: np.ndarray, target: _TargetGeometry,
                           ka: float, ke: float, kgamma: float,
                           consts: PhysicalConstants) -> np.ndarray:
    """Batched Lyapunov function over ideal states, shape (...,)."""
    p, _, a, cos_g, erel2, _ = _relative_geometry(states, target, consts)
    tan2_half = (1.0 - cos_g) / (1.0 + cos_g)
    term_a = 0.5 * ka * np.sqrt(consts.mu / target.abar) * (np.sqrt(target.abar / a) - 1.0) ** 2
    term_p = np.sqrt(consts.mu / p) * (0.5 * ke * erel2 + kgamma * tan2_half)
    return term_a + term_p


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def relative_elements(x: IdealState, s: float, zbar: TargetElements,
                      consts: PhysicalConstants = EARTH) -> RelativeElements:
    """Relative orbit geometry between the controlled and target orbits.

    gamma is the angle between the orbit normals; lambda1/lambda2 are
    signed in-plane angles from the mutual node line (target normal
    crossed with controlled normal) to each eccentricity vector.  For
    coplanar orbits the target apsidal (or nodal) direction replaces
    the node line.
    """
    target = _TargetGeometry(zbar, consts)
    state = x.as_array()[None, :]
    p, e, a, cos_g, erel2, angles = _relative_geometry(state, target, consts)
    e_cos1, e_sin1, e_cos2, e_sin2 = (float(v[0]) for v in angles)
    e_val = float(e[0])
    lambda1 = math.atan2(e_sin1, e_cos1) if target.ebar > _PLANE_TOL else 0.0
    lambda2 = math.atan2(e_sin2, e_cos2) if e_val > _PLANE_TOL else 0.0
    return RelativeElements(
        a=float(a[0]),
        e=e_val,
        gamma=math.acos(float(cos_g[0])),
        lambda1=lambda1,
        lambda2=lambda2,
        evec=(e_cos2 - e_cos1, e_sin2 - e_sin1),
        a_target=target.abar,
    )


def lyapunov_value(y: RelativeElements, w: GuidanceWeights, p: float,
                   consts: PhysicalConstants = EARTH) -> float:
    """Lyapunov deviation measure in m/s.

    Zero exactly when the controlled orbit coincides with the target
    (for strictly positive weights).

    Raises:
        ValueError: If gamma = pi (tan singular) or a, p nonpositive.
    """
    if y.a <= 0.0 or p <= 0.0:
        raise ValueError("semimajor axis and semiparameter must be positive")
    if y.gamma >= math.pi - 1e-12:
        raise ValueError("gamma = pi: antiparallel orbit planes are not supported")
    term_a = 0.5 * w.ka * math.sqrt(consts.mu / y.a_target) \
        * (math.sqrt(y.a_target / y.a) - 1.0) ** 2
    erel2 = y.evec[0] ** 2 + y.evec[1] ** 2
    term_p = math.sqrt(consts.mu / p) * (
        0.5 * w.ke * erel2 + w.kgamma * math.tan(0.5 * y.gamma) ** 2)
    return term_a + term_p


def lyapunov_gradient(x: IdealState, zbar: TargetElements, w: GuidanceWeights,
                      consts: PhysicalConstants = EARTH) -> np.ndarray:
    """Gradient of V with respect to the six ideal elements.

    Central finite differences with per-component step 1e-7*(1+|x_i|);
    the 12 perturbed evaluations run as one batch.
    """
    target = _TargetGeometry(zbar, consts)
    return _lyapunov_gradient(x.as_array(), target, w, consts)


def _lyapunov_gradient(x6: np.ndarray, target: _TargetGeometry, w: GuidanceWeights,
                       consts: PhysicalConstants) -> np.ndarray:
    steps = _FD_STEP * (1.0 + np.abs(x6))
    batch = np.repeat(x6[None, :], 12, axis=0)
    for j in range(6):
        batch[2 * j, j] += steps[j]
        batch[2 * j + 1, j] -= steps[j]
    vals = _lyapunov_value_arrays(batch, target, w.ka, w.ke, w.kgamma, consts)
    return (vals[0::2] - vals[1::2]) / (2.0 * steps)


def lyapunov_h(x: IdealState, s: float, zbar: TargetElements, w: GuidanceWeights,
               consts: PhysicalConstants = EARTH) -> np.ndarray:
    """Sensitivity vector h with V' = h^T u for any RTN acceleration u."""
    grad = lyapunov_gradient(x, zbar, w, consts)
    G = influence_matrix(x.rho, x.ex, x.ey, x.hx, x.hy, s, consts)
    return G.T @ grad


def thrust_direction(h: np.ndarray) -> np.ndarray:
    """Unit thrust direction q = -h/|h| opposing the sensitivity vector.

    Raises:
        ValueError: If |h| = 0 (direction undefined; caller must coast).
    """
    h = np.asarray(h, dtype=float)
    n = float(np.linalg.norm(h))
    if n == 0.0:
        raise ValueError("h = 0: thrust direction undefined, coast instead")
    return -h / n


def throttle(xi: float, xi_cut: float, psi_l: float) -> float:
    """Coasting rule: psi_l when the efficiency clears the cut, else 0."""
    return psi_l if xi >= xi_cut else 0.0


def efficiency(x: IdealState, s: float, zbar: TargetElements, w: GuidanceWeights,
               eclipse: EclipseContext | None, consts: PhysicalConstants = EARTH,
               t: float = 0.0, sweep_samples: int = 360) -> GuidanceSample:
    """Thrusting efficiency from a one-revolution gain sweep.

    The gain |h|/kappa_t is swept over [s, s + 2*pi] with the state
    (and mass) frozen; samples falling in eclipse are discarded before
    taking the extrema.  The efficiency is clamped to [0, 1] and set to
    1 when the gain is uniform.
    """
    target = _TargetGeometry(zbar, consts)
    grad = _lyapunov_gradient(x.as_array(), target, w, consts)
    tau = s + np.linspace(0.0, TWO_PI, sweep_samples, endpoint=False)
    gain, t_grid = _gain_sweep(x, tau, grad, consts, t)

    if eclipse is not None and eclipse.model.enabled:
        psi, _, _ = psi_arrays(x.rho, x.ex, x.ey, x.hx, x.hy, x.sigma,
                               tau, t_grid, eclipse.ephemeris, eclipse.model, consts)
        mask = psi > 0.5
        lit = gain[mask] if np.any(mask) else gain
    else:
        lit = gain
    hmax = float(np.max(lit))
    hmin = float(np.min(lit))
    current = float(gain[0])
    if hmax - hmin <= 1e-15 * max(1.0, hmax):
        xi = 1.0
    else:
        xi = min(1.0, max(0.0, (current - hmin) / (hmax - hmin)))

    G = influence_matrix(x.rho, x.ex, x.ey, x.hx, x.hy, s, consts)
    h = G.T @ grad
    V = float(_lyapunov_value_arrays(x.as_array()[None, :], target,
                                     w.ka, w.ke, w.kgamma, consts)[0])
    return GuidanceSample(V=V, h=tuple(h), xi=xi, hmax=hmax, hmin=hmin)


def _gain_sweep(x: IdealState, tau: np.ndarray, grad: np.ndarray,
                consts: PhysicalConstants, t: float):
    """|h|/kappa_t over the anomaly grid, plus the predicted times."""
    G = influence_matrix(x.rho, x.ex, x.ey, x.hx, x.hy, tau, consts)
    h = np.einsum("nij,i->nj", G, grad)
    _, _, _, _, kt = kappa_factors(x.rho, x.ex, x.ey, x.hx, x.hy, tau, consts)
    gain = np.linalg.norm(h, axis=-1) / kt
    dtau = tau[1] - tau[0] if len(tau) > 1 else 0.0
    t_grid = t + np.concatenate([[0.0], np.cumsum(0.5 * (kt[1:] + kt[:-1]) * dtau)])
    return gain, t_grid


# ---------------------------------------------------------------------------
# Closed-loop propagation
# ---------------------------------------------------------------------------

def propagate_guidance(scenario: "ScenarioConfig",
                       weights: GuidanceWeights | None = None,
                       stop_tol: float | None = None,
                       max_s: float | None = None) -> Trajectory:
    """Propagate the feedback policy until the target orbit is matched.

    Integration is fixed-step RK4 in the ideal anomaly with the control
    held over each step.  Termination occurs when the nondimensional
    boundary residual norm drops below ``stop_tol``.

    Raises:
        GuidanceError: If the residual does not converge within
            ``max_s`` (the final Lyapunov value is attached).
    """
    consts = scenario.constants
    prop = scenario.propulsion
    w = weights if weights is not None else scenario.guidance_weights()
    stop = stop_tol if stop_tol is not None else scenario.guidance.stop_tol
    s_max = max_s if max_s is not None else TWO_PI * scenario.guidance.max_revolutions
    zbar = scenario.target_vector()
    target = _TargetGeometry(zbar, consts)
    eph = scenario.sun_ephemeris()
    model = scenario.eclipse
    steps_per_rev = scenario.guidance.steps_per_rev
    sweep_n = scenario.guidance.sweep_samples
    ds = TWO_PI / steps_per_rev

    y = np.concatenate([scenario.initial_ideal_state().as_array(),
                        [scenario.m0, 0.0]])
    s = 0.0
    rec: dict[str, list] = {key: [] for key in
                            ("s", "state", "m", "t", "q", "eta", "psi", "psi_l", "xi", "V")}

    converged = False
    n_max = int(math.ceil(s_max / ds))
    residual = math.inf
    V = math.inf
    for _ in range(n_max):
        x = IdealState.from_array(y[:6])
        psi, psi_l, _ = (float(v) for v in psi_arrays(
            x.rho, x.ex, x.ey, x.hx, x.hy, x.sigma, s, y[7], eph, model, consts))

        grad = _lyapunov_gradient(y[:6], target, w, consts)
        tau = s + np.linspace(0.0, TWO_PI, sweep_n, endpoint=False)
        gain, t_grid = _gain_sweep(x, tau, grad, consts, y[7])
        if model.enabled:
            psi_sweep, _, _ = psi_arrays(x.rho, x.ex, x.ey, x.hx, x.hy, x.sigma,
                                         tau, t_grid, eph, model, consts)
            lit = gain[psi_sweep > 0.5]
            if lit.size == 0:
                lit = gain
        else:
            lit = gain
        hmax, hmin = float(np.max(lit)), float(np.min(lit))
        current = float(gain[0])
        if hmax - hmin <= 1e-15 * max(1.0, hmax):
            xi = 1.0
        else:
            xi = min(1.0, max(0.0, (current - hmin) / (hmax - hmin)))

        G = influence_matrix(x.rho, x.ex, x.ey, x.hx, x.hy, s, consts)
        h = G.T @ grad
        hnorm = float(np.linalg.norm(h))
        if hnorm > 0.0:
            q = -h / hnorm
            eta = throttle(xi, w.xi_cut, psi_l)
        else:
            q = np.zeros(3)
            eta = 0.0
        V = float(_lyapunov_value_arrays(y[None, :6], target,
                                         w.ka, w.ke, w.kgamma, consts)[0])

        rec["s"].append(s)
        rec["state"].append(y[:6].copy())
        rec["m"].append(y[6])
        rec["t"].append(y[7])
        rec["q"].append(q.copy())
        rec["eta"].append(eta)
        rec["psi"].append(psi)
        rec["psi_l"].append(psi_l)
        rec["xi"].append(xi)
        rec["V"].append(V)

        y = _rk4_step(y, s, ds, eta, q, psi_l, prop, consts)
        s += ds

        residual = float(np.linalg.norm(boundary_residual(
            IdealState.from_array(y[:6]), zbar)))
        if residual < stop:
            converged = True
            break

    if not converged:
        raise GuidanceError(
            f"guidance did not converge within s = {s_max:.1f} rad "
            f"(residual {residual:.3e}, V {V:.3e} m/s)",
            final_V=V, final_residual=residual)

    # terminal sample (coasting annotation)
    x = IdealState.from_array(y[:6])
    psi, psi_l, _ = (float(v) for v in psi_arrays(
        x.rho, x.ex, x.ey, x.hx, x.hy, x.sigma, s, y[7], eph, model, consts))
    V = float(_lyapunov_value_arrays(y[None, :6], target,
                                     w.ka, w.ke, w.kgamma, consts)[0])
    rec["s"].append(s)
    rec["state"].append(y[:6].copy())
    rec["m"].append(y[6])
    rec["t"].append(y[7])
    rec["q"].append(np.zeros(3))
    rec["eta"].append(0.0)
    rec["psi"].append(psi)
    rec["psi_l"].append(psi_l)
    rec["xi"].append(1.0)
    rec["V"].append(V)

    return Trajectory(
        s=np.array(rec["s"]),
        states=np.array(rec["state"]),
        m=np.array(rec["m"]),
        t=np.array(rec["t"]),
        q=np.array(rec["q"]),
        eta=np.array(rec["eta"]),
        psi_l=np.array(rec["psi_l"]),
        psi=np.array(rec["psi"]),
        xi=np.array(rec["xi"]),
        V=np.array(rec["V"]),
    )


def _rk4_step(y: np.ndarray, s: float, ds: float, eta: float, q: np.ndarray,
              psi_l: float, prop: PropulsionConfig, consts: PhysicalConstants) -> np.ndarray:
    def f(yy: np.ndarray, ss: float) -> np.ndarray:
        return rhs_arrays(yy[0], yy[1], yy[2], yy[3], yy[4], ss, yy[6],
                          eta, q[0], q[1], q[2], psi_l, prop, consts)

    k1 = f(y, s)
    k2 = f(y + 0.5 * ds * k1, s + 0.5 * ds)
    k3 = f(y + 0.5 * ds * k2, s + 0.5 * ds)
    k4 = f(y + ds * k3, s + ds)
    return y + ds / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
