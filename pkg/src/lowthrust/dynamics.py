"""Force models and the full regularized state derivative.

The state derivative in the ideal anomaly s stacks the six ideal-element
rates x' = G(x, s) (rho_J2 + u), the mass flow m', and the time map
t' = kappa_t.  The control acceleration is u = (Tmax/m) * psi_l * eta * q
with q a unit vector in RTN and eta the commanded throttle; psi_l is the
smoothed shadow factor supplied by the eclipse module.

Array-aware kernels (``j2_rtn``, ``influence_matrix``, ``rhs_arrays``)
operate on broadcastable numpy arrays and are the single source of truth;
the dataclass operations wrap them for scalar use.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .elements import (
    EARTH,
    IdealState,
    PhysicalConstants,
    RtnAcceleration,
    kappa_factors,
)


@dataclass(frozen=True)
class PropulsionConfig:
    """Thruster parameters."""

    Tmax: float    # maximum deliverable thrust (N)
    Isp: float     # specific impulse (s)

    def __post_init__(self) -> None:
        if self.Tmax < 0.0:
            raise ValueError(f"Tmax must be nonnegative, got {self.Tmax}")
        if self.Isp <= 0.0:
            raise ValueError(f"Isp must be positive, got {self.Isp}")


@dataclass(frozen=True)
class SpacecraftState:
    """Ideal elements augmented with mass and elapsed time."""

    x: IdealState
    m: float    # mass (kg)
    t: float    # time since t0 (s)

    def __post_init__(self) -> None:
        if self.m <= 0.0:
            raise ValueError(f"mass must be positive, got {self.m}")

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.x.as_array(), [self.m, self.t]])

    @staticmethod
    def from_array(y: np.ndarray) -> "SpacecraftState":
        return SpacecraftState(IdealState.from_array(y[:6]), float(y[6]), float(y[7]))


@dataclass(frozen=True)
class ControlSample:
    """Throttle and thrust direction at one instant.

    zeta = psi_l * eta is the effective throttle after the eclipse cut.
    """

    eta: float
    q: tuple[float, float, float]
    zeta: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must be in [0, 1], got {self.eta}")
        if not 0.0 <= self.zeta <= self.eta + 1e-15:
            raise ValueError(f"zeta must be in [0, eta], got {self.zeta}")
        n = math.sqrt(self.q[0] ** 2 + self.q[1] ** 2 + self.q[2] ** 2)
        if abs(n - 1.0) > 1e-12:
            raise ValueError(f"q must be unit norm to 1e-12, got |q| = {n}")

    def q_array(self) -> np.ndarray:
        return np.array(self.q)


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------

def j2_rtn(rho, ex, ey, hx, hy, s, consts: PhysicalConstants = EARTH) -> np.ndarray:
    """Oblateness acceleration in RTN, array-aware.

    Returns an array of shape (..., 3).
    """
    cs, sn = np.cos(s), np.sin(s)
    kc = 1.0 + ex * cs + ey * sn
    w2 = (1.0 + hx**2 + hy**2) ** 2
    A = hx * sn - hy * cs
    B = hx * cs + hy * sn
    pref = -1.5 * consts.mu * kc**4 * consts.J2 / (consts.Re**2 * rho**4)
    out = np.stack([
        pref * (1.0 - 12.0 * A**2 / w2),
        pref * (8.0 * A * B / w2),
        pref * (4.0 * A * (1.0 - hx**2 - hy**2) / w2),
    ], axis=-1)
    return out


def influence_matrix(rho, ex, ey, hx, hy, s, consts: PhysicalConstants = EARTH) -> np.ndarray:
    """Control influence matrix G mapping RTN acceleration to d(x)/ds.

    Returns an array of shape (..., 6, 3) with the structural zero
    pattern of the regularized variational equations: the radial and
    transverse columns are zero in the (hx, hy, sigma) rows and the
    normal column is zero in the (rho, ex, ey) rows.
    """
    rho, ex, ey, hx, hy, s = np.broadcast_arrays(
        np.asarray(rho, dtype=float), ex, ey, hx, hy, s)
    cs, sn = np.cos(s), np.sin(s)
    kc = 1.0 + ex * cs + ey * sn
    ks = ex * sn - ey * cs
    kx = 0.5 * (1.0 + hx**2 - hy**2)
    ky = 0.5 * (1.0 - hx**2 + hy**2)
    pref = consts.Re**2 * rho**2 / (consts.mu * kc**3)

    G = np.zeros(rho.shape + (6, 3))
    G[..., 0, 1] = pref * 2.0 * rho
    G[..., 1, 0] = pref * kc * sn
    G[..., 1, 1] = pref * (2.0 * kc * cs + ks * sn)
    G[..., 2, 0] = -pref * kc * cs
    G[..., 2, 1] = pref * (2.0 * kc * sn - ks * cs)
    G[..., 3, 2] = pref * (hx * hy * sn + kx * cs)
    G[..., 4, 2] = pref * (hx * hy * cs + ky * sn)
    G[..., 5, 2] = pref * (hx * sn - hy * cs)
    return G


def rhs_arrays(rho, ex, ey, hx, hy, s, m, eta, qR, qT, qN, psi_l,
               prop: PropulsionConfig, consts: PhysicalConstants = EARTH) -> np.ndarray:
    """Full regularized derivative, array-aware.

    Returns an array of shape (..., 8): the six ideal-element rates,
    dm/ds, and dt/ds.  All inputs broadcast together; ``m`` is the
    physical mass in kg and ``psi_l`` the smoothed shadow factor.
    """
    rho, ex, ey, hx, hy, s, m, eta, qR, qT, qN, psi_l = np.broadcast_arrays(
        np.asarray(rho, dtype=float), ex, ey, hx, hy, s, m, eta, qR, qT, qN, psi_l)
    _, _, _, _, kt = kappa_factors(rho, ex, ey, hx, hy, s, consts)
    G = influence_matrix(rho, ex, ey, hx, hy, s, consts)
    acc = j2_rtn(rho, ex, ey, hx, hy, s, consts)
    zeta = psi_l * eta
    a_thr = (prop.Tmax / m) * zeta
    acc = acc + np.stack([a_thr * qR, a_thr * qT, a_thr * qN], axis=-1)
    dx = kt[..., None] * np.einsum("...ij,...j->...i", G, acc)
    dm = -kt * prop.Tmax / (consts.g0 * prop.Isp) * zeta
    return np.concatenate([dx, dm[..., None], kt[..., None]], axis=-1)


# ---------------------------------------------------------------------------
# Scalar operations
# ---------------------------------------------------------------------------

def j2_acceleration(x: IdealState, s: float, consts: PhysicalConstants = EARTH) -> RtnAcceleration:
    """Oblateness acceleration in RTN at (x, s)."""
    return RtnAcceleration.from_array(j2_rtn(x.rho, x.ex, x.ey, x.hx, x.hy, s, consts))


def control_influence(x: IdealState, s: float, consts: PhysicalConstants = EARTH) -> np.ndarray:
    """6x3 influence matrix G at (x, s); G @ acc gives d(x)/ds."""
    kc = 1.0 + x.ex * math.cos(s) + x.ey * math.sin(s)
    if kc <= 0.0:
        raise ValueError(f"kc = {kc} <= 0: hyperbolic or degenerate state")
    return influence_matrix(x.rho, x.ex, x.ey, x.hx, x.hy, s, consts)


def thrust_acceleration(m: float, zeta: float, q: np.ndarray,
                        prop: PropulsionConfig) -> RtnAcceleration:
    """Thrust acceleration u = (Tmax/m) * zeta * q.

    Raises:
        ValueError: If m <= 0, zeta outside [0, 1], or q not unit norm.
    """
    if m <= 0.0:
        raise ValueError(f"mass must be positive, got {m}")
    if not 0.0 <= zeta <= 1.0:
        raise ValueError(f"zeta must be in [0, 1], got {zeta}")
    q = np.asarray(q, dtype=float)
    n = float(np.linalg.norm(q))
    if abs(n - 1.0) > 1e-9:
        raise ValueError(f"q must be unit norm, got |q| = {n}")
    u = prop.Tmax / m * zeta * q
    return RtnAcceleration(float(u[0]), float(u[1]), float(u[2]))


def mass_rate(x: IdealState, s: float, eta: float, psi_l: float,
              prop: PropulsionConfig, consts: PhysicalConstants = EARTH) -> float:
    """Regularized mass flow dm/ds = -kt * Tmax/(g0 Isp) * psi_l * eta."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must be in [0, 1], got {eta}")
    _, _, _, _, kt = kappa_factors(x.rho, x.ex, x.ey, x.hx, x.hy, s, consts)
    return -float(kt) * prop.Tmax / (consts.g0 * prop.Isp) * psi_l * eta


def full_rhs(state: SpacecraftState, s: float, ctl: ControlSample, psi_l: float,
             prop: PropulsionConfig, consts: PhysicalConstants = EARTH) -> np.ndarray:
    """Derivative of (x, m, t) with respect to s.

    Stacks the ideal-element rates driven by J2 plus thrust, the mass
    flow, and the time map.  Returns an array of shape (8,).
    """
    x = state.x
    return rhs_arrays(
        x.rho, x.ex, x.ey, x.hx, x.hy, s, state.m,
        ctl.eta, ctl.q[0], ctl.q[1], ctl.q[2], psi_l, prop, consts,
    )
