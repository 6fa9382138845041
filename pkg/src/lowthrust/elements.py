"""Orbital element sets and regularized variational equations.

Three representations of the osculating orbit are provided:

* classical elements (a, e, i, omega, Omega, v),
* modified equinoctial elements (p, f, g, h, k, L), nonsingular for
  circular and equatorial orbits,
* ideal elements (rho, ex, ey, hx, hy, sigma), obtained from the
  equinoctial set by normalizing the semiparameter and rotating the
  eccentricity and node vectors into the Hansen ideal frame.

The ideal anomaly s serves as the independent integration variable; the
time map is dt/ds = kappa_t.  With this regularization the normal
acceleration component influences only (hx, hy, sigma), and the rates
are independent of sigma, which keeps the dynamics sparse.

All quantities are SI (meters, seconds, radians) unless noted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi

#: Angle below which eccentricity / inclination are treated as zero when
#: converting to classical elements.
_DEGENERACY_TOL = 1e-12


@dataclass(frozen=True)
class PhysicalConstants:
    """Physical constants of the central body and environment."""

    mu: float    # gravitational parameter (m^3/s^2)
    Re: float    # Earth equatorial radius (m)
    Rs: float    # Sun radius (m)
    J2: float    # second zonal harmonic coefficient (-)
    g0: float    # standard gravity (m/s^2)

    def __post_init__(self) -> None:
        for name in ("mu", "Re", "Rs", "J2", "g0"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be nonnegative, got {getattr(self, name)}")
        for name in ("mu", "Re", "Rs", "g0"):
            if getattr(self, name) == 0.0:
                raise ValueError(f"{name} must be strictly positive")


#: Default Earth constants (Vallado values).  J2 may be set to 0.0 to
#: disable oblateness in any computation that takes a PhysicalConstants.
EARTH = PhysicalConstants(
    mu=3.986004418e14,
    Re=6378140.0,
    Rs=6.96e8,
    J2=1.08262668e-3,
    g0=9.80665,
)


@dataclass(frozen=True)
class ClassicalElements:
    """Classical orbital elements of an elliptic orbit.

    The ``circular`` / ``equatorial`` flags are set by
    :func:`equinoctial_to_classical` when the corresponding angle is
    returned by convention (omega := 0 for circular, Omega := 0 for
    equatorial) rather than determined by the orbit.
    """

    a: float        # semimajor axis (m)
    e: float        # eccentricity (-)
    i: float        # inclination (rad)
    omega: float    # argument of periapsis (rad)
    Omega: float    # right ascension of ascending node (rad)
    v: float        # true anomaly (rad)
    circular: bool = False
    equatorial: bool = False

    def __post_init__(self) -> None:
        if self.a <= 0.0:
            raise ValueError(f"semimajor axis must be positive, got {self.a}")
        if not 0.0 <= self.e < 1.0:
            raise ValueError(f"eccentricity must be in [0, 1), got {self.e}")
        if not 0.0 <= self.i <= math.pi:
            raise ValueError(f"inclination must be in [0, pi], got {self.i}")


@dataclass(frozen=True)
class EquinoctialElements:
    """Modified equinoctial elements (p, f, g, h, k, L)."""

    p: float    # semiparameter (m)
    f: float
    g: float
    h: float
    k: float
    L: float    # true longitude (rad), unwrapped

    def __post_init__(self) -> None:
        if self.p <= 0.0:
            raise ValueError(f"semiparameter must be positive, got {self.p}")
        if self.f**2 + self.g**2 >= 1.0:
            raise ValueError("f^2 + g^2 must be < 1 for an elliptic orbit")


@dataclass(frozen=True)
class IdealState:
    """Ideal elements (rho, ex, ey, hx, hy, sigma).

    sigma = L - s is the in-plane angle between the Hansen ideal frame
    and the equinoctial frame.  Both sigma and the ideal anomaly s are
    kept unwrapped so that L = sigma + s counts revolutions.
    """

    rho: float      # normalized semiparameter p/Re (-)
    ex: float
    ey: float
    hx: float
    hy: float
    sigma: float    # ideal-frame offset angle (rad), unwrapped

    def __post_init__(self) -> None:
        if self.rho <= 0.0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if self.ex**2 + self.ey**2 >= 1.0:
            raise ValueError("ex^2 + ey^2 must be < 1 for an elliptic orbit")

    def as_array(self) -> np.ndarray:
        return np.array([self.rho, self.ex, self.ey, self.hx, self.hy, self.sigma])

    @staticmethod
    def from_array(x: np.ndarray) -> "IdealState":
        return IdealState(*(float(xi) for xi in x))


@dataclass(frozen=True)
class KinematicFactors:
    """Dimensionless factors of the regularized dynamics plus kt = dt/ds (s/rad)."""

    kc: float
    ks: float
    kx: float
    ky: float
    kt: float


@dataclass(frozen=True)
class RtnAcceleration:
    """Perturbing acceleration in the radial-transverse-normal frame (m/s^2)."""

    rR: float
    rT: float
    rN: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.rR) and math.isfinite(self.rT) and math.isfinite(self.rN)):
            raise ValueError("acceleration components must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.rR, self.rT, self.rN])

    @staticmethod
    def from_array(a: np.ndarray) -> "RtnAcceleration":
        return RtnAcceleration(float(a[0]), float(a[1]), float(a[2]))


# ---------------------------------------------------------------------------
# Conversions
# ---------------------------------------------------------------------------

def classical_to_equinoctial(coe: ClassicalElements) -> EquinoctialElements:
    """Map classical elements to modified equinoctial elements.

    Args:
        coe: Classical elements with 0 <= e < 1, a > 0.

    Returns:
        EquinoctialElements.

    Raises:
        ValueError: If the inclination is at (or numerically at) pi,
            where tan(i/2) is singular.
    """
    if coe.i >= math.pi - 1e-9:
        raise ValueError("retrograde equatorial orbit (i = pi): tan(i/2) singular")
    p = coe.a * (1.0 - coe.e**2)
    lon_peri = coe.Omega + coe.omega
    t2 = math.tan(0.5 * coe.i)
    return EquinoctialElements(
        p=p,
        f=coe.e * math.cos(lon_peri),
        g=coe.e * math.sin(lon_peri),
        h=t2 * math.cos(coe.Omega),
        k=t2 * math.sin(coe.Omega),
        L=lon_peri + coe.v,
    )


def equinoctial_to_classical(mee: EquinoctialElements) -> ClassicalElements:
    """Invert the equinoctial mapping.

    For e = 0 the returned omega is 0 by convention and ``circular`` is
    flagged; for i = 0 the returned Omega is 0 and ``equatorial`` is
    flagged.  Angles are wrapped to [0, 2*pi).
    """
    e = math.hypot(mee.f, mee.g)
    tan_half_i = math.hypot(mee.h, mee.k)
    i = 2.0 * math.atan(tan_half_i)
    a = mee.p / (1.0 - e**2)

    circular = e < _DEGENERACY_TOL
    equatorial = tan_half_i < _DEGENERACY_TOL

    Omega = 0.0 if equatorial else math.atan2(mee.k, mee.h)
    lon_peri = Omega if circular else math.atan2(mee.g, mee.f)
    omega = 0.0 if circular else _wrap(lon_peri - Omega)
    v = _wrap(mee.L - lon_peri)
    return ClassicalElements(
        a=a, e=e, i=i, omega=omega, Omega=_wrap(Omega), v=v,
        circular=circular, equatorial=equatorial,
    )


def equinoctial_to_ideal(mee: EquinoctialElements, s: float, consts: PhysicalConstants = EARTH) -> IdealState:
    """Map equinoctial elements to ideal elements at ideal anomaly s.

    sigma = L - s, and the (f, g) and (h, k) vectors are rotated by
    -sigma.  The departure-frame convention is s(0) = 0, which makes
    sigma(0) = L(0) and leaves the rotated vectors coinciding with the
    equinoctial ones at the initial instant.
    """
    sigma = mee.L - s
    c, sn = math.cos(sigma), math.sin(sigma)
    return IdealState(
        rho=mee.p / consts.Re,
        ex=mee.f * c + mee.g * sn,
        ey=-mee.f * sn + mee.g * c,
        hx=mee.h * c + mee.k * sn,
        hy=-mee.h * sn + mee.k * c,
        sigma=sigma,
    )


def ideal_to_equinoctial(x: IdealState, s: float, consts: PhysicalConstants = EARTH) -> EquinoctialElements:
    """Invert :func:`equinoctial_to_ideal` (rotation by +sigma)."""
    c, sn = math.cos(x.sigma), math.sin(x.sigma)
    return EquinoctialElements(
        p=x.rho * consts.Re,
        f=x.ex * c - x.ey * sn,
        g=x.ex * sn + x.ey * c,
        h=x.hx * c - x.hy * sn,
        k=x.hx * sn + x.hy * c,
        L=x.sigma + s,
    )


# ---------------------------------------------------------------------------
# Kinematic factors and rates
# ---------------------------------------------------------------------------

def kappa_factors(rho, ex, ey, hx, hy, s, consts: PhysicalConstants = EARTH):
    """Array-aware kappa factors (kc, ks, kx, ky, kt).

    Accepts scalars or broadcastable numpy arrays; no positivity checks
    are performed here (see :func:`kinematic_factors` for the validated
    scalar interface).
    """
    cs, sn = np.cos(s), np.sin(s)
    kc = 1.0 + ex * cs + ey * sn
    ks = ex * sn - ey * cs
    kx = 0.5 * (1.0 + hx**2 - hy**2)
    ky = 0.5 * (1.0 - hx**2 + hy**2)
    kt = math.sqrt(consts.Re**3 / consts.mu) * rho**1.5 / kc**2
    return kc, ks, kx, ky, kt


def kinematic_factors(x: IdealState, s: float, consts: PhysicalConstants = EARTH) -> KinematicFactors:
    """Validated scalar kappa factors at (x, s).

    Raises:
        ValueError: If kc <= 0 (hyperbolic/degenerate state).
    """
    kc, ks, kx, ky, kt = kappa_factors(x.rho, x.ex, x.ey, x.hx, x.hy, s, consts)
    if kc <= 0.0:
        raise ValueError(f"kc = {kc} <= 0: hyperbolic or degenerate state")
    return KinematicFactors(float(kc), float(ks), float(kx), float(ky), float(kt))


def gauss_rates(coe: ClassicalElements, acc: RtnAcceleration, consts: PhysicalConstants = EARTH) -> np.ndarray:
    """Time rates of the classical elements under an RTN acceleration.

    Returns:
        Array in field order: (da, de, di, domega, dOmega, dv)/dt.

    Raises:
        ValueError: For e = 0 or i = 0 (classical singularities; use
            :func:`ideal_rates` instead).
    """
    if coe.e < _DEGENERACY_TOL:
        raise ValueError("gauss_rates singular at e = 0; use ideal_rates")
    if coe.i < _DEGENERACY_TOL:
        raise ValueError("gauss_rates singular at i = 0; use ideal_rates")

    a, e, i, v = coe.a, coe.e, coe.i, coe.v
    mu = consts.mu
    aR, aT, aN = acc.rR, acc.rT, acc.rN
    cv, sv = math.cos(v), math.sin(v)
    w = 1.0 + e * cv
    root = math.sqrt(a * (1.0 - e**2) / mu)
    u = v + coe.omega
    si = math.sin(i)

    da = 2.0 * a**2 / math.sqrt(mu * a * (1.0 - e**2)) * (e * sv * aR + w * aT)
    de = root * (sv * aR + (e + (2.0 + e * cv) * cv) / w * aT)
    di = root * math.cos(u) / w * aN
    dOm = root * math.sin(u) / (w * si) * aN
    dom = root * (-cv / e * aR + (2.0 + e * cv) * sv / (e * w) * aT
                  - math.sin(u) / (w * math.tan(i)) * aN)
    dv = (math.sqrt(mu / a**3) * w**2 / (1.0 - e**2) ** 1.5
          + root * (cv / e * aR - (2.0 + e * cv) * sv / (e * w) * aT))
    return np.array([da, de, di, dom, dOm, dv])


def ideal_rates(x: IdealState, s: float, acc: RtnAcceleration, consts: PhysicalConstants = EARTH) -> np.ndarray:
    """Time rates of the ideal elements under an RTN acceleration.

    The normal component affects only (hx, hy, sigma); the radial and
    transverse components never do.  The right-hand side does not
    depend on sigma.

    Returns:
        Array (drho, dex, dey, dhx, dhy, dsigma)/dt.
    """
    kc, ks, _, _, _ = kappa_factors(x.rho, x.ex, x.ey, x.hx, x.hy, s, consts)
    if kc <= 0.0:
        raise ValueError(f"kc = {kc} <= 0: hyperbolic or degenerate state")
    kx = 0.5 * (1.0 + x.hx**2 - x.hy**2)
    ky = 0.5 * (1.0 - x.hx**2 + x.hy**2)
    B = math.sqrt(consts.Re * x.rho / consts.mu) / kc
    cs, sn = math.cos(s), math.sin(s)
    aR, aT, aN = acc.rR, acc.rT, acc.rN

    drho = B * 2.0 * x.rho * aT
    dex = B * (kc * sn * aR + (2.0 * kc * cs + ks * sn) * aT)
    dey = B * (-kc * cs * aR + (2.0 * kc * sn - ks * cs) * aT)
    dhx = B * (x.hx * x.hy * sn + kx * cs) * aN
    dhy = B * (x.hx * x.hy * cs + ky * sn) * aN
    dsig = B * (x.hx * sn - x.hy * cs) * aN
    return np.array([drho, dex, dey, dhx, dhy, dsig])


def regularized_rates(x: IdealState, s: float, acc: RtnAcceleration,
                      consts: PhysicalConstants = EARTH) -> tuple[np.ndarray, float]:
    """s-domain rates of the ideal elements and the companion time rate.

    Returns:
        (dx/ds array of shape (6,), kt = dt/ds).
    """
    kf = kinematic_factors(x, s, consts)
    return kf.kt * ideal_rates(x, s, acc, consts), kf.kt


# ---------------------------------------------------------------------------
# Cartesian reconstruction (position from the element set, velocity from
# the standard equinoctial formulas)
# ---------------------------------------------------------------------------

def equinoctial_to_cartesian(mee: EquinoctialElements,
                             consts: PhysicalConstants = EARTH) -> tuple[np.ndarray, np.ndarray]:
    """ECI position and velocity from modified equinoctial elements."""
    p, f, g, h, k, L = mee.p, mee.f, mee.g, mee.h, mee.k, mee.L
    cL, sL = math.cos(L), math.sin(L)
    alpha2 = h**2 - k**2
    s2 = 1.0 + h**2 + k**2
    w = 1.0 + f * cL + g * sL
    r = p / w
    sqmp = math.sqrt(consts.mu / p)

    pos = np.array([
        r / s2 * (cL + alpha2 * cL + 2.0 * h * k * sL),
        r / s2 * (sL - alpha2 * sL + 2.0 * h * k * cL),
        2.0 * r / s2 * (h * sL - k * cL),
    ])
    vel = np.array([
        -sqmp / s2 * (sL + alpha2 * sL - 2.0 * h * k * cL + g - 2.0 * f * h * k + alpha2 * g),
        -sqmp / s2 * (-cL + alpha2 * cL + 2.0 * h * k * sL - f + 2.0 * g * h * k + alpha2 * f),
        2.0 * sqmp / s2 * (h * cL + k * sL + f * h + g * k),
    ])
    return pos, vel


def ideal_to_cartesian(x: IdealState, s: float,
                       consts: PhysicalConstants = EARTH) -> tuple[np.ndarray, np.ndarray]:
    """ECI position and velocity of an ideal state at anomaly s."""
    return equinoctial_to_cartesian(ideal_to_equinoctial(x, s, consts), consts)


def _wrap(angle: float) -> float:
    """Wrap an angle to [0, 2*pi)."""
    return angle % TWO_PI
