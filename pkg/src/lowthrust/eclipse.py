"""Sun ephemeris, conical shadow geometry, and smoothed eclipsing.

The binary shadow function is 0 when the Earth-Sun separation angle seen
from the spacecraft drops below the sum of the apparent Earth and Sun
angular radii, and 1 otherwise.  For optimization the step is replaced
by a logistic in the penetration depth ell = theta_e + theta_s -
theta_es, with an assignable sharpness gain c.

Solar positions come from a low-precision analytic ephemeris (mean
element almanac polynomials, ~0.01 deg in longitude) or, optionally,
from a plain-text table "JD x y z" in meters with linear interpolation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .elements import EARTH, IdealState, PhysicalConstants

_AU = 1.495978707e11        # astronomical unit (m)
_J2000 = 2451545.0          # Julian date of the J2000 epoch
_OBLIQUITY = math.radians(23.439)

#: Saturation threshold for the logistic exponent.
_EXP_CLIP = 700.0


@dataclass(frozen=True)
class ShadowGeometry:
    """Apparent angles of the conical shadow test (rad)."""

    theta_es: float    # Earth-Sun separation seen from the spacecraft
    theta_e: float     # apparent Earth angular radius
    theta_s: float     # apparent Sun angular radius

    @property
    def ell(self) -> float:
        """Shadow penetration theta_e + theta_s - theta_es (rad)."""
        return self.theta_e + self.theta_s - self.theta_es


@dataclass(frozen=True)
class EclipseModel:
    """Smoothing gain and on/off switch for eclipse effects."""

    c: float = 298.78
    enabled: bool = True

    def __post_init__(self) -> None:
        if self.c <= 0.0:
            raise ValueError(f"smoothing gain c must be positive, got {self.c}")


@dataclass(frozen=True)
class EclipseContext:
    """Eclipse model plus solar ephemeris, bundled for shadow evaluation."""

    model: EclipseModel
    ephemeris: "SunEphemeris"


@dataclass(frozen=True, eq=False)
class SunEphemeris:
    """Solar position source anchored at Julian date JD0.

    If ``table_jd``/``table_xyz`` are set, positions are linearly
    interpolated from the table; otherwise the analytic almanac model
    is evaluated.  Times are seconds since JD0.
    """

    JD0: float
    obliquity: float = _OBLIQUITY
    table_jd: np.ndarray | None = field(default=None, repr=False)
    table_xyz: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.JD0 <= 2.4e6:
            raise ValueError(f"JD0 must be a Julian date (> 2.4e6), got {self.JD0}")


def load_ephemeris_table(path: str, JD0: float) -> SunEphemeris:
    """Read a solar ephemeris table: one record per line "JD x y z" (m).

    Raises:
        ValueError: On malformed records or non-monotone Julian dates.
    """
    jds: list[float] = []
    xyz: list[list[float]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split()
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 'JD x y z', got {text!r}")
            try:
                vals = [float(p) for p in parts]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            jds.append(vals[0])
            xyz.append(vals[1:])
    if len(jds) < 2:
        raise ValueError(f"{path}: ephemeris table needs at least two records")
    jd_arr = np.array(jds)
    if np.any(np.diff(jd_arr) <= 0.0):
        raise ValueError(f"{path}: Julian dates must be strictly increasing")
    return SunEphemeris(JD0=JD0, table_jd=jd_arr, table_xyz=np.array(xyz))


def sun_position(t, eph: SunEphemeris) -> np.ndarray:
    """Geocentric solar position in the equatorial inertial frame (m).

    Array-aware in ``t`` (seconds since transfer start); returns shape
    (..., 3).
    """
    t = np.asarray(t, dtype=float)
    jd = eph.JD0 + t / 86400.0
    if eph.table_jd is not None:
        x = np.interp(jd, eph.table_jd, eph.table_xyz[:, 0])
        y = np.interp(jd, eph.table_jd, eph.table_xyz[:, 1])
        z = np.interp(jd, eph.table_jd, eph.table_xyz[:, 2])
        return np.stack([x, y, z], axis=-1)

    n = jd - _J2000
    mean_lon = np.radians((280.460 + 0.9856474 * n) % 360.0)
    mean_anom = np.radians((357.528 + 0.9856003 * n) % 360.0)
    ecl_lon = mean_lon + np.radians(1.915) * np.sin(mean_anom) \
        + np.radians(0.020) * np.sin(2.0 * mean_anom)
    r = (1.00014 - 0.01671 * np.cos(mean_anom) - 0.00014 * np.cos(2.0 * mean_anom)) * _AU
    ce, se = math.cos(eph.obliquity), math.sin(eph.obliquity)
    return np.stack([
        r * np.cos(ecl_lon),
        r * ce * np.sin(ecl_lon),
        r * se * np.sin(ecl_lon),
    ], axis=-1)


def sat_earth_arrays(rho, ex, ey, hx, hy, sigma, s,
                     consts: PhysicalConstants = EARTH) -> np.ndarray:
    """Spacecraft-to-Earth vector in ECI, array-aware, shape (..., 3)."""
    rho, ex, ey, hx, hy, sigma, s = np.broadcast_arrays(
        np.asarray(rho, dtype=float), ex, ey, hx, hy, sigma, s)
    kc = 1.0 + ex * np.cos(s) + ey * np.sin(s)
    kr = -consts.Re * rho / (kc * (1.0 + hx**2 + hy**2))
    cm, sm = np.cos(s - sigma), np.sin(s - sigma)
    cp, sp = np.cos(s + sigma), np.sin(s + sigma)
    return np.stack([
        kr * (cm * (hx**2 - hy**2) + 2.0 * sm * hx * hy + cp),
        kr * (sm * (hy**2 - hx**2) + 2.0 * cm * hx * hy + sp),
        kr * 2.0 * (hx * np.sin(s) - hy * np.cos(s)),
    ], axis=-1)


def sat_earth_vector(x: IdealState, s: float, consts: PhysicalConstants = EARTH) -> np.ndarray:
    """Spacecraft-to-Earth position vector in ECI (m), shape (3,).

    Its norm equals the orbital radius Re*rho/kc; the satellite position
    is the negative of this vector.
    """
    return sat_earth_arrays(x.rho, x.ex, x.ey, x.hx, x.hy, x.sigma, s, consts)


def shadow_geometry(r_es: np.ndarray, r_ss: np.ndarray,
                    consts: PhysicalConstants = EARTH) -> ShadowGeometry:
    """Conical shadow angles from the Earth and Sun relative vectors.

    Args:
        r_es: Spacecraft-to-Earth vector (m).
        r_ss: Spacecraft-to-Sun vector (m).

    Raises:
        ValueError: If the spacecraft is inside the Earth or Sun radius.
    """
    r_es = np.asarray(r_es, dtype=float)
    r_ss = np.asarray(r_ss, dtype=float)
    d_e = float(np.linalg.norm(r_es))
    d_s = float(np.linalg.norm(r_ss))
    if d_e <= consts.Re:
        raise ValueError(f"spacecraft radius {d_e} m is inside the Earth")
    if d_s <= consts.Rs:
        raise ValueError(f"spacecraft is inside the Sun radius ({d_s} m)")
    cos_es = float(np.dot(r_es, r_ss)) / (d_e * d_s)
    return ShadowGeometry(
        theta_es=math.acos(min(1.0, max(-1.0, cos_es))),
        theta_e=math.asin(consts.Re / d_e),
        theta_s=math.asin(consts.Rs / d_s),
    )


def shadow_function(geom: ShadowGeometry) -> float:
    """Binary shadow indicator: 0.0 when shadowed, 1.0 when sunlit.

    The boundary theta_es = theta_e + theta_s is counted as shadowed.
    """
    return 0.0 if geom.theta_es <= geom.theta_e + geom.theta_s else 1.0


def smoothed_shadow(geom: ShadowGeometry, c: float) -> float:
    """Logistic shadow factor 1/(1 + exp(c*ell)).

    Saturates to exactly 0 or 1 when |c*ell| exceeds the floating-point
    safe exponent range.
    """
    if c <= 0.0:
        raise ValueError(f"smoothing gain c must be positive, got {c}")
    z = c * geom.ell
    if z > _EXP_CLIP:
        return 0.0
    if z < -_EXP_CLIP:
        return 1.0
    return 1.0 / (1.0 + math.exp(z))


def psi_arrays(rho, ex, ey, hx, hy, sigma, s, t, eph: SunEphemeris,
               model: EclipseModel, consts: PhysicalConstants = EARTH):
    """Shadow evaluation along arrays of states.

    Returns (psi, psi_l, ell) arrays broadcast over the inputs.  With
    the model disabled all three are (1, 1, -inf-like sentinel -10).
    """
    rho = np.asarray(rho, dtype=float)
    if not model.enabled:
        shape = np.broadcast(rho, np.asarray(s)).shape
        ones = np.ones(shape)
        return ones, ones.copy(), np.full(shape, -10.0)
    r_es = sat_earth_arrays(rho, ex, ey, hx, hy, sigma, s, consts)
    r_ss = sun_position(t, eph) + r_es
    d_e = np.linalg.norm(r_es, axis=-1)
    d_s = np.linalg.norm(r_ss, axis=-1)
    cos_es = np.einsum("...i,...i->...", r_es, r_ss) / (d_e * d_s)
    theta_es = np.arccos(np.clip(cos_es, -1.0, 1.0))
    ell = np.arcsin(np.clip(consts.Re / d_e, -1.0, 1.0)) \
        + np.arcsin(np.clip(consts.Rs / d_s, -1.0, 1.0)) - theta_es
    psi = np.where(ell >= 0.0, 0.0, 1.0)
    psi_l = 1.0 / (1.0 + np.exp(np.clip(model.c * ell, -_EXP_CLIP, _EXP_CLIP)))
    psi_l = np.where(model.c * ell > _EXP_CLIP, 0.0, psi_l)
    psi_l = np.where(model.c * ell < -_EXP_CLIP, 1.0, psi_l)
    return psi, psi_l, ell
