"""Independent reference implementations used to cross-check the library.

Everything here is derived from textbook formulas on Cartesian states
or classical elements and deliberately avoids the package's equinoctial
and ideal-element code paths.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.integrate import solve_ivp

MU = 3.986004418e14
RE = 6378140.0
J2 = 1.08262668e-3


def coe_to_rv(a, e, i, omega, Omega, nu, mu=MU):
    """Classical elements to ECI state via the perifocal frame."""
    p = a * (1.0 - e**2)
    r = p / (1.0 + e * math.cos(nu))
    r_pf = np.array([r * math.cos(nu), r * math.sin(nu), 0.0])
    v_pf = math.sqrt(mu / p) * np.array([-math.sin(nu), e + math.cos(nu), 0.0])
    co, so = math.cos(omega), math.sin(omega)
    cO, sO = math.cos(Omega), math.sin(Omega)
    ci, si = math.cos(i), math.sin(i)
    R = np.array([
        [cO * co - sO * so * ci, -cO * so - sO * co * ci, sO * si],
        [sO * co + cO * so * ci, -sO * so + cO * co * ci, -cO * si],
        [so * si, co * si, ci],
    ])
    return R @ r_pf, R @ v_pf


def rv_to_coe(r, v, mu=MU):
    """ECI state to classical elements (elliptic, nondegenerate)."""
    r = np.asarray(r, dtype=float)
    v = np.asarray(v, dtype=float)
    rn = np.linalg.norm(r)
    h_vec = np.cross(r, v)
    hn = np.linalg.norm(h_vec)
    n_vec = np.cross([0.0, 0.0, 1.0], h_vec)
    nn = np.linalg.norm(n_vec)
    e_vec = np.cross(v, h_vec) / mu - r / rn
    e = np.linalg.norm(e_vec)
    energy = 0.5 * np.dot(v, v) - mu / rn
    a = -mu / (2.0 * energy)
    i = math.acos(h_vec[2] / hn)
    Omega = math.atan2(n_vec[1], n_vec[0]) % (2.0 * math.pi)
    omega = math.acos(np.clip(np.dot(n_vec, e_vec) / (nn * e), -1.0, 1.0))
    if e_vec[2] < 0.0:
        omega = 2.0 * math.pi - omega
    nu = math.acos(np.clip(np.dot(e_vec, r) / (e * rn), -1.0, 1.0))
    if np.dot(r, v) < 0.0:
        nu = 2.0 * math.pi - nu
    return a, e, i, omega, Omega, nu


def j2_accel_eci(r, mu=MU, Re=RE, j2=J2):
    """Oblateness acceleration in ECI."""
    r = np.asarray(r, dtype=float)
    rn = np.linalg.norm(r)
    zr = r[2] / rn
    pref = -1.5 * j2 * mu * Re**2 / rn**4
    return pref * np.array([
        (1.0 - 5.0 * zr**2) * r[0] / rn,
        (1.0 - 5.0 * zr**2) * r[1] / rn,
        (3.0 - 5.0 * zr**2) * r[2] / rn,
    ])


def rtn_basis(r, v):
    """Rows are the radial, transverse, normal unit vectors."""
    r = np.asarray(r, dtype=float)
    v = np.asarray(v, dtype=float)
    ur = r / np.linalg.norm(r)
    un = np.cross(r, v)
    un /= np.linalg.norm(un)
    ut = np.cross(un, ur)
    return np.vstack([ur, ut, un])


def propagate_cartesian(r0, v0, t_span, accel_rtn=None, mu=MU, Re=RE, j2=0.0,
                        rtol=1e-12, atol=1e-6, t_eval=None):
    """High-order Cartesian propagation with optional RTN acceleration.

    accel_rtn(t, r, v) returns the extra acceleration in RTN; J2 is
    included when j2 > 0.
    """
    def rhs(t, y):
        r, v = y[:3], y[3:]
        rn = np.linalg.norm(r)
        a = -mu * r / rn**3
        if j2 > 0.0:
            a = a + j2_accel_eci(r, mu, Re, j2)
        if accel_rtn is not None:
            B = rtn_basis(r, v)
            a = a + B.T @ accel_rtn(t, r, v)
        return np.concatenate([v, a])

    sol = solve_ivp(rhs, t_span, np.concatenate([r0, v0]), method="DOP853",
                    rtol=rtol, atol=atol, t_eval=t_eval, dense_output=True)
    assert sol.success, sol.message
    return sol


def kepler_period(a, mu=MU):
    return 2.0 * math.pi * math.sqrt(a**3 / mu)


def relative_inclination(i1, Omega1, i2, Omega2):
    """Spherical-triangle angle between two orbit planes."""
    cg = (math.cos(i1) * math.cos(i2)
          + math.sin(i1) * math.sin(i2) * math.cos(Omega1 - Omega2))
    return math.acos(np.clip(cg, -1.0, 1.0))


def meeus_solar_longitude(jd):
    """Geometric solar ecliptic longitude (deg), Meeus-style series."""
    T = (jd - 2451545.0) / 36525.0
    L0 = (280.46646 + 36000.76983 * T + 0.0003032 * T**2) % 360.0
    M = math.radians((357.52911 + 35999.05029 * T - 0.0001537 * T**2) % 360.0)
    C = ((1.914602 - 0.004817 * T - 0.000014 * T**2) * math.sin(M)
         + (0.019993 - 0.000101 * T) * math.sin(2.0 * M)
         + 0.000289 * math.sin(3.0 * M))
    return (L0 + C) % 360.0


def meeus_solar_distance(jd):
    """Earth-Sun distance (m), Meeus-style series."""
    T = (jd - 2451545.0) / 36525.0
    M = math.radians((357.52911 + 35999.05029 * T) % 360.0)
    e = 0.016708634 - 0.000042037 * T
    C = ((1.914602 - 0.004817 * T) * math.sin(M)
         + (0.019993 - 0.000101 * T) * math.sin(2.0 * M)
         + 0.000289 * math.sin(3.0 * M))
    nu = M + math.radians(C)
    return 1.000001018 * (1.0 - e**2) / (1.0 + e * math.cos(nu)) * 1.495978707e11


def circular_shadow_ell(s, radius, sun_vec, mu=MU, Re=RE, Rs=6.96e8):
    """Shadow penetration for a circular equatorial orbit, closed form.

    The satellite sits at radius*(cos s, sin s, 0); the Sun is at the
    fixed vector sun_vec.
    """
    pos = radius * np.array([math.cos(s), math.sin(s), 0.0])
    r_es = -pos
    r_ss = np.asarray(sun_vec, dtype=float) - pos
    d_e = np.linalg.norm(r_es)
    d_s = np.linalg.norm(r_ss)
    theta_es = math.acos(np.clip(np.dot(r_es, r_ss) / (d_e * d_s), -1.0, 1.0))
    return math.asin(Re / d_e) + math.asin(Rs / d_s) - theta_es
