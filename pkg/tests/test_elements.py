import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

import oracles
from conftest import random_classical, random_ideal
from lowthrust.elements import (
    EARTH,
    ClassicalElements,
    EquinoctialElements,
    IdealState,
    RtnAcceleration,
    classical_to_equinoctial,
    equinoctial_to_cartesian,
    equinoctial_to_classical,
    equinoctial_to_ideal,
    gauss_rates,
    ideal_rates,
    ideal_to_cartesian,
    ideal_to_equinoctial,
    kinematic_factors,
    regularized_rates,
)

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# classical <-> equinoctial
# ---------------------------------------------------------------------------

class TestClassicalToEquinoctial:
    def test_gto_row(self):
        # a chosen so that p = 11359.07 km at e = 0.7306
        p_target = 11359.07e3
        e = 0.7306
        coe = ClassicalElements(a=p_target / (1.0 - e**2), e=e,
                                i=math.radians(28.5), omega=0.0, Omega=0.0, v=0.0)
        mee = classical_to_equinoctial(coe)
        assert mee.p == pytest.approx(p_target, rel=1e-12)
        assert mee.f == pytest.approx(0.7306, abs=1e-12)
        assert mee.g == 0.0
        assert mee.h == pytest.approx(0.2539676, abs=5e-8)
        assert mee.k == 0.0

    def test_geo_row(self):
        coe = ClassicalElements(a=42165e3, e=0.0, i=0.0, omega=0.0, Omega=0.0, v=0.0)
        mee = classical_to_equinoctial(coe)
        assert mee.p == pytest.approx(42165e3)
        assert (mee.f, mee.g, mee.h, mee.k, mee.L) == (0.0, 0.0, 0.0, 0.0, 0.0)

    def test_circular_equatorial_longitude(self):
        for theta in (0.3, 2.0, 5.5):
            coe = ClassicalElements(a=1e7, e=0.0, i=0.0, omega=0.0, Omega=0.0, v=theta)
            assert classical_to_equinoctial(coe).L == pytest.approx(theta)

    def test_rejects_retrograde_equatorial(self):
        coe = ClassicalElements(a=1e7, e=0.1, i=math.pi, omega=0.0, Omega=0.0, v=0.0)
        with pytest.raises(ValueError, match="i = pi"):
            classical_to_equinoctial(coe)


class TestEquinoctialToClassical:
    def test_gto_inverse(self):
        e = 0.7306
        coe = ClassicalElements(a=11359.07e3 / (1.0 - e**2), e=e,
                                i=math.radians(28.5), omega=0.0, Omega=0.0, v=0.0)
        back = equinoctial_to_classical(classical_to_equinoctial(coe))
        assert back.a == pytest.approx(coe.a, rel=1e-12)
        assert back.e == pytest.approx(coe.e, rel=1e-12)
        assert back.i == pytest.approx(coe.i, rel=1e-12)

    def test_degenerate_flags(self):
        mee = EquinoctialElements(p=42165e3, f=0.0, g=0.0, h=0.0, k=0.0, L=1.0)
        coe = equinoctial_to_classical(mee)
        assert coe.e == 0.0 and coe.i == 0.0
        assert coe.circular and coe.equatorial
        assert coe.omega == 0.0 and coe.Omega == 0.0

    def test_round_trip_random(self, rng):
        worst = 0.0
        for coe in random_classical(rng, 1000):
            back = equinoctial_to_classical(classical_to_equinoctial(coe))
            for name in ("a", "e", "i", "omega", "Omega", "v"):
                x, y = getattr(coe, name), getattr(back, name)
                if name != "a":
                    d = abs(x - y) % TWO_PI
                    d = min(d, TWO_PI - d)
                    worst = max(worst, d)
                else:
                    worst = max(worst, abs(x - y) / abs(x))
        assert worst < 1e-12


class TestIdealConversions:
    def test_departure_frame_convention(self):
        mee = EquinoctialElements(p=1.2e7, f=0.3, g=0.1, h=0.2, k=-0.1, L=2.2)
        x = equinoctial_to_ideal(mee, mee.L)
        assert x.sigma == 0.0
        assert (x.ex, x.ey) == pytest.approx((mee.f, mee.g))
        assert (x.hx, x.hy) == pytest.approx((mee.h, mee.k))

    def test_zero_eccentricity_rotation_invariant(self):
        mee = EquinoctialElements(p=1.2e7, f=0.0, g=0.0, h=0.2, k=-0.1, L=2.2)
        for s in (0.0, 1.0, 4.0):
            x = equinoctial_to_ideal(mee, s)
            assert x.ex == 0.0 and x.ey == 0.0

    def test_gto_table_row(self):
        mee = EquinoctialElements(p=11359.07e3, f=0.7306, g=0.0,
                                  h=0.2539676, k=0.0, L=0.0)
        x = equinoctial_to_ideal(mee, 0.0)
        assert x.rho == pytest.approx(11359.07e3 / EARTH.Re, rel=1e-14)
        assert x.ex == 0.7306 and x.hx == 0.2539676 and x.sigma == 0.0

    def test_round_trip_identity(self, rng):
        worst = 0.0
        for x in random_ideal(rng, 1000):
            s = rng.uniform(-20.0, 20.0)
            mee = ideal_to_equinoctial(x, s)
            back = equinoctial_to_ideal(mee, s)
            for name in ("rho", "ex", "ey", "hx", "hy", "sigma"):
                a, b = getattr(x, name), getattr(back, name)
                worst = max(worst, abs(a - b) / max(1.0, abs(a)))
        assert worst < 1e-12

    def test_sigma_zero_identity(self):
        x = IdealState(rho=2.0, ex=0.1, ey=-0.2, hx=0.05, hy=0.02, sigma=0.0)
        mee = ideal_to_equinoctial(x, 3.0)
        assert (mee.f, mee.g, mee.h, mee.k) == (0.1, -0.2, 0.05, 0.02)
        assert mee.L == 3.0


# ---------------------------------------------------------------------------
# kappa factors
# ---------------------------------------------------------------------------

class TestKinematicFactors:
    def test_circular_equatorial(self):
        x = IdealState(rho=2.0, ex=0.0, ey=0.0, hx=0.0, hy=0.0, sigma=0.0)
        kf = kinematic_factors(x, 1.234)
        assert kf.kc == 1.0 and kf.ks == 0.0
        assert kf.kx == 0.5 and kf.ky == 0.5

    def test_kt_is_period_over_two_pi_for_circular(self):
        a = 42165e3
        x = IdealState(rho=a / EARTH.Re, ex=0.0, ey=0.0, hx=0.0, hy=0.0, sigma=0.0)
        kf = kinematic_factors(x, 0.7)
        assert kf.kt == pytest.approx(oracles.kepler_period(a) / TWO_PI, rel=1e-12)
        assert kf.kt == pytest.approx(13713.0, rel=2e-4)

    def test_gto_kc(self):
        x = IdealState(rho=11359.07e3 / EARTH.Re, ex=0.7306, ey=0.0,
                       hx=0.2539676, hy=0.0, sigma=0.0)
        assert kinematic_factors(x, 0.0).kc == pytest.approx(1.7306)

    def test_hyperbolic_rejected(self):
        # elliptic validation already rejects |e| >= 1 at construction
        with pytest.raises(ValueError):
            IdealState(rho=2.0, ex=-1.05, ey=0.0, hx=0.0, hy=0.0, sigma=0.0)
        # the kc guard catches unvalidated states (as the array kernels
        # can see from NLP iterates)
        bad = object.__new__(IdealState)
        for name, val in zip(("rho", "ex", "ey", "hx", "hy", "sigma"),
                             (2.0, -1.2, 0.0, 0.0, 0.0, 0.0)):
            object.__setattr__(bad, name, val)
        with pytest.raises(ValueError, match="hyperbolic"):
            kinematic_factors(bad, 0.0)


# ---------------------------------------------------------------------------
# rates
# ---------------------------------------------------------------------------

class TestGaussRates:
    def test_unperturbed_kepler(self):
        coe = ClassicalElements(a=1.2e7, e=0.3, i=0.5, omega=1.0, Omega=2.0, v=0.7)
        rates = gauss_rates(coe, RtnAcceleration(0.0, 0.0, 0.0))
        assert np.allclose(rates[:5], 0.0)
        expected = math.sqrt(EARTH.mu / coe.a**3) \
            * (1.0 + coe.e * math.cos(coe.v))**2 / (1.0 - coe.e**2)**1.5
        assert rates[5] == pytest.approx(expected, rel=1e-14)

    def test_pure_normal_at_quadrature(self):
        # cos(v+omega) = 0 there, so the inclination rate vanishes
        coe = ClassicalElements(a=1.2e7, e=0.2, i=0.4, omega=0.9,
                                Omega=0.3, v=math.pi / 2 - 0.9)
        rates = gauss_rates(coe, RtnAcceleration(0.0, 0.0, 1e-4))
        assert abs(rates[2]) < 1e-18
        assert rates[4] != 0.0

    def test_singularities_rejected(self):
        circ = ClassicalElements(a=1e7, e=0.0, i=0.3, omega=0.0, Omega=0.0, v=0.1)
        eq = ClassicalElements(a=1e7, e=0.2, i=0.0, omega=0.0, Omega=0.0, v=0.1)
        with pytest.raises(ValueError):
            gauss_rates(circ, RtnAcceleration(0, 0, 0))
        with pytest.raises(ValueError):
            gauss_rates(eq, RtnAcceleration(0, 0, 0))

    def test_against_cartesian_finite_difference(self, rng):
        # both the rates and rv_to_coe follow field order (omega before Omega)
        oracle_index = {"a": 0, "e": 1, "i": 2, "omega": 3, "Omega": 4, "v": 5}
        for coe in random_classical(rng, 20):
            acc_rtn = rng.uniform(-1e-4, 1e-4, size=3)
            r0, v0 = oracles.coe_to_rv(coe.a, coe.e, coe.i, coe.omega, coe.Omega, coe.v)
            dt = 4.0
            sol = oracles.propagate_cartesian(
                r0, v0, (0.0, dt), accel_rtn=lambda t, r, v: acc_rtn, rtol=1e-13)
            coe1 = oracles.rv_to_coe(sol.y[:3, -1], sol.y[3:, -1])
            fd = []
            for name in ("a", "e", "i", "omega", "Omega", "v"):
                x0 = getattr(coe, name)
                x1 = coe1[oracle_index[name]]
                d = x1 - x0
                if name != "a":
                    d = (d + math.pi) % TWO_PI - math.pi
                fd.append(d / dt)
            # the secant matches the midpoint rate to O(dt^2)
            mid = oracles.rv_to_coe(*np.split(sol.sol(dt / 2), 2))
            mid_coe = ClassicalElements(a=mid[0], e=mid[1], i=mid[2],
                                        omega=mid[3], Omega=mid[4], v=mid[5])
            rates_mid = gauss_rates(mid_coe, RtnAcceleration(*acc_rtn))
            scale = np.maximum(np.abs(rates_mid), 1e-6 * np.max(np.abs(rates_mid)))
            assert np.all(np.abs(np.array(fd) - rates_mid) / scale < 1e-6)


class TestIdealRates:
    def test_coasting_constancy(self, rng):
        for x in random_ideal(rng, 10):
            rates = ideal_rates(x, rng.uniform(0, 10), RtnAcceleration(0, 0, 0))
            assert np.all(rates == 0.0)

    def test_normal_acceleration_sparsity(self, rng):
        for x in random_ideal(rng, 10):
            s = rng.uniform(0, 10)
            rates = ideal_rates(x, s, RtnAcceleration(0.0, 0.0, 1e-3))
            assert rates[0] == 0.0 and rates[1] == 0.0 and rates[2] == 0.0

    def test_inplane_acceleration_sparsity(self, rng):
        for x in random_ideal(rng, 10):
            s = rng.uniform(0, 10)
            rates = ideal_rates(x, s, RtnAcceleration(1e-3, -2e-4, 0.0))
            assert rates[3] == 0.0 and rates[4] == 0.0 and rates[5] == 0.0

    def test_sigma_invariance(self, rng):
        x = random_ideal(rng, 1)[0]
        acc = RtnAcceleration(1e-4, 2e-4, -1e-4)
        r1 = ideal_rates(x, 2.0, acc)
        x2 = IdealState(x.rho, x.ex, x.ey, x.hx, x.hy, x.sigma + 3.7)
        r2 = ideal_rates(x2, 2.0, acc)
        assert np.allclose(r1, r2, rtol=0.0, atol=0.0)

    def test_consistent_with_gauss_rates(self):
        """Chain rule through the element map applied to the classical rates."""
        rng = np.random.default_rng(7)
        for coe in random_classical(rng, 15):
            acc = RtnAcceleration(*rng.uniform(-1e-4, 1e-4, size=3))
            s = rng.uniform(0.0, 10.0)
            mee = classical_to_equinoctial(coe)

            def ideal_of(coe_vec, s_val):
                c = ClassicalElements(a=coe_vec[0], e=coe_vec[1], i=coe_vec[2],
                                      omega=coe_vec[3], Omega=coe_vec[4], v=coe_vec[5])
                return equinoctial_to_ideal(classical_to_equinoctial(c), s_val).as_array()

            coe_vec = np.array([coe.a, coe.e, coe.i, coe.omega, coe.Omega, coe.v])
            coe_dot = gauss_rates(coe, acc)
            s_dot = math.sqrt(EARTH.mu / coe.a**3) \
                * (1.0 + coe.e * math.cos(coe.v))**2 / (1.0 - coe.e**2)**1.5

            total = np.zeros(6)
            for j in range(6):
                h = 1e-6 * max(1.0, abs(coe_vec[j]))
                up, dn = coe_vec.copy(), coe_vec.copy()
                up[j] += h
                dn[j] -= h
                total += (ideal_of(up, s) - ideal_of(dn, s)) / (2.0 * h) * coe_dot[j]
            hs = 1e-6
            total += (ideal_of(coe_vec, s + hs) - ideal_of(coe_vec, s - hs)) / (2.0 * hs) * s_dot

            x = equinoctial_to_ideal(mee, s)
            rates = ideal_rates(x, s, acc)
            # FD cancellation noise scales with the large Kepler advance
            # terms, so floor the denominator at a fraction of the peak rate
            scale = np.maximum(np.abs(rates), 1e-3 * np.max(np.abs(rates)))
            assert np.all(np.abs(rates - total) / scale < 1e-4)


class TestRegularizedRates:
    def test_coast(self, rng):
        x = random_ideal(rng, 1)[0]
        rates, kt = regularized_rates(x, 1.0, RtnAcceleration(0, 0, 0))
        assert np.all(rates == 0.0)
        assert kt > 0.0

    def test_kepler_period_timing(self, rng):
        for x in random_ideal(rng, 5):
            mee = ideal_to_equinoctial(x, 0.0)
            e = math.hypot(mee.f, mee.g)
            a = mee.p / (1.0 - e**2)

            def rhs(s, y):
                st = IdealState.from_array(y[:6])
                rates, kt = regularized_rates(st, s, RtnAcceleration(0, 0, 0))
                return np.concatenate([rates, [kt]])

            y0 = np.concatenate([x.as_array(), [0.0]])
            sol = solve_ivp(rhs, (0.0, 10 * TWO_PI), y0, method="DOP853",
                            rtol=1e-12, atol=1e-12)
            assert sol.success
            assert np.max(np.abs(sol.y[:6, -1] - y0[:6])) < 1e-9
            assert sol.y[6, -1] == pytest.approx(10 * oracles.kepler_period(a), rel=1e-9)

    def test_energy_constant_unperturbed(self, rng):
        x = random_ideal(rng, 1)[0]
        E = []
        for s in np.linspace(0.0, TWO_PI, 50):
            r, v = ideal_to_cartesian(x, s)
            E.append(0.5 * np.dot(v, v) - EARTH.mu / np.linalg.norm(r))
        E = np.array(E)
        assert np.max(np.abs(E - E[0])) / abs(E[0]) < 1e-9

    def test_transverse_thrust_against_cartesian(self):
        x0 = IdealState(rho=11359.07e3 / EARTH.Re, ex=0.7306, ey=0.0,
                        hx=0.2539676, hy=0.0, sigma=0.0)
        acc = RtnAcceleration(0.0, 2.6e-4, 0.0)

        def rhs(s, y):
            st = IdealState.from_array(y[:6])
            rates, kt = regularized_rates(st, s, acc)
            return np.concatenate([rates, [kt]])

        y0 = np.concatenate([x0.as_array(), [0.0]])
        sol = solve_ivp(rhs, (0.0, 10 * TWO_PI), y0, method="DOP853",
                        rtol=1e-12, atol=1e-12)
        t_end = sol.y[6, -1]
        r_end, v_end = ideal_to_cartesian(IdealState.from_array(sol.y[:6, -1]),
                                          10 * TWO_PI)

        r0, v0 = ideal_to_cartesian(x0, 0.0)
        ref = oracles.propagate_cartesian(
            r0, v0, (0.0, t_end),
            accel_rtn=lambda t, r, v: np.array([0.0, 2.6e-4, 0.0]), rtol=1e-12)
        err = np.linalg.norm(ref.y[:3, -1] - r_end)
        assert err < 1e3  # meters


# ---------------------------------------------------------------------------
# Cartesian reconstruction
# ---------------------------------------------------------------------------

class TestCartesian:
    def test_against_perifocal(self, rng):
        for coe in random_classical(rng, 50):
            r_ref, v_ref = oracles.coe_to_rv(coe.a, coe.e, coe.i,
                                             coe.omega, coe.Omega, coe.v)
            r, v = equinoctial_to_cartesian(classical_to_equinoctial(coe))
            assert np.allclose(r, r_ref, rtol=1e-10)
            assert np.allclose(v, v_ref, rtol=1e-10)
