import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from lowthrust.elements import EARTH, ClassicalElements, IdealState  # noqa: E402


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240613)


def random_classical(rng, n):
    """Nondegenerate elliptic classical element samples."""
    out = []
    for _ in range(n):
        a = rng.uniform(7e6, 1.2e8)
        e = rng.uniform(1e-3, 0.85)
        i = rng.uniform(1e-3, np.pi - 0.2)
        out.append(ClassicalElements(
            a=a, e=e, i=i,
            omega=rng.uniform(0.0, 2.0 * np.pi),
            Omega=rng.uniform(0.0, 2.0 * np.pi),
            v=rng.uniform(0.0, 2.0 * np.pi),
        ))
    return out


def random_ideal(rng, n, e_max=0.8):
    """Random elliptic ideal states."""
    out = []
    for _ in range(n):
        e = rng.uniform(0.0, e_max)
        ang = rng.uniform(0.0, 2.0 * np.pi)
        tan_half_i = np.tan(0.5 * rng.uniform(0.0, 2.5))
        ang2 = rng.uniform(0.0, 2.0 * np.pi)
        out.append(IdealState(
            rho=rng.uniform(1.05, 12.0),
            ex=e * np.cos(ang), ey=e * np.sin(ang),
            hx=tan_half_i * np.cos(ang2), hy=tan_half_i * np.sin(ang2),
            sigma=rng.uniform(-10.0, 10.0),
        ))
    return out


@pytest.fixture(scope="session")
def earth():
    return EARTH
