"""Sampled trajectory container and CSV persistence.

A trajectory is a struct-of-arrays record of the transfer in the ideal
anomaly s: states, mass, time, the applied control, and the shadow
factor, plus derived metadata (revolutions, time of flight, mass drop).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .elements import EARTH, IdealState, PhysicalConstants, ideal_to_cartesian, ideal_to_equinoctial

TWO_PI = 2.0 * math.pi

_CSV_COLUMNS = (
    "s", "t_days", "p_km", "f", "g", "h", "k", "L",
    "rho", "ex", "ey", "hx", "hy", "sigma", "m_kg",
    "qR", "qT", "qN", "eta", "psi_l", "x_km", "y_km", "z_km",
)


@dataclass
class Trajectory:
    """State/control history sampled along the ideal anomaly.

    Arrays share the leading dimension n; ``states`` has shape (n, 6)
    with columns (rho, ex, ey, hx, hy, sigma) and ``q`` has shape
    (n, 3).  Optional diagnostic channels (psi, xi, V) may be empty.
    """

    s: np.ndarray
    states: np.ndarray
    m: np.ndarray
    t: np.ndarray
    q: np.ndarray
    eta: np.ndarray
    psi_l: np.ndarray
    psi: np.ndarray = field(default_factory=lambda: np.empty(0))
    xi: np.ndarray = field(default_factory=lambda: np.empty(0))
    V: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self) -> None:
        if np.any(np.diff(self.s) <= 0.0):
            raise ValueError("trajectory samples must be strictly increasing in s")

    def __len__(self) -> int:
        return len(self.s)

    def state_at(self, index: int) -> IdealState:
        return IdealState.from_array(self.states[index])

    @property
    def dt_days(self) -> float:
        """Time of flight in days."""
        return float(self.t[-1] - self.t[0]) / 86400.0

    @property
    def dm_kg(self) -> float:
        """Mass drop m(0) - m(s_f) in kg."""
        return float(self.m[0] - self.m[-1])

    @property
    def revolutions(self) -> float:
        """Span of the true longitude L = sigma + s in revolutions."""
        L = self.states[:, 5] + self.s
        return float(L[-1] - L[0]) / TWO_PI

    def throttle_transitions(self, threshold: float = 0.5) -> int:
        """Count of on/off throttle command transitions."""
        on = self.eta > threshold
        return int(np.count_nonzero(on[1:] != on[:-1]))

    def eclipse_count(self) -> int:
        """Number of eclipse arcs (entries into shadow)."""
        if self.psi_l.size == 0:
            return 0
        shadowed = self.psi_l < 0.5
        entries = np.count_nonzero(shadowed[1:] & ~shadowed[:-1])
        if shadowed[0]:
            entries += 1
        return int(entries)


def export_trajectory(traj: Trajectory, path: str, consts: PhysicalConstants = EARTH) -> None:
    """Write a trajectory to CSV with a fixed column schema.

    Values are written with 17 significant digits so that a read-back
    through :func:`read_trajectory` reproduces them exactly.
    """
    n = len(traj)
    rows = np.empty((n, len(_CSV_COLUMNS)))
    for i in range(n):
        x = traj.state_at(i)
        s = float(traj.s[i])
        mee = ideal_to_equinoctial(x, s, consts)
        pos, _ = ideal_to_cartesian(x, s, consts)
        rows[i] = (
            s, traj.t[i] / 86400.0, mee.p / 1e3, mee.f, mee.g, mee.h, mee.k, mee.L,
            x.rho, x.ex, x.ey, x.hx, x.hy, x.sigma, traj.m[i],
            traj.q[i, 0], traj.q[i, 1], traj.q[i, 2], traj.eta[i], traj.psi_l[i],
            pos[0] / 1e3, pos[1] / 1e3, pos[2] / 1e3,
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(_CSV_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def read_trajectory(path: str) -> Trajectory:
    """Read a trajectory CSV written by :func:`export_trajectory`."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != _CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected header {header}")
        data = np.array([[float(v) for v in line.split(",")] for line in fh if line.strip()])
    col = {name: data[:, j] for j, name in enumerate(_CSV_COLUMNS)}
    return Trajectory(
        s=col["s"],
        states=np.column_stack([col[c] for c in ("rho", "ex", "ey", "hx", "hy", "sigma")]),
        m=col["m_kg"],
        t=col["t_days"] * 86400.0,
        q=np.column_stack([col["qR"], col["qT"], col["qN"]]),
        eta=col["eta"],
        psi_l=col["psi_l"],
    )
