"""Event-aware initial mesh generation from a guidance trajectory.

Eclipse transitions make the dynamics locally stiff, so the initial
collocation grid is refined around them: segment spacing shrinks by
``refine_factor`` inside ``event_window`` of every detected transition,
and each transition s-value becomes a segment boundary exactly.
Throttle transitions of the coasting rule are deliberately not treated
as events; the optimizer relocates them freely.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .eclipse import EclipseContext, psi_arrays
from .elements import EARTH, PhysicalConstants
from .trajectory import Trajectory

TWO_PI = 2.0 * math.pi

_EVENT_REFINE_TOL = 1e-6    # bisection resolution for event location (rad)


@dataclass(frozen=True)
class MeshParams:
    """Initial mesh spacing controls (all in rad)."""

    base_spacing: float = TWO_PI / 20.0
    event_window: float = 0.15
    refine_factor: float = 4.0

    def __post_init__(self) -> None:
        if self.base_spacing <= 0.0 or self.event_window <= 0.0:
            raise ValueError("mesh spacings must be positive")
        if self.refine_factor < 2.0:
            raise ValueError(f"refine_factor must be >= 2, got {self.refine_factor}")


@dataclass
class Mesh:
    """Collocation grid: segment boundaries, orders, and event tags.

    ``boundaries`` has K+1 strictly increasing entries spanning the
    trajectory; ``orders`` holds the collocation order per segment;
    ``event_tags`` marks boundaries that coincide with an eclipse
    transition.
    """

    boundaries: np.ndarray
    orders: np.ndarray
    event_tags: np.ndarray

    def __post_init__(self) -> None:
        self.boundaries = np.asarray(self.boundaries, dtype=float)
        self.orders = np.asarray(self.orders, dtype=int)
        self.event_tags = np.asarray(self.event_tags, dtype=bool)
        if np.any(np.diff(self.boundaries) <= 0.0):
            raise ValueError("mesh boundaries must be strictly increasing")
        if len(self.orders) != len(self.boundaries) - 1:
            raise ValueError("need one order per segment")
        if len(self.event_tags) != len(self.boundaries):
            raise ValueError("need one event tag per boundary")
        if np.any(self.orders < 1):
            raise ValueError("collocation orders must be >= 1")

    @property
    def n_segments(self) -> int:
        return len(self.orders)

    @property
    def span(self) -> tuple[float, float]:
        return float(self.boundaries[0]), float(self.boundaries[-1])

    def segments(self) -> list[tuple[float, float]]:
        b = self.boundaries
        return [(float(b[i]), float(b[i + 1])) for i in range(self.n_segments)]

    def to_text(self) -> str:
        """Debug serialization: one line per segment 's_start s_end order tag'."""
        lines = []
        for i, (a, b) in enumerate(self.segments()):
            tag = "event" if (self.event_tags[i] or self.event_tags[i + 1]) else "-"
            lines.append(f"{a:.12f} {b:.12f} {self.orders[i]} {tag}")
        return "\n".join(lines) + "\n"

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())


def detect_eclipse_events(traj: Trajectory, eclipse: EclipseContext,
                          consts: PhysicalConstants = EARTH) -> np.ndarray:
    """Locate eclipse transitions along a densely sampled trajectory.

    Each sign change of the shadow penetration ell(s) is bracketed by
    adjacent samples and refined by bisection (state and time linearly
    interpolated between samples) to within 1e-6 rad.  Entries and
    exits are both reported, in increasing s.
    """
    if not eclipse.model.enabled or len(traj) < 2:
        return np.empty(0)
    st = traj.states
    ell = psi_arrays(st[:, 0], st[:, 1], st[:, 2], st[:, 3], st[:, 4], st[:, 5],
                     traj.s, traj.t, eclipse.ephemeris, eclipse.model, consts)[2]
    shadowed = ell >= 0.0
    idx = np.nonzero(shadowed[1:] != shadowed[:-1])[0]

    def ell_at(s: float, i: int) -> float:
        # state/time linearly interpolated inside the bracketing interval
        w = (s - traj.s[i]) / (traj.s[i + 1] - traj.s[i])
        x = (1.0 - w) * st[i] + w * st[i + 1]
        t = (1.0 - w) * traj.t[i] + w * traj.t[i + 1]
        return float(psi_arrays(x[0], x[1], x[2], x[3], x[4], x[5],
                                (1.0 - w) * traj.s[i] + w * traj.s[i + 1],
                                t, eclipse.ephemeris, eclipse.model, consts)[2])

    events = []
    for i in idx:
        lo, hi = float(traj.s[i]), float(traj.s[i + 1])
        f_lo = float(ell[i])
        while hi - lo > _EVENT_REFINE_TOL:
            mid = 0.5 * (lo + hi)
            f_mid = ell_at(mid, i)
            if (f_mid >= 0.0) == (f_lo >= 0.0):
                lo, f_lo = mid, f_mid
            else:
                hi = mid
        events.append(0.5 * (lo + hi))
    return np.array(events)


def build_initial_mesh(traj: Trajectory, events: np.ndarray,
                       params: MeshParams, order: int = 4) -> Mesh:
    """Construct the initial mesh with refinement around eclipse events.

    Spacing is ``base_spacing`` away from events and
    ``base_spacing/refine_factor`` within ``event_window`` of any
    event; every event s-value becomes a boundary exactly.
    """
    s0, sf = float(traj.s[0]), float(traj.s[-1])
    events = np.sort(np.asarray(events, dtype=float))
    if events.size and (events[0] < s0 - 1e-9 or events[-1] > sf + 1e-9):
        raise ValueError("events must lie within the trajectory span")
    events = events[(events > s0) & (events < sf)]

    fine = params.base_spacing / params.refine_factor
    if events.size > 1 and np.min(np.diff(events)) < fine:
        warnings.warn("event spacing below the refined mesh spacing; "
                      "segments will be auto-split tighter than the fine grid",
                      stacklevel=2)

    n_coarse = max(1, int(math.ceil((sf - s0) / params.base_spacing)))
    candidates = [np.linspace(s0, sf, n_coarse + 1)]
    for e in events:
        lo = max(s0, e - params.event_window)
        hi = min(sf, e + params.event_window)
        n_lo = max(1, int(math.ceil((e - lo) / fine)))
        n_hi = max(1, int(math.ceil((hi - e) / fine)))
        candidates.append(np.linspace(lo, e, n_lo + 1))
        candidates.append(np.linspace(e, hi, n_hi + 1))
    merged = np.unique(np.concatenate(candidates))

    # Drop non-event boundaries that crowd an event or a finer neighbor;
    # events and the two endpoints always survive.
    keep_exact = set(events.tolist()) | {s0, sf}
    min_sep = 0.45 * fine
    kept = [merged[0]]
    for b in merged[1:]:
        if b in keep_exact:
            if kept[-1] not in keep_exact and b - kept[-1] < min_sep and len(kept) > 1:
                kept.pop()
            kept.append(b)
        elif b - kept[-1] >= min_sep:
            kept.append(b)
    if kept[-1] != sf:
        kept.append(sf)
    boundaries = np.array(kept)

    tags = np.array([b in keep_exact and b not in (s0, sf) for b in boundaries])
    orders = np.full(len(boundaries) - 1, order, dtype=int)
    return Mesh(boundaries=boundaries, orders=orders, event_tags=tags)
