"""Scenario configuration: parsing, validation, bundled cases.

Scenarios are stored as structured key-value text (INI sections) with
units in the key names, e.g.::

    [propulsion]
    Tmax_N = 0.31158
    Isp_s = 1800.0

Orbits may be given in equinoctial form (p_km, f, g, h, k, L_rad) or
classical form (a_km, e, i_deg, omega_deg, Omega_deg, nu_deg).  Two
bundled scenarios reproduce the GTO-GEO and LEO-GEO benchmark cases; a
third, desk-scale case starts near the target for fast optimization
runs.
"""
from __future__ import annotations

import configparser
import importlib.resources
import math
import os.path
from dataclasses import dataclass, field

from .dynamics import PropulsionConfig
from .eclipse import EclipseContext, EclipseModel, SunEphemeris, load_ephemeris_table
from .elements import (
    EARTH,
    ClassicalElements,
    EquinoctialElements,
    IdealState,
    PhysicalConstants,
    classical_to_equinoctial,
    equinoctial_to_ideal,
)
from .guidance import GuidanceWeights
from .mesh import MeshParams
from .ocp import TargetElements


class ScenarioError(ValueError):
    """Scenario parse or validation failure, carrying the field path."""

    def __init__(self, field_path: str, message: str):
        super().__init__(f"{field_path}: {message}")
        self.field_path = field_path


@dataclass(frozen=True)
class GuidanceConfig:
    """Tuning of the feedback guidance loop."""

    phi_az: float
    phi_el: float
    xi_cut: float = 0.0
    stop_tol: float = 5e-3
    steps_per_rev: int = 200
    max_revolutions: float = 700.0
    sweep_samples: int = 360

    def __post_init__(self) -> None:
        if self.stop_tol <= 0.0:
            raise ValueError("stop_tol must be positive")
        if self.steps_per_rev < 8:
            raise ValueError("steps_per_rev must be at least 8")
        if self.sweep_samples < 16:
            raise ValueError("sweep_samples must be at least 16")


@dataclass(frozen=True)
class OcpSettings:
    """Objective blend and terminal windows for the optimization run."""

    alpha: float = 0.0
    dt_min_days: float | None = None
    dt_max_days: float | None = None
    L_min_rad: float | None = None
    L_max_rad: float | None = None
    mesh_tol: float = 5e-6
    max_mesh_iterations: int = 10


@dataclass(frozen=True)
class ScenarioConfig:
    """Full description of one transfer case."""

    name: str
    constants: PhysicalConstants
    propulsion: PropulsionConfig
    m0: float
    JD0: float
    initial_orbit: EquinoctialElements
    target_orbit: EquinoctialElements
    guidance: GuidanceConfig
    eclipse: EclipseModel = field(default_factory=EclipseModel)
    ocp: OcpSettings = field(default_factory=OcpSettings)
    mesh: MeshParams = field(default_factory=MeshParams)
    ephemeris_table: str | None = None

    def __post_init__(self) -> None:
        if self.m0 <= 0.0:
            raise ScenarioError("spacecraft.m0_kg", "must be positive")
        if self.JD0 <= 2.4e6:
            raise ScenarioError("spacecraft.JD0_days", "must be a Julian date")
        if (self.ocp.dt_min_days is not None and self.ocp.dt_max_days is not None
                and self.ocp.dt_min_days > self.ocp.dt_max_days):
            raise ScenarioError("ocp.dt_min_days", "dt bounds out of order")

    def initial_ideal_state(self) -> IdealState:
        """Departure state with s(0) = 0, so sigma(0) = L(0)."""
        return equinoctial_to_ideal(self.initial_orbit, 0.0, self.constants)

    def target_vector(self) -> TargetElements:
        o = self.target_orbit
        return TargetElements(zbar=(o.p, o.f, o.g, o.h, o.k))

    def guidance_weights(self) -> GuidanceWeights:
        return GuidanceWeights.from_angles(
            self.guidance.phi_az, self.guidance.phi_el, self.guidance.xi_cut)

    def sun_ephemeris(self) -> SunEphemeris:
        if self.ephemeris_table is not None:
            return load_ephemeris_table(self.ephemeris_table, self.JD0)
        return SunEphemeris(JD0=self.JD0)

    def eclipse_context(self) -> EclipseContext:
        return EclipseContext(model=self.eclipse, ephemeris=self.sun_ephemeris())


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_BUNDLED = {"gto-geo", "leo-geo", "gto-geo-desk"}


def bundled_scenario_path(name: str) -> str:
    """Filesystem path of a bundled scenario by short name."""
    res = importlib.resources.files("lowthrust.scenarios") / f"{name}.cfg"
    return str(res)


def load_scenario(path: str) -> ScenarioConfig:
    """Load and validate a scenario file (or a bundled scenario name).

    Raises:
        ScenarioError: On missing/invalid fields, with the field path.
    """
    if path in _BUNDLED:
        path = bundled_scenario_path(path)
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh, source=path)
    except FileNotFoundError:
        raise ScenarioError(path, "scenario file not found") from None
    except configparser.Error as exc:
        raise ScenarioError(path, f"parse error: {exc}") from exc

    def get(section: str, key: str, cast=float, default=None):
        if not parser.has_section(section) or not parser.has_option(section, key):
            if default is not None:
                return default
            raise ScenarioError(f"{section}.{key}", "missing required field")
        raw = parser.get(section, key)
        try:
            if cast is bool:
                return raw.strip().lower() in ("1", "true", "yes", "on")
            return cast(raw)
        except ValueError:
            raise ScenarioError(f"{section}.{key}", f"cannot parse {raw!r}") from None

    def get_opt(section: str, key: str, cast=float):
        if parser.has_option(section, key):
            return get(section, key, cast)
        return None

    consts = PhysicalConstants(
        mu=get("constants", "mu_m3s2", default=EARTH.mu),
        Re=get("constants", "Re_m", default=EARTH.Re),
        Rs=get("constants", "Rs_m", default=EARTH.Rs),
        J2=get("constants", "J2", default=EARTH.J2),
        g0=get("constants", "g0_ms2", default=EARTH.g0),
    )
    prop = PropulsionConfig(Tmax=get("propulsion", "Tmax_N"),
                            Isp=get("propulsion", "Isp_s"))

    def orbit(section: str) -> EquinoctialElements:
        if not parser.has_section(section):
            raise ScenarioError(section, "missing orbit section")
        if parser.has_option(section, "p_km"):
            try:
                return EquinoctialElements(
                    p=get(section, "p_km") * 1e3,
                    f=get(section, "f", default=0.0),
                    g=get(section, "g", default=0.0),
                    h=get(section, "h", default=0.0),
                    k=get(section, "k", default=0.0),
                    L=get(section, "L_rad", default=0.0),
                )
            except ValueError as exc:
                raise ScenarioError(section, str(exc)) from exc
        if parser.has_option(section, "a_km"):
            try:
                coe = ClassicalElements(
                    a=get(section, "a_km") * 1e3,
                    e=get(section, "e", default=0.0),
                    i=math.radians(get(section, "i_deg", default=0.0)),
                    omega=math.radians(get(section, "omega_deg", default=0.0)),
                    Omega=math.radians(get(section, "Omega_deg", default=0.0)),
                    v=math.radians(get(section, "nu_deg", default=0.0)),
                )
                return classical_to_equinoctial(coe)
            except ValueError as exc:
                raise ScenarioError(section, str(exc)) from exc
        raise ScenarioError(f"{section}.p_km", "orbit needs p_km or a_km")

    guidance = GuidanceConfig(
        phi_az=math.radians(get("guidance", "phi_az_deg")),
        phi_el=math.radians(get("guidance", "phi_el_deg")),
        xi_cut=get("guidance", "xi_cut", default=0.0),
        stop_tol=get("guidance", "stop_tol", default=5e-3),
        steps_per_rev=get("guidance", "steps_per_rev", cast=int, default=200),
        max_revolutions=get("guidance", "max_revolutions", default=700.0),
        sweep_samples=get("guidance", "sweep_samples", cast=int, default=360),
    )
    eclipse = EclipseModel(
        c=get("eclipse", "c", default=298.78),
        enabled=get("eclipse", "enabled", cast=bool, default=True),
    )
    ocp = OcpSettings(
        alpha=get("ocp", "alpha", default=0.0),
        dt_min_days=get_opt("ocp", "dt_min_days"),
        dt_max_days=get_opt("ocp", "dt_max_days"),
        L_min_rad=get_opt("ocp", "L_min_rad"),
        L_max_rad=get_opt("ocp", "L_max_rad"),
        mesh_tol=get("ocp", "mesh_tol", default=5e-6),
        max_mesh_iterations=get("ocp", "max_mesh_iterations", cast=int, default=10),
    )
    mesh = MeshParams(
        base_spacing=get("mesh", "base_spacing_rad", default=MeshParams.base_spacing),
        event_window=get("mesh", "event_window_rad", default=MeshParams.event_window),
        refine_factor=get("mesh", "refine_factor", default=MeshParams.refine_factor),
    )
    table = parser.get("ephemeris", "table_path", fallback=None)

    name = get("scenario", "name", cast=str,
               default=os.path.splitext(os.path.basename(path))[0])
    return ScenarioConfig(
        name=name,
        constants=consts,
        propulsion=prop,
        m0=get("spacecraft", "m0_kg"),
        JD0=get("spacecraft", "JD0_days"),
        initial_orbit=orbit("initial_orbit"),
        target_orbit=orbit("target_orbit"),
        guidance=guidance,
        eclipse=eclipse,
        ocp=ocp,
        mesh=mesh,
        ephemeris_table=table,
    )
