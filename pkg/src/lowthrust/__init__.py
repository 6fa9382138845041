"""Low-thrust Earth-orbit transfer planning.

A Lyapunov feedback law produces a feasible trajectory guess; the
transfer problem over regularized ideal-element dynamics, with J2 and
smoothed eclipse effects, is then transcribed by Radau collocation into
a sparse NLP and solved to minimum-time, minimum-fuel, or blended
optimality.
"""
from .dynamics import (
    ControlSample,
    PropulsionConfig,
    SpacecraftState,
    control_influence,
    full_rhs,
    j2_acceleration,
    mass_rate,
    thrust_acceleration,
)
from .eclipse import (
    EclipseContext,
    EclipseModel,
    ShadowGeometry,
    SunEphemeris,
    load_ephemeris_table,
    sat_earth_vector,
    shadow_function,
    shadow_geometry,
    smoothed_shadow,
    sun_position,
)
from .elements import (
    EARTH,
    ClassicalElements,
    EquinoctialElements,
    IdealState,
    KinematicFactors,
    PhysicalConstants,
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
from .guidance import (
    GuidanceError,
    GuidanceSample,
    GuidanceWeights,
    RelativeElements,
    efficiency,
    lyapunov_h,
    lyapunov_value,
    propagate_guidance,
    relative_elements,
    throttle,
    thrust_direction,
    weights_from_angles,
)
from .mesh import Mesh, MeshParams, build_initial_mesh, detect_eclipse_events
from .ocp import (
    NlpProblem,
    OcpConfig,
    TargetElements,
    boundary_residual,
    cost,
    defect_norm,
    extract_trajectory,
    target_vector,
    transcribe,
    write_nlp_exchange,
)
from .scenario import ScenarioConfig, ScenarioError, load_scenario
from .solver import (
    SolveReport,
    SolverOptions,
    TransferResult,
    consistency_residual,
    optimize_transfer,
    refine_mesh,
    register_backend,
    solve,
)
from .trajectory import Trajectory, export_trajectory, read_trajectory

__version__ = "0.1.0"
