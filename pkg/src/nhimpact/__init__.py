"""Simulation of mechanical systems with affine nonholonomic constraints and
their impulsive transitions across a critical hypersurface."""

from .config import RunConfig, resolve
from .constraints import (
    AffineConstraintSet,
    CriticalSurface,
    affine_offset,
    compatibility,
    constraint_residual,
    focusing_point,
    project_P,
    project_Q,
    projector_matrices,
    trace_constraints,
)
from .driver import run, simulate, validate
from .dynamics import IntegrationConfig, Kind, classify_boundary, constrained_field, free_field, integrate, make_field
from .errors import (
    CompatibilityError,
    ConfigError,
    NumericalError,
    RankDeficiencyError,
    SingularMetricError,
    TransversalityError,
    UndecidedError,
)
from .geometry import ConfigChart, MechanicalSystem, PhasePoint, hamiltonian, kinetic_energy, legendre, anti_legendre
from .impact import (
    DiscontinuousSystem,
    DynamicsTag,
    Mode,
    Side,
    SideData,
    TransitionResult,
    impact_state,
    reflective_coefficient,
    refractive_coefficients,
    transition,
)
from .scenarios import SCENARIOS, build

__version__ = "0.1.0"
