"""Tracking controllability of linear systems: exact synthesis, penalized HUM, discrete diagnostics."""

from .brunovsky import BrunovskyForm, brunovsky_transform
from .errors import (
    AllZeroOutput,
    CompatibilityViolation,
    DimensionMismatch,
    InsufficientRegularity,
    NoConvergence,
    NotControllable,
    Singular,
    TooLarge,
    TrackingError,
    ValidationError,
    ZeroCoefficient,
)
from .hum import HumProblem, HumSolution, alpha_sweep, hum_solve, hum_solve_distributed
from .model import (
    Exponential,
    FloorShift,
    Grid,
    LtiSystem,
    Polynomial,
    Product,
    SampledSignal,
    Sinusoid,
    Sum,
    Tabulated,
    Trajectory,
    target_from_dict,
)
from .tracker import simulate, synthesize_tracking_control, tracking_error

__version__ = "0.1.0"
