"""Squeezed Gaussian packet evolution and geometric/Hannay phases for the
time-dependent singular oscillator.

The package integrates one bundled complex flow (guiding trajectory, linear
flow, width, and phase accumulators), reconstructs the packet on a spatial
grid in two independent forms, and verifies every claimed identity with
independent oracles: a finite-difference Schrodinger residual, symplectic
invariants, and closed-form constant-coefficient limits.
"""

from .classical import SystemParams
from .errors import (
    BudgetError,
    ConfigError,
    ConsistencyError,
    DegenerateFrameError,
    OscPhaseError,
    OutputError,
    SingularityError,
)
from .integrate import BundledState, StepControl, Trajectory, adaptive_integrate
from .phases import EllipseFrame, PhaseLedger
from .schedules import (
    CoefficientSchedule,
    ConstantSchedule,
    FlowMatrix,
    SinusoidalComponent,
    SinusoidalSchedule,
    TabulatedSchedule,
)
from .wavepacket import SpatialGrid, WavePacket

__version__ = "0.1.0"

__all__ = [
    "BudgetError",
    "BundledState",
    "CoefficientSchedule",
    "ConfigError",
    "ConsistencyError",
    "ConstantSchedule",
    "DegenerateFrameError",
    "EllipseFrame",
    "FlowMatrix",
    "OscPhaseError",
    "OutputError",
    "PhaseLedger",
    "SinusoidalComponent",
    "SinusoidalSchedule",
    "SingularityError",
    "SpatialGrid",
    "StepControl",
    "SystemParams",
    "TabulatedSchedule",
    "Trajectory",
    "WavePacket",
    "adaptive_integrate",
    "__version__",
]
