"""Time-averages, ergodic partitions and boundedness certificates for
quasiperiodically forced systems."""

__version__ = "0.1.0"

from .averaging import EscapePredicate, Observable, get_observable, trig_polynomial
from .errors import (
    ConfigurationError,
    DomainMismatchError,
    FieldFileError,
    NonFiniteStateError,
    QPError,
    ResonanceError,
    ResonanceWarning,
)
from .integrators import IntegratorConfig, integrate, integrate_batch
from .models import (
    DissipativeSystem,
    HarmonicOscillator,
    QuasiperiodicForcing,
    SwingModel,
    SwingParameters,
)
from .partition import (
    ScanDomain,
    boundedness_report,
    joint_level_sets,
    phase_shift_comparison,
    sweep,
)

__all__ = [
    "ConfigurationError",
    "DissipativeSystem",
    "DomainMismatchError",
    "EscapePredicate",
    "FieldFileError",
    "HarmonicOscillator",
    "IntegratorConfig",
    "NonFiniteStateError",
    "Observable",
    "QPError",
    "QuasiperiodicForcing",
    "ResonanceError",
    "ResonanceWarning",
    "ScanDomain",
    "SwingModel",
    "SwingParameters",
    "boundedness_report",
    "get_observable",
    "integrate",
    "integrate_batch",
    "joint_level_sets",
    "phase_shift_comparison",
    "sweep",
    "trig_polynomial",
]
