"""Models package

Equation models, time steppers and trajectory persistence.
"""

from .integrators import IntegratingFactorRK4, SpectralGrid, StrangSplit
from .model_loader import TrajectoryLoader, TrajectoryLoadError
from .models import MKdV, MKdVNLS, NLS, RenormalizedMKdV, RenormalizedNLS, Sign

__all__ = [
    "Sign",
    "NLS",
    "RenormalizedNLS",
    "MKdV",
    "RenormalizedMKdV",
    "MKdVNLS",
    "SpectralGrid",
    "StrangSplit",
    "IntegratingFactorRK4",
    "TrajectoryLoader",
    "TrajectoryLoadError",
]
