"""spectral_lab.src package

Package initializer for source code. This file makes `src` importable
(e.g. `from src.models import TrajectoryLoader`).
"""

__all__ = [
    "determinant",
    "flow",
    "harness",
    "lattice",
    "models",
    "report",
    "spaces",
    "symmetry",
    "system",
    "utilis",
]
