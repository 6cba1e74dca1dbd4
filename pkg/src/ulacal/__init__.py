"""Blind phase calibration of uniform linear arrays.

Toeplitz covariance reconstruction, sphericity testing, benchmark ML/CRB
phase estimation, covariance-free estimators and invisible-sector power
minimization for oversampled arrays, plus a Monte Carlo harness.
"""

from ulacal.errors import (
    DegenerateInputError,
    DegenerateSpectrumError,
    DomainError,
    InternalError,
    StructuralError,
)

__version__ = "0.1.0"

__all__ = [
    "DegenerateInputError",
    "DegenerateSpectrumError",
    "DomainError",
    "InternalError",
    "StructuralError",
]
