"""Relativistic Hartree dynamics, ground states and N-boson mean-field checks."""

from .errors import (
    BosonStarError,
    CapacityError,
    CollapseSuspected,
    ConfigurationError,
    InvalidStateError,
    InvariantViolation,
    ParameterError,
    PropagationError,
)
from .spectral import CoulombKernel, EnergyBreakdown, Grid3, SpectralField, energy, norm

__all__ = [
    "BosonStarError",
    "CapacityError",
    "CollapseSuspected",
    "ConfigurationError",
    "CoulombKernel",
    "EnergyBreakdown",
    "Grid3",
    "InvalidStateError",
    "InvariantViolation",
    "ParameterError",
    "PropagationError",
    "SpectralField",
    "energy",
    "norm",
]
