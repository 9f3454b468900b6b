"""Monte Carlo and deterministic tools for spatial averages of the linear
stochastic heat equation and their Gaussian fluctuations."""

from .errors import (DomainError, EmbeddingError, ExtentError, InsufficientData, SimulationDiverged,
                     UnsupportedError, ValidationError)
from .noise import NoiseSpec
from .solver import SimConfig

__version__ = "0.1.0"

__all__ = ["DomainError", "EmbeddingError", "ExtentError", "InsufficientData", "NoiseSpec",
           "SimConfig", "SimulationDiverged", "UnsupportedError", "ValidationError"]
