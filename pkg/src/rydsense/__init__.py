"""Sensitivity model and signal chain for a cold-atom microwave heterodyne receiver."""

from .quantities import (ExperimentConfig, Derived, default_config,
                         load_config, derive, config_hash)
from .bloch import LevelShifts, DensityMatrix4, Liouvillian
from .noise_budget import NoiseBudget, evaluate_budget

__all__ = [
    "ExperimentConfig", "Derived", "default_config", "load_config", "derive",
    "config_hash", "LevelShifts", "DensityMatrix4", "Liouvillian",
    "NoiseBudget", "evaluate_budget",
]

__version__ = "0.1.0"
