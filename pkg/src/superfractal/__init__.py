"""Simulation and multifractal analysis of one-dimensional superprocess
densities with stable branching."""

__version__ = "0.1.0"

from .model import (AtomMeasure, DomainError, ExperimentConfig, Grid1D,
                    InvalidParamsError, LebesgueMeasure, ModelParams,
                    NumericsError, RunConfig, SimOptions, SpectrumTheory,
                    default_gamma, derive_exponents, load_config,
                    theoretical_spectrum, validate_params)

__all__ = [
    "AtomMeasure", "DomainError", "ExperimentConfig", "Grid1D",
    "InvalidParamsError", "LebesgueMeasure", "ModelParams", "NumericsError",
    "RunConfig", "SimOptions", "SpectrumTheory", "default_gamma",
    "derive_exponents", "load_config", "theoretical_spectrum",
    "validate_params", "__version__",
]
