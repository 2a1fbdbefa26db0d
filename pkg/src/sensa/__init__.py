"""Sensitivity analysis for SOO, IV and proximal estimators of a treatment effect."""

__version__ = "0.1.0"

from .errors import SensitivityError  # noqa: F401
