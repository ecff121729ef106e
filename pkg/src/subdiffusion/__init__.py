"""Generalized Langevin dynamics driven by fractional Gaussian noise.

Exact samplers, analytic covariances, a deterministic oscillator heat bath,
lifetime statistics and inverse procedures for subdiffusive motion.
"""

from .errors import (AccuracyError, BandError, GridMismatchError, IllPosedError, InfeasibleGridError,
                     InputError, ParameterError, ParseError, SingularityError, SingularRecoveryError,
                     StepTooLargeError, SubdiffusionError)
from .params import PhysicalParams, check_hurst
from .trace import CovarianceCurve, LaplaceCurve, SpectralCurve, Trace

__version__ = "0.1.0"

__all__ = [
    "AccuracyError", "BandError", "CovarianceCurve", "GridMismatchError", "IllPosedError",
    "InfeasibleGridError", "InputError", "LaplaceCurve", "ParameterError", "ParseError",
    "PhysicalParams", "SingularityError", "SingularRecoveryError", "SpectralCurve",
    "StepTooLargeError", "SubdiffusionError", "Trace", "check_hurst",
]
