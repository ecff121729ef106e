"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class SubdiffusionError(Exception):
    """Base class for every error raised by the package."""


class ParameterError(SubdiffusionError, ValueError):
    """A parameter lies outside its admissible domain."""


class SingularityError(ParameterError):
    """Evaluation requested at a point where the function diverges."""


class InputError(SubdiffusionError, ValueError):
    """Malformed or insufficient input data."""


class AccuracyError(SubdiffusionError, ArithmeticError):
    """A numerical routine could not reach the requested accuracy."""

    def __init__(self, message: str, estimate: float = float("nan")):
        super().__init__(f"{message} (achieved error estimate {estimate:.3g})")
        self.estimate = estimate


class InfeasibleGridError(SubdiffusionError, ArithmeticError):
    """No exact Gaussian factorization exists for the requested grid."""


class BandError(InputError):
    """Laplace variable outside the band resolvable from a tabulated curve."""

    def __init__(self, message: str, lo: float, hi: float):
        super().__init__(f"{message}; resolvable band is [{lo:.6g}, {hi:.6g}]")
        self.lo = lo
        self.hi = hi


class SingularRecoveryError(SubdiffusionError, ArithmeticError):
    """Kernel recovery denominator vanishes."""

    def __init__(self, message: str, s: float):
        super().__init__(f"{message} at s={s:.6g}")
        self.s = s


class IllPosedError(InputError):
    """The fitting problem carries no information (e.g. a flat curve)."""


class StepTooLargeError(ParameterError):
    """Integrator step violates the stability bound."""


class GridMismatchError(InputError):
    """Traces in an ensemble do not share a common grid."""


class ParseError(InputError):
    """Malformed CSV input."""

    def __init__(self, message: str, line: int | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line
