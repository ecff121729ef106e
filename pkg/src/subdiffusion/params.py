"""Physical and model parameters with domain validation."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ParameterError


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not (math.isfinite(value) and value > 0):
        raise ParameterError(f"{name} must be positive and finite, got {value!r}")
    return value


def check_hurst(h: float, *, gle: bool = True) -> float:
    """Validate a Hurst exponent.

    Generation accepts ``0 < h < 1``; every GLE layer (``gle=True``) needs
    the long-memory range ``1/2 < h < 1``.
    """
    h = float(h)
    lo = 0.5 if gle else 0.0
    if not (lo < h < 1.0):
        rng = "(1/2, 1)" if gle else "(0, 1)"
        raise ParameterError(f"Hurst exponent must lie in {rng}, got {h!r}")
    return h


@dataclass(frozen=True)
class PhysicalParams:
    """Mass ``m``, friction ``zeta``, thermal energy ``kbt`` and the
    harmonic strength ``psi`` (``None`` for a free particle).

    ``psi`` has units of 1/time^2: the potential is ``0.5 * m * psi * x**2``.
    """

    m: float = 1.0
    zeta: float = 1.0
    kbt: float = 1.0
    psi: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "m", _positive("m", self.m))
        object.__setattr__(self, "zeta", _positive("zeta", self.zeta))
        object.__setattr__(self, "kbt", _positive("kbt", self.kbt))
        if self.psi is not None:
            object.__setattr__(self, "psi", _positive("psi", self.psi))

    @property
    def free(self) -> bool:
        return self.psi is None

    def require_free(self) -> None:
        if self.psi is not None:
            raise ParameterError("free-particle quantity requested with psi set")

    def require_potential(self) -> float:
        if self.psi is None:
            raise ParameterError("harmonic quantity requested without psi")
        return self.psi

    @property
    def var_x(self) -> float:
        """Equilibrium displacement variance kbt / (m psi)."""
        return self.kbt / (self.m * self.require_potential())

    @property
    def var_v(self) -> float:
        """Equilibrium velocity variance kbt / m."""
        return self.kbt / self.m
