"""Exception types shared across the toolkit."""

from __future__ import annotations


class ReentryError(Exception):
    """Base class for all toolkit errors."""


class GainSingularity(ReentryError):
    """Homeostatic gain denominator fell below the guard threshold.

    The gain 1 / (1 + beta*(r^2 - 1)) has a pole at r^2 = 1 - 1/beta.
    Rather than clamping silently we refuse to evaluate near it.
    """

    def __init__(self, r: float, beta: float, denominator: float):
        self.r = r
        self.beta = beta
        self.denominator = denominator
        super().__init__(
            f"gain denominator {denominator:.3e} below guard at r={r:.6g}, beta={beta:.6g}"
        )


class DimensionMismatch(ReentryError):
    """Operands have incompatible or unsupported dimensions."""


class NonFiniteState(ReentryError):
    """A state vector left the finite range during stepping."""

    def __init__(self, t: float, message: str = ""):
        self.t = t
        super().__init__(message or f"state became non-finite at t={t:.6g}")


class NonFiniteJacobian(ReentryError):
    """A finite-difference Jacobian quotient was not finite."""


class NoConvergence(ReentryError):
    """Iterative spectral computation hit its iteration cap.

    ``partial`` holds whatever eigenvalues were deflated before the stall.
    """

    def __init__(self, message: str, partial=None):
        self.partial = list(partial) if partial is not None else []
        super().__init__(message)


class LengthMismatch(ReentryError):
    """Aligned sequences have different lengths."""


class ConfigInvalid(ReentryError):
    """A run configuration failed validation before any computation."""


class IoError(ReentryError):
    """Output files could not be written."""
