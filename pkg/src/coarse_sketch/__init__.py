"""Turnstile streaming sketches for distinct elements, l_p, heavy hitters, Schatten and cascaded norms."""

from .space import EstimateReport, SpaceReport, space_report
from .stream import MatrixStream, TurnstileStream, accumulate, exact_moment

__all__ = ["EstimateReport", "MatrixStream", "SpaceReport", "TurnstileStream", "accumulate", "exact_moment",
           "space_report"]
__version__ = "0.1.0"
