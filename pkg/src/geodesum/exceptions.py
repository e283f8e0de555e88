"""
Error hierarchy for geodesum.

Every error derives from GeodesumError and from the builtin that matches its
meaning, so ``except ValueError`` keeps catching bad input.
"""

from typing import Optional


class GeodesumError(Exception):
    """Base class for all geodesum errors."""


class BadParam(GeodesumError, ValueError):
    """A parameter lies outside its documented range."""


class PoleError(GeodesumError, ValueError):
    """Argument too close to a pole of the Gamma function."""


class GridResolution(GeodesumError, ValueError):
    """A sampled grid is too coarse, or a derived grid would be too large."""


class CoincidentArguments(GeodesumError, ValueError):
    """Kernel evaluated on (or numerically on) the diagonal a = b."""


class DimensionMismatch(GeodesumError, ValueError):
    """Inputs disagree on the manifold dimension d."""


class DegenerateWindow(GeodesumError, ValueError):
    """A fit window holds too few usable points."""


class NonConvergence(GeodesumError, ArithmeticError):
    """An adaptive rule exhausted its budget before reaching tolerance."""


class NonFinite(GeodesumError, ArithmeticError):
    """A NaN or infinity appeared where a finite value is required."""


class NearSingular(GeodesumError, ArithmeticError):
    """A Jacobian check was requested too close to a singular point."""


class ConstructionFailure(GeodesumError, RuntimeError):
    """A test function could not be certified with the given parameters."""


class RegionResolutionError(GeodesumError, RuntimeError):
    """The integration region implied by a support box is unusable."""


class ParseError(GeodesumError, ValueError):
    """A data file could not be parsed against its schema."""

    def __init__(
        self, message: str, line: Optional[int] = None, field: Optional[str] = None
    ) -> None:
        location = []
        if line is not None:
            location.append(f"line {line}")
        if field is not None:
            location.append(f"field '{field}'")
        suffix = f" ({', '.join(location)})" if location else ""
        super().__init__(f"{message}{suffix}")
        self.line = line
        self.field = field


class ValidationError(GeodesumError, ValueError):
    """Parsed data violates a dataset invariant."""

    def __init__(self, message: str, invariant: str) -> None:
        super().__init__(f"{message} [invariant: {invariant}]")
        self.invariant = invariant
