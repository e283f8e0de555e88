"""
Tolerance configuration.

Defaults are abs 1e-12 and rel 1e-10. The environment variables
``GEODESUM_ABS_TOL`` and ``GEODESUM_REL_TOL`` override them process-wide; the
CLI flags ``--abs-tol``/``--rel-tol`` override both for one run.
"""

import logging
import os
from dataclasses import dataclass

from .exceptions import BadParam

logger = logging.getLogger(__name__)

DEFAULT_ABS_TOL = 1e-12
DEFAULT_REL_TOL = 1e-10

ABS_TOL_ENV = "GEODESUM_ABS_TOL"
REL_TOL_ENV = "GEODESUM_REL_TOL"


@dataclass(frozen=True)
class Tolerances:
    """An (absolute, relative) tolerance pair."""

    abs_tol: float = DEFAULT_ABS_TOL
    rel_tol: float = DEFAULT_REL_TOL

    def __post_init__(self) -> None:
        if not (self.abs_tol >= 0 and self.rel_tol >= 0):
            raise BadParam(
                f"tolerances must be non-negative, got abs={self.abs_tol}, "
                f"rel={self.rel_tol}"
            )
        if self.abs_tol == 0 and self.rel_tol == 0:
            raise BadParam("abs_tol and rel_tol cannot both be zero")

    def to_dict(self) -> dict[str, float]:
        return {"abs_tol": self.abs_tol, "rel_tol": self.rel_tol}


def _read_env(name: str, fallback: float) -> float:
    raw = os.environ.get(name)
    if raw is None or raw.strip() == "":
        return fallback
    try:
        value = float(raw)
    except ValueError:
        raise BadParam(f"{name}={raw!r} is not a number") from None
    if not value >= 0:
        raise BadParam(f"{name}={raw!r} must be a non-negative number")
    logger.debug("tolerance override from environment: %s=%s", name, value)
    return value


def default_tolerances() -> Tolerances:
    """Return the default tolerances, honouring the environment overrides."""
    return Tolerances(
        abs_tol=_read_env(ABS_TOL_ENV, DEFAULT_ABS_TOL),
        rel_tol=_read_env(REL_TOL_ENV, DEFAULT_REL_TOL),
    )
