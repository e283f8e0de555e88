"""
Spectral data: the dataset and coefficient file formats, and the log-log
growth fits run over them.

Spectral dataset file::

    {"d": 3, "provenance": "...",
     "entries": [{"lambda_j_tilde": [re, im], "c": [re, im], "a0": [re, im]}, ...]}

Coefficient file::

    {"lambda_tilde": [re, im], "lambda_gamma_tilde": 0.25,
     "a": [{"k": -1, "v": [re, im]}, {"k": 0, "v": [re, im]}, ...]}

Saving writes keys in the order above with floats in shortest round-trip
form, so save -> load -> save is byte-identical.
"""

import json
import logging
import math
import os
import tempfile
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
from scipy.stats import linregress

from .exceptions import BadParam, DegenerateWindow, ParseError, ValidationError
from .transforms import CoefficientSequence

logger = logging.getLogger(__name__)

PathLike = Union[str, "os.PathLike[str]"]

MIN_FIT_POINTS = 8
MIN_WEYL_ENTRIES = 32
EXPONENT_SLACK = 0.3
DEFAULT_T_GRID = tuple(np.geomspace(64, 8192, 8))


# ---------------------------------------------------------------------------
# Data model
# ---------------------------------------------------------------------------


def _pair(value: complex) -> list[float]:
    return [float(value.real), float(value.imag)]


def _is_finite(value: complex) -> bool:
    return math.isfinite(value.real) and math.isfinite(value.imag)


@dataclass(frozen=True)
class SpectralEntry:
    """One spectral term: lambda_j_tilde, c(eta, eta_j) and a_0 of eta_j."""

    lambda_j_tilde: complex
    c: complex
    a0: complex

    def to_dict(self) -> dict[str, list[float]]:
        return {
            "lambda_j_tilde": _pair(self.lambda_j_tilde),
            "c": _pair(self.c),
            "a0": _pair(self.a0),
        }


@dataclass(frozen=True)
class SpectralDataset:
    """Spectral entries for a d-dimensional manifold, kept sorted by |lambda_j_tilde|.

    Raises:
        ValidationError: If d < 2, an entry is not finite, or a complementary
            entry violates |2 pi Im lambda| < (d - 1)/2.
    """

    d: int
    entries: tuple[SpectralEntry, ...] = ()
    provenance: str = ""

    def __post_init__(self) -> None:
        if isinstance(self.d, bool) or int(self.d) != self.d or self.d < 2:
            raise ValidationError(f"d must be an integer >= 2, got {self.d!r}", "dimension")
        object.__setattr__(self, "d", int(self.d))
        rho = 0.5 * (self.d - 1)
        entries = []
        for index, entry in enumerate(self.entries):
            values = (
                complex(entry.lambda_j_tilde),
                complex(entry.c),
                complex(entry.a0),
            )
            if not all(_is_finite(v) for v in values):
                raise ValidationError(f"entry {index} is not finite: {entry}", "finite")
            lam = values[0]
            if lam.imag != 0:
                if lam.real != 0:
                    raise ValidationError(
                        f"entry {index}: lambda_j_tilde={lam} is neither real nor "
                        "purely imaginary",
                        "spectral-parameter",
                    )
                if abs(2 * math.pi * lam.imag) >= rho:
                    raise ValidationError(
                        f"entry {index}: complementary lambda_j_tilde={lam} needs "
                        f"|2 pi Im| < {rho}",
                        "complementary-bound",
                    )
            entries.append(SpectralEntry(*values))
        entries.sort(key=lambda e: abs(e.lambda_j_tilde))
        object.__setattr__(self, "entries", tuple(entries))

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([e.lambda_j_tilde for e in self.entries], dtype=complex)

    @property
    def weights(self) -> np.ndarray:
        """c_j * a0_j per entry."""
        return np.array([e.c * e.a0 for e in self.entries], dtype=complex)

    def truncated(self, limit: float) -> "SpectralDataset":
        """Entries with |lambda_j_tilde| <= limit."""
        kept = tuple(e for e in self.entries if abs(e.lambda_j_tilde) <= limit)
        return SpectralDataset(self.d, kept, self.provenance)

    def scaled_c(self, factor: complex) -> "SpectralDataset":
        scaled = tuple(
            SpectralEntry(e.lambda_j_tilde, factor * e.c, e.a0) for e in self.entries
        )
        return SpectralDataset(self.d, scaled, self.provenance)

    def to_dict(self) -> dict[str, Any]:
        return {
            "d": self.d,
            "provenance": self.provenance,
            "entries": [e.to_dict() for e in self.entries],
        }


# ---------------------------------------------------------------------------
# File IO
# ---------------------------------------------------------------------------


def atomic_write_text(path: PathLike, text: str) -> None:
    """Write text through a temporary file in the target directory, then rename."""
    target = Path(path)
    directory = target.parent if str(target.parent) else Path(".")
    fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, target)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _read_json(path: PathLike) -> Any:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON in {path}: {exc.msg}", line=exc.lineno) from exc


def _canonical(payload: Any) -> str:
    return json.dumps(payload, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def _require(obj: Any, key: str, where: str) -> Any:
    if not isinstance(obj, dict):
        raise ParseError(f"expected an object, got {type(obj).__name__}", field=where or None)
    if key not in obj:
        raise ParseError("missing key", field=f"{where}.{key}" if where else key)
    return obj[key]


def _number(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"expected a number, got {value!r}", field=where)
    return float(value)


def _complex(value: Any, where: str) -> complex:
    if not isinstance(value, list) or len(value) != 2:
        raise ParseError(f"expected [re, im], got {value!r}", field=where)
    return complex(_number(value[0], f"{where}[0]"), _number(value[1], f"{where}[1]"))


def spectral_from_dict(payload: Any) -> SpectralDataset:
    """Build a dataset from the parsed JSON object."""
    d = _require(payload, "d", "")
    if isinstance(d, bool) or not isinstance(d, int):
        raise ParseError(f"expected an integer, got {d!r}", field="d")
    provenance = payload.get("provenance", "")
    if not isinstance(provenance, str):
        raise ParseError("expected a string", field="provenance")
    raw_entries = _require(payload, "entries", "")
    if not isinstance(raw_entries, list):
        raise ParseError("expected an array", field="entries")
    entries = []
    for i, raw in enumerate(raw_entries):
        where = f"entries[{i}]"
        entries.append(
            SpectralEntry(
                _complex(_require(raw, "lambda_j_tilde", where), f"{where}.lambda_j_tilde"),
                _complex(_require(raw, "c", where), f"{where}.c"),
                _complex(_require(raw, "a0", where), f"{where}.a0"),
            )
        )
    return SpectralDataset(d, tuple(entries), provenance)


def load_spectral(path: PathLike) -> SpectralDataset:
    """Load and validate a spectral dataset file.

    Raises:
        ParseError: On malformed JSON or a schema violation.
        ValidationError: On values violating a dataset invariant.
    """
    data = spectral_from_dict(_read_json(path))
    logger.debug("loaded %d spectral entries (d=%d) from %s", len(data), data.d, path)
    return data


def dumps_spectral(data: SpectralDataset) -> str:
    return _canonical(data.to_dict())


def save_spectral(data: SpectralDataset, path: PathLike) -> None:
    atomic_write_text(path, dumps_spectral(data))


def coeffs_from_dict(payload: Any) -> CoefficientSequence:
    """Build a coefficient sequence from the parsed JSON object."""
    lam = _complex(_require(payload, "lambda_tilde", ""), "lambda_tilde")
    gamma = _number(_require(payload, "lambda_gamma_tilde", ""), "lambda_gamma_tilde")
    raw = _require(payload, "a", "")
    if not isinstance(raw, list):
        raise ParseError("expected an array", field="a")
    if not (_is_finite(lam) and math.isfinite(gamma)):
        raise ValidationError("lambda_tilde and lambda_gamma_tilde must be finite", "finite")
    if gamma <= 0:
        raise ValidationError(
            f"lambda_gamma_tilde must be positive, got {gamma}", "positive-length"
        )
    mapping: dict[int, complex] = {}
    for i, item in enumerate(raw):
        where = f"a[{i}]"
        k = _require(item, "k", where)
        if isinstance(k, bool) or not isinstance(k, int):
            raise ParseError(f"expected an integer, got {k!r}", field=f"{where}.k")
        value = _complex(_require(item, "v", where), f"{where}.v")
        if not _is_finite(value):
            raise ValidationError(f"a_{k} is not finite", "finite")
        if k in mapping:
            raise ValidationError(f"index k={k} appears twice", "unique-index")
        mapping[k] = value
    return CoefficientSequence.from_mapping(mapping, lam, gamma)


def load_coeffs(path: PathLike) -> CoefficientSequence:
    """Load and validate a coefficient file.

    Raises:
        ParseError: On malformed JSON or a schema violation.
        ValidationError: On non-finite values, duplicate indices or a
            non-positive lambda_gamma_tilde.
    """
    coeffs = coeffs_from_dict(_read_json(path))
    logger.debug(
        "loaded coefficients k in [%d, %d] from %s", coeffs.k_min, coeffs.k_max, path
    )
    return coeffs


def dumps_coeffs(coeffs: CoefficientSequence) -> str:
    if coeffs.lambda_tilde is None or coeffs.lambda_gamma_tilde is None:
        raise BadParam("saving coefficients needs lambda_tilde and lambda_gamma_tilde")
    payload = {
        "lambda_tilde": _pair(complex(coeffs.lambda_tilde)),
        "lambda_gamma_tilde": float(coeffs.lambda_gamma_tilde),
        "a": [
            {"k": int(k), "v": _pair(complex(v))}
            for k, v in zip(coeffs.ks, coeffs.values)
        ],
    }
    return _canonical(payload)


def save_coeffs(coeffs: CoefficientSequence, path: PathLike) -> None:
    atomic_write_text(path, dumps_coeffs(coeffs))


# ---------------------------------------------------------------------------
# Growth fits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GrowthFit:
    """Least-squares fit log y = log constant + exponent * log x."""

    exponent: float
    constant: float
    r_squared: float
    window: tuple[float, float]
    n_points: int
    excluded_zeros: int = 0
    flagged: bool = False
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "exponent": self.exponent,
            "constant": self.constant,
            "r_squared": self.r_squared,
            "window": list(self.window),
            "n_points": self.n_points,
            "excluded_zeros": self.excluded_zeros,
            "flagged": self.flagged,
            "notes": list(self.notes),
        }


def _loglog_fit(x: np.ndarray, y: np.ndarray, min_points: int = MIN_FIT_POINTS) -> GrowthFit:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    positive = y > 0
    excluded = int(np.count_nonzero(~positive))
    xs, ys = x[positive], y[positive]
    if xs.size < min_points:
        raise DegenerateWindow(
            f"need at least {min_points} positive points, got {xs.size} "
            f"({excluded} zeros excluded)"
        )
    log_x, log_y = np.log(xs), np.log(ys)
    if np.ptp(log_x) == 0:
        raise DegenerateWindow("all abscissae in the window coincide")
    if np.ptp(log_y) == 0:
        slope, intercept, r_squared = 0.0, float(log_y[0]), 1.0
    else:
        result = linregress(log_x, log_y)
        slope, intercept = float(result.slope), float(result.intercept)
        r_squared = float(result.rvalue**2)
    return GrowthFit(
        exponent=slope,
        constant=math.exp(intercept),
        r_squared=min(max(r_squared, 0.0), 1.0),
        window=(float(xs[0]), float(xs[-1])),
        n_points=int(xs.size),
        excluded_zeros=excluded,
    )


def decay_fit(
    indices: Sequence[float],
    magnitudes: Sequence[float],
    window: Optional[tuple[float, float]] = None,
) -> GrowthFit:
    """Slope of log|c_k| against log k over the indices inside ``window``.

    Zero magnitudes are left out and counted in ``excluded_zeros``.

    Raises:
        DegenerateWindow: If fewer than 8 usable points remain.
    """
    k = np.asarray(indices, dtype=float)
    mags = np.abs(np.asarray(magnitudes))
    if k.shape != mags.shape:
        raise BadParam(f"indices {k.shape} and magnitudes {mags.shape} differ in shape")
    keep = k > 0
    if window is not None:
        lo, hi = window
        if lo > hi:
            raise DegenerateWindow(f"empty window {window}")
        keep &= (k >= lo) & (k <= hi)
    order = np.argsort(k[keep])
    return _loglog_fit(k[keep][order], mags[keep][order])


def _partial_sums(coeffs: CoefficientSequence) -> np.ndarray:
    """S[T] = sum over |k| <= T of |a_k|**2, for T = 0 .. max |k|."""
    ks = np.abs(coeffs.ks)
    mass = np.abs(coeffs.values) ** 2
    return np.cumsum(np.bincount(ks, weights=mass))


def partial_sum_exponent(
    coeffs: CoefficientSequence, T_grid: Optional[Iterable[float]] = None
) -> GrowthFit:
    """Slope of log(sum over |k| <= T of |a_k|**2) against log T.

    The default grid is 8 geometric points from 64 to 8192, scaled down
    when the coefficient range is shorter.

    Raises:
        DegenerateWindow: If the grid leaves the coefficient range or has
            fewer than 8 points.
    """
    reach = min(-coeffs.k_min, coeffs.k_max)
    if T_grid is None:
        top = min(DEFAULT_T_GRID[-1], reach)
        if top < MIN_FIT_POINTS:
            raise DegenerateWindow(f"coefficient range |k| <= {reach} is too short")
        T = np.unique(np.floor(np.geomspace(max(1.0, top / 128.0), top, 8)))
    else:
        T = np.asarray(list(T_grid), dtype=float)
        if np.any(np.diff(T) <= 0):
            raise BadParam("T_grid must be strictly increasing")
        if T.size and (T[0] < 1 or T[-1] > reach):
            raise DegenerateWindow(
                f"T_grid [{T[0]}, {T[-1]}] leaves the symmetric range |k| <= {reach}"
            )
    sums = _partial_sums(coeffs)
    values = sums[np.floor(T).astype(np.intp)]
    return _loglog_fit(T, values)


def _radius_fit(
    data: SpectralDataset,
    cumulative: np.ndarray,
    window: Optional[tuple[float, float]],
) -> GrowthFit:
    """Fit a cumulative quantity against |lambda_j_tilde|, skipping lambda = 0."""
    radii = np.abs(data.lambdas)
    keep = radii > 0
    if window is not None:
        lo, hi = window
        if lo > hi:
            raise DegenerateWindow(f"empty window {window}")
        keep &= (radii >= lo) & (radii <= hi)
    fit = _loglog_fit(radii[keep], cumulative[keep])
    zeros = int(np.count_nonzero(radii == 0))
    return GrowthFit(
        fit.exponent, fit.constant, fit.r_squared, fit.window, fit.n_points,
        fit.excluded_zeros + zeros,
    )


def weyl_check(
    data: SpectralDataset,
    d: Optional[int] = None,
    window: Optional[tuple[float, float]] = None,
) -> GrowthFit:
    """Slope of log #{j : |lambda_j_tilde| <= x} against log x.

    Flagged when the exponent is more than 0.3 away from d. Entries with
    lambda_j_tilde = 0 have no logarithm and are counted as excluded; they
    still count towards the entries below every x.

    Raises:
        DegenerateWindow: With fewer than 32 entries.
    """
    dim = data.d if d is None else int(d)
    if len(data) < MIN_WEYL_ENTRIES:
        raise DegenerateWindow(
            f"Weyl check needs at least {MIN_WEYL_ENTRIES} entries, got {len(data)}"
        )
    counts = np.arange(1, len(data) + 1, dtype=float)
    fit = _radius_fit(data, counts, window)
    flagged = abs(fit.exponent - dim) > EXPONENT_SLACK
    if flagged:
        logger.warning("Weyl exponent %.3f differs from d=%d", fit.exponent, dim)
    return replace(fit, flagged=flagged, notes=[f"expected exponent {dim}"])


def triple_growth_check(
    data: SpectralDataset,
    d: Optional[int] = None,
    window: Optional[tuple[float, float]] = None,
) -> GrowthFit:
    """Slope of log(sum over |lambda_j_tilde| <= x of |c_j|**2) against log x.

    Flagged when the exponent exceeds d + 0.3. Only |c_j| enters, so phases
    and signs of c_j do not change the fit.

    Raises:
        DegenerateWindow: With fewer than 8 usable points.
    """
    dim = data.d if d is None else int(d)
    c = np.array([e.c for e in data.entries], dtype=complex)
    fit = _radius_fit(data, np.cumsum(np.abs(c) ** 2), window)
    flagged = fit.exponent > dim + EXPONENT_SLACK
    if flagged:
        logger.warning("triple-product growth exponent %.3f exceeds d=%d", fit.exponent, dim)
    return replace(fit, flagged=flagged, notes=[f"bound exponent {dim}"])
