"""
Both sides of the geodesic summation formulae and the residual report.

Left side:  sum over k of |a_k|**2 * lhs_weight(k).
Right side (d = 2):   2 * sum over j of c_j a0_j beta(lambda_j) (c1 + c2 + c3)(lambda_j).
Right side (d >= 3):  sum over j of c_j a0_j beta(lambda_j) R_phi(lambda_j),
where R_phi already carries the (d-2) vol(B_{d-2}) prefactor.

Nothing here asserts that the two sides agree. The identity needs genuinely
automorphic data; for anything else the report just records the residual.

    report = sumcheck(coeffs, data, PhiT(4.0, build_psi()), params)
    print(report.to_json())
"""

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any, NamedTuple, Optional, Union

import numpy as np

from .config import Tolerances, default_tolerances
from .exceptions import BadParam, DimensionMismatch
from .kernels import beta_fn, r_phi_closed_d2, r_phi_kernel
from .quadcore import Quadrature1DSpec, compensated_sum, integrate_1d, integrate_oscillatory
from .spectra import SpectralDataset
from .testfn import BumpPsi, PhiT, TwoVariableFunction, psi_hat
from .transforms import CoefficientSequence, ModelParams, lhs_weight

logger = logging.getLogger(__name__)

ComplexArray = Union[complex, np.ndarray]

WEIGHT_DROP_RATIO = 1e-14
RESIDUAL_GUARD = 1e-300
EDGE_TERMS = 4
TAIL_FACTOR = 4
SHELLS = 4
SHELL_POINTS = 5
MIN_SHELL_START = 0.5
HOMOGENEITY_SCALE = 2.0 + 0.5j
FACTORIZATION_MATCH = 1e-6


def _pair(value: complex) -> list[float]:
    value = complex(value)
    return [value.real, value.imag]


def _label(value: Any) -> Any:
    if isinstance(value, (complex, np.complexfloating)):
        return _pair(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    return float(value)


@dataclass(frozen=True)
class TermBreakdown:
    """Per-term record of one side of a summation formula.

    ``labels`` are the k indices (left side) or lambda_j_tilde values (right
    side) in summation order; ``terms = coefficient * weights`` term by term.
    ``dropped`` counts terms left out because their weight was negligible.
    """

    value: complex
    labels: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    terms: np.ndarray = field(repr=False)
    truncation_bound: float = 0.0
    dropped: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "value": _pair(self.value),
            "labels": [_label(v) for v in self.labels],
            "weights": [_pair(v) for v in self.weights],
            "terms": [_pair(v) for v in self.terms],
            "truncation_bound": self.truncation_bound,
            "dropped": self.dropped,
        }


def _empty(labels_dtype: Any = int) -> TermBreakdown:
    none = np.zeros(0, dtype=complex)
    return TermBreakdown(0j, np.zeros(0, dtype=labels_dtype), none, none)


# ---------------------------------------------------------------------------
# Left side
# ---------------------------------------------------------------------------


def _weight_method(phi: TwoVariableFunction, method: Optional[str]) -> str:
    if method is not None:
        return method
    return "closed" if isinstance(phi, PhiT) else "quadrature"


def lhs_sum(
    coeffs: CoefficientSequence,
    phi: TwoVariableFunction,
    p: ModelParams,
    tolerances: Optional[Tolerances] = None,
    method: Optional[str] = None,
) -> TermBreakdown:
    """Compensated sum of |a_k|**2 * lhs_weight(k), ascending |k|, negatives first.

    Terms whose weight is below 1e-14 of the largest weight are dropped. The
    truncation bound adds their mass to an estimate of the tail beyond the
    coefficient range, which assumes |a_k|**2 outside the range stays below
    its largest value on the outermost four indices of each side.
    """
    method = _weight_method(phi, method)
    ks, values = coeffs.ordered()
    mass = np.abs(values) ** 2
    weights = np.atleast_1d(lhs_weight(phi, p, ks, method=method, tolerances=tolerances))

    magnitude = np.abs(weights)
    keep = magnitude >= WEIGHT_DROP_RATIO * float(np.max(magnitude))
    terms = mass * weights
    value = compensated_sum(np.where(keep, terms, 0.0))
    dropped_mass = float(np.sum(np.abs(terms[~keep])))

    tail = _lhs_tail(coeffs, phi, p, tolerances, method)
    bound = dropped_mass + tail
    logger.debug(
        "lhs_sum: %d terms, %d dropped, truncation bound %.3e",
        len(ks), int(np.count_nonzero(~keep)), bound,
    )
    return TermBreakdown(
        value, ks, weights, np.where(keep, terms, 0.0), bound, int(np.count_nonzero(~keep))
    )


def _lhs_tail(
    coeffs: CoefficientSequence,
    phi: TwoVariableFunction,
    p: ModelParams,
    tolerances: Optional[Tolerances],
    method: str,
) -> float:
    span = TAIL_FACTOR * max(len(coeffs), 4 * EDGE_TERMS)
    mass = np.abs(coeffs.values) ** 2
    total = 0.0
    sides = (
        (mass[-EDGE_TERMS:], np.arange(coeffs.k_max + 1, coeffs.k_max + span + 1)),
        (mass[:EDGE_TERMS], np.arange(coeffs.k_min - span, coeffs.k_min)),
    )
    for edge, beyond in sides:
        edge_max = float(np.max(edge))
        if edge_max == 0.0:
            continue
        outside = np.atleast_1d(
            lhs_weight(phi, p, beyond, method=method, tolerances=tolerances)
        )
        total += edge_max * math.fsum(np.abs(outside).tolist())
    return total


# ---------------------------------------------------------------------------
# Right side
# ---------------------------------------------------------------------------


def _shell_points(data: SpectralDataset) -> tuple[np.ndarray, np.ndarray]:
    """Sample points of the shells [2**i L, 2**(i+1) L] beyond the data and their entry counts."""
    reach = max(float(np.max(np.abs(data.lambdas))), MIN_SHELL_START)
    points = []
    counts = []
    for i in range(SHELLS):
        lo, hi = reach * 2.0**i, reach * 2.0 ** (i + 1)
        points.append(np.geomspace(lo, hi, SHELL_POINTS))
        counts.append(len(data) * (2.0 ** (data.d * (i + 1)) - 2.0 ** (data.d * i)))
    return np.concatenate(points), np.asarray(counts)


def _rhs_tail(data: SpectralDataset, shell_values: np.ndarray, counts: np.ndarray) -> float:
    """Weyl-law count of unseen entries per shell times the largest weight in the shell.

    Assumes |c_j a0_j| beyond the data stays below its largest value on the
    last four entries.
    """
    edge = float(np.max(np.abs(data.weights[-EDGE_TERMS:])))
    per_shell = np.abs(shell_values).reshape(SHELLS, SHELL_POINTS).max(axis=1)
    return edge * math.fsum((counts * per_shell).tolist())


def _assemble_rhs(
    data: SpectralDataset, kernel_values: np.ndarray, prefactor: float
) -> TermBreakdown:
    n = len(data)
    weights = prefactor * kernel_values[:n]
    terms = data.weights * weights
    _, counts = _shell_points(data)
    bound = _rhs_tail(data, prefactor * kernel_values[n:], counts)
    return TermBreakdown(compensated_sum(terms), data.lambdas, weights, terms, bound)


def rhs_sum_d2(
    data: SpectralDataset,
    phi: TwoVariableFunction,
    tolerances: Optional[Tolerances] = None,
) -> TermBreakdown:
    """2 * sum of c_j a0_j beta(lambda_j) (c1 + c2 + c3)(lambda_j), ascending |lambda_j|.

    Raises:
        DimensionMismatch: If the dataset is not two-dimensional.
    """
    if data.d != 2:
        raise DimensionMismatch(f"rhs_sum_d2 needs a d=2 dataset, got d={data.d}")
    if not len(data):
        return _empty(complex)
    points, _ = _shell_points(data)
    lam = np.concatenate([data.lambdas, points])
    inner = np.asarray(r_phi_closed_d2(phi, lam, tolerances).total)
    kernel_values = np.asarray(beta_fn(lam, 2)) * inner
    return _assemble_rhs(data, kernel_values, 2.0)


def rhs_sum_general(
    data: SpectralDataset,
    phi: TwoVariableFunction,
    d: Optional[int] = None,
    tolerances: Optional[Tolerances] = None,
    method: str = "slices",
) -> TermBreakdown:
    """Sum of c_j a0_j beta(lambda_j) R_phi(lambda_j) for d >= 3.

    Raises:
        DimensionMismatch: If ``d`` disagrees with the dataset.
        BadParam: If d < 3.
    """
    d = data.d if d is None else int(d)
    if d != data.d:
        raise DimensionMismatch(f"d={d} but the dataset has d={data.d}")
    if d < 3:
        raise BadParam(f"rhs_sum_general needs d >= 3, got {d}")
    if not len(data):
        return _empty(complex)
    points, _ = _shell_points(data)
    lam = np.concatenate([data.lambdas, points])
    inner = np.asarray(r_phi_kernel(phi, lam, d, method=method, tolerances=tolerances))
    kernel_values = np.asarray(beta_fn(lam, d)) * inner
    return _assemble_rhs(data, kernel_values, 1.0)


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------


def _rel_err(a: complex, b: complex) -> float:
    return abs(a - b) / max(abs(a), abs(b), RESIDUAL_GUARD)


@dataclass(frozen=True)
class SummationReport:
    lhs: complex
    rhs: complex
    residual_abs: float
    residual_rel: float
    lhs_terms: TermBreakdown
    rhs_terms: TermBreakdown
    truncation_bounds: dict[str, float]
    homogeneity: dict[str, Any]
    params: ModelParams
    run_config: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "params": self.params.to_dict(),
            "lhs": _pair(self.lhs),
            "rhs": _pair(self.rhs),
            "residual_abs": self.residual_abs,
            "residual_rel": self.residual_rel,
            "truncation_bounds": dict(self.truncation_bounds),
            "homogeneity": dict(self.homogeneity),
            "lhs_terms": self.lhs_terms.to_dict(),
            "rhs_terms": self.rhs_terms.to_dict(),
            "run_config": dict(self.run_config),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _homogeneity(
    coeffs: CoefficientSequence,
    data: SpectralDataset,
    lhs: TermBreakdown,
    rhs: TermBreakdown,
) -> dict[str, Any]:
    """Rescale a_k and c_j by s and compare against |s|**2 lhs and s rhs."""
    s = HOMOGENEITY_SCALE
    _, values = coeffs.ordered()
    kept = lhs.terms != 0
    scaled_lhs = compensated_sum(np.where(kept, np.abs(s * values) ** 2 * lhs.weights, 0.0))
    c = np.array([e.c for e in data.entries], dtype=complex)
    a0 = np.array([e.a0 for e in data.entries], dtype=complex)
    scaled_rhs = compensated_sum((s * c) * a0 * rhs.weights)
    return {
        "s": _pair(s),
        "lhs_rel_err": _rel_err(scaled_lhs, abs(s) ** 2 * lhs.value),
        "rhs_rel_err": _rel_err(scaled_rhs, s * rhs.value),
    }


def sumcheck(
    coeffs: CoefficientSequence,
    data: SpectralDataset,
    phi: TwoVariableFunction,
    p: ModelParams,
    tolerances: Optional[Tolerances] = None,
    run_config: Optional[dict[str, Any]] = None,
) -> SummationReport:
    """Evaluate both sides for the given data and report the residual.

    Raises:
        DimensionMismatch: If the dataset and the model disagree on d.
    """
    if data.d != p.d:
        raise DimensionMismatch(f"spectral data has d={data.d}, model has d={p.d}")
    tol = tolerances or default_tolerances()
    lhs = lhs_sum(coeffs, phi, p, tol)
    rhs = rhs_sum_d2(data, phi, tol) if p.d == 2 else rhs_sum_general(data, phi, p.d, tol)
    residual = abs(lhs.value - rhs.value)
    report = SummationReport(
        lhs=lhs.value,
        rhs=rhs.value,
        residual_abs=residual,
        residual_rel=residual / max(abs(lhs.value), abs(rhs.value), RESIDUAL_GUARD),
        lhs_terms=lhs,
        rhs_terms=rhs,
        truncation_bounds={"lhs": lhs.truncation_bound, "rhs": rhs.truncation_bound},
        homogeneity=_homogeneity(coeffs, data, lhs, rhs),
        params=p,
        run_config=dict(run_config or {}),
    )
    logger.info(
        "sumcheck d=%d: lhs=%s rhs=%s residual=%.3e",
        p.d, report.lhs, report.rhs, report.residual_abs,
    )
    return report


# ---------------------------------------------------------------------------
# Factorized d = 2 inner integral
# ---------------------------------------------------------------------------


class GrowthFactor(NamedTuple):
    """The factorized inner integral of the d = 2 right side.

    value = weight_factor * (cosh_part + sinh_part), where
    weight_factor = psi_hat(-lambda - 3/(4 pi i)) is what substituting
    u = a - b, v = (a + b)/2 produces. alt_weight_factor uses
    psi_hat(-lambda - 1/(4 pi i)) instead.
    """

    value: ComplexArray
    cosh_part: ComplexArray
    sinh_part: ComplexArray
    weight_factor: ComplexArray
    alt_weight_factor: ComplexArray

    @property
    def alt_value(self) -> ComplexArray:
        return self.alt_weight_factor * (self.cosh_part + self.sinh_part)


def _sinh_ratio(y: np.ndarray) -> np.ndarray:
    """2 sinh(y/2)/y, continuous at 0."""
    small = y < 1e-6
    safe = np.where(small, 1.0, y)
    return np.where(small, 1.0 + y * y / 24.0, 2.0 * np.sinh(0.5 * safe) / safe)


def growth_factor(
    psi: BumpPsi,
    lam_j_tilde: Any,
    T: float,
    d: int = 2,
    tolerances: Optional[Tolerances] = None,
) -> GrowthFactor:
    """The 1D factors of the d = 2 inner integral for phi_T.

    cosh_part = integral of psi(a) (2 cosh(a/2T))**(z - 1/2) da,
    sinh_part = integral of psi(a) (2 sinh(|a|/2T))**(z - 1/2) da.
    The sinh part is written as T**(1/2 - z) |a|**(z - 1/2) times a smooth
    factor, and |a| = exp(-v) turns the singular power into a Filon rate.
    """
    if d != 2:
        raise BadParam(f"the factorized inner integral exists for d=2 only, got d={d}")
    if not (math.isfinite(T) and T > 0):
        raise BadParam(f"T must be positive and finite, got {T}")
    lam = np.asarray(lam_j_tilde, dtype=complex)
    scalar = lam.ndim == 0
    lam = lam.ravel()
    z = 2j * np.pi * lam
    shift = z - 0.5
    tol = tolerances or default_tolerances()
    lo, hi = psi.support

    def cosh_integrand(a: np.ndarray) -> np.ndarray:
        log_base = np.log(2.0 * np.cosh(a / (2.0 * T)))
        return np.asarray(psi(a))[:, None] * np.exp(np.multiply.outer(log_base, shift))

    cosh_part = np.asarray(
        integrate_1d(
            cosh_integrand, Quadrature1DSpec((lo, hi), tol.abs_tol, tol.rel_tol)
        ).value
    )

    reach = max(abs(lo), abs(hi))

    def sinh_amplitude(v: np.ndarray) -> np.ndarray:
        x = np.exp(-v)
        smooth = np.exp(np.multiply.outer(np.log(_sinh_ratio(x / T)), shift))
        return (np.asarray(psi(x)) + np.asarray(psi(-x)))[:, None] * smooth

    spec = Quadrature1DSpec(
        (-math.log(reach), math.inf), tol.abs_tol, tol.rel_tol, decay_declared=True
    )
    sinh_scaled = np.asarray(integrate_oscillatory(sinh_amplitude, -(z + 0.5), spec).value)
    sinh_part = np.exp(-shift * math.log(T)) * sinh_scaled

    weight = np.asarray(psi_hat(psi, -lam - 3.0 / (4j * np.pi)))
    alt_weight = np.asarray(psi_hat(psi, -lam - 1.0 / (4j * np.pi)))
    value = weight * (cosh_part + sinh_part)

    def out(arr: np.ndarray) -> ComplexArray:
        return complex(arr.reshape(-1)[0]) if scalar else arr

    return GrowthFactor(
        out(value), out(cosh_part), out(sinh_part), out(weight), out(alt_weight)
    )


class FactorizationCheck(NamedTuple):
    direct: complex
    three_halves: complex
    one_half: complex
    rel_err_three_halves: float
    rel_err_one_half: float
    match: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "direct": _pair(self.direct),
            "three_halves": _pair(self.three_halves),
            "one_half": _pair(self.one_half),
            "rel_err_three_halves": self.rel_err_three_halves,
            "rel_err_one_half": self.rel_err_one_half,
            "match": self.match,
        }


def factorization_check(
    psi: BumpPsi,
    lam_j_tilde: complex,
    T: float,
    tolerances: Optional[Tolerances] = None,
) -> FactorizationCheck:
    """Compare the 2D inner integral for phi_T with both 1D factorizations.

    ``match`` names the weight that reproduces the 2D value to 1e-6
    ("three_halves" for e^(v (3/2 + z)), "one_half" for e^(v (1/2 + z))),
    or "none".
    """
    direct = complex(r_phi_closed_d2(PhiT(T, psi), complex(lam_j_tilde), tolerances).total)
    factors = growth_factor(psi, complex(lam_j_tilde), T, tolerances=tolerances)
    three = complex(factors.value)
    one = complex(factors.alt_value)
    err_three = _rel_err(direct, three)
    err_one = _rel_err(direct, one)
    if err_three <= FACTORIZATION_MATCH and err_three <= err_one:
        match = "three_halves"
    elif err_one <= FACTORIZATION_MATCH:
        match = "one_half"
    else:
        match = "none"
    logger.info(
        "factorization at lambda=%s, T=%g: 3/2 err %.2e, 1/2 err %.2e -> %s",
        lam_j_tilde, T, err_three, err_one, match,
    )
    return FactorizationCheck(direct, three, one, err_three, err_one, match)
