"""
Spectral-side transforms: the intertwining integrals I_k and the double
transform w_hat(k, -k) together with its closed form for phi_T.

For a one-variable phi,

    I_k = integral of phi(t) exp(-c_k t) dt,
    c_k = 2 pi i lambda_tilde + (d - 1)/2 + 2 pi i k lambda_gamma_tilde.

For phi_T the double transform factorizes after u = a - b, v = (a + b)/2:

    w_hat(k) = psi_hat((d - 1)/(2 pi i)) * psi_hat((lambda_tilde + k lambda_gamma_tilde)/T)

and the weight in the summation formulae is ``lhs_weight(k) = w_hat`` evaluated
at (-lambda_tilde, -k).
"""

import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Any, Optional, Union

import numpy as np

from .config import Tolerances, default_tolerances
from .exceptions import BadParam, NonFinite
from .quadcore import Quadrature1DSpec, integrate_2d, integrate_oscillatory
from .testfn import PhiT, SampledFunction, TwoVariableFunction, psi_hat

logger = logging.getLogger(__name__)

KArray = Union[int, np.ndarray]
METHODS = ("quadrature", "samples")
WEIGHT_METHODS = ("closed", "quadrature")


@dataclass(frozen=True)
class ModelParams:
    """Dimension d, spectral parameter lambda_tilde and lambda_gamma_tilde = 1/length."""

    d: int
    lambda_tilde: complex
    lambda_gamma_tilde: float

    def __post_init__(self) -> None:
        if isinstance(self.d, bool) or int(self.d) != self.d or self.d < 2:
            raise BadParam(f"d must be an integer >= 2, got {self.d!r}")
        object.__setattr__(self, "d", int(self.d))
        lam = complex(self.lambda_tilde)
        if not (math.isfinite(lam.real) and math.isfinite(lam.imag)):
            raise BadParam(f"lambda_tilde must be finite, got {lam}")
        if lam.imag != 0:
            if lam.real != 0:
                raise BadParam(
                    f"lambda_tilde must be real or purely imaginary, got {lam}"
                )
            if abs(2 * math.pi * lam.imag) >= self.rho:
                raise BadParam(
                    f"complementary lambda_tilde={lam} violates "
                    f"|2 pi Im| < (d-1)/2 = {self.rho}"
                )
        object.__setattr__(self, "lambda_tilde", lam)
        gamma = float(self.lambda_gamma_tilde)
        if not (math.isfinite(gamma) and gamma > 0):
            raise BadParam(f"lambda_gamma_tilde must be positive and finite, got {gamma}")
        object.__setattr__(self, "lambda_gamma_tilde", gamma)

    @property
    def rho(self) -> float:
        return 0.5 * (self.d - 1)

    @property
    def is_complementary(self) -> bool:
        return self.lambda_tilde.imag != 0

    def rate(self, k: KArray) -> Union[complex, np.ndarray]:
        """c_k = 2 pi i lambda_tilde + (d-1)/2 + 2 pi i k lambda_gamma_tilde."""
        k_arr = np.asarray(k, dtype=float)
        out = (
            2j * np.pi * self.lambda_tilde
            + self.rho
            + 2j * np.pi * k_arr * self.lambda_gamma_tilde
        )
        return complex(out) if np.ndim(out) == 0 else out

    def to_dict(self) -> dict[str, Any]:
        return {
            "d": self.d,
            "lambda_tilde": [self.lambda_tilde.real, self.lambda_tilde.imag],
            "lambda_gamma_tilde": self.lambda_gamma_tilde,
        }


@dataclass(frozen=True)
class CoefficientSequence:
    """Coefficients a_k for k_min <= k <= k_max (zero outside the range)."""

    k_min: int
    k_max: int
    values: np.ndarray = field(repr=False)
    lambda_tilde: Optional[complex] = None
    lambda_gamma_tilde: Optional[float] = None

    def __post_init__(self) -> None:
        if not self.k_min <= 0 <= self.k_max:
            raise BadParam(
                f"need k_min <= 0 <= k_max, got k_min={self.k_min}, k_max={self.k_max}"
            )
        values = np.array(self.values, dtype=complex)
        expected = self.k_max - self.k_min + 1
        if values.shape != (expected,):
            raise BadParam(
                f"expected {expected} coefficients for k in "
                f"[{self.k_min}, {self.k_max}], got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            bad = int(self.k_min + np.flatnonzero(~np.isfinite(values))[0])
            raise NonFinite(f"coefficient a_{bad} is not finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_mapping(
        cls,
        mapping: Mapping[int, complex],
        lambda_tilde: Optional[complex] = None,
        lambda_gamma_tilde: Optional[float] = None,
    ) -> "CoefficientSequence":
        """Build from {k: a_k}; missing indices inside the range are zero."""
        keys = [int(k) for k in mapping]
        k_min = min([0, *keys])
        k_max = max([0, *keys])
        values = np.zeros(k_max - k_min + 1, dtype=complex)
        for k, v in mapping.items():
            values[int(k) - k_min] = complex(v)
        return cls(k_min, k_max, values, lambda_tilde, lambda_gamma_tilde)

    @classmethod
    def zeros(cls, k_min: int = 0, k_max: int = 0) -> "CoefficientSequence":
        return cls(k_min, k_max, np.zeros(k_max - k_min + 1, dtype=complex))

    @property
    def ks(self) -> np.ndarray:
        return np.arange(self.k_min, self.k_max + 1)

    def __len__(self) -> int:
        return int(self.values.shape[0])

    def __getitem__(self, k: int) -> complex:
        if self.k_min <= k <= self.k_max:
            return complex(self.values[k - self.k_min])
        return 0j

    def ordered(self) -> tuple[np.ndarray, np.ndarray]:
        """Indices and values in summation order: ascending |k|, negative first."""
        ks = self.ks
        order = np.lexsort((ks, np.abs(ks)))
        return ks[order], self.values[order]

    def scaled(self, factor: complex) -> "CoefficientSequence":
        return CoefficientSequence(
            self.k_min,
            self.k_max,
            factor * self.values,
            self.lambda_tilde,
            self.lambda_gamma_tilde,
        )

    def restricted(self, k_min: int, k_max: int) -> "CoefficientSequence":
        """Sub-range [k_min, k_max] of the sequence."""
        lo = max(k_min, self.k_min)
        hi = min(k_max, self.k_max)
        values = self.values[lo - self.k_min : hi - self.k_min + 1]
        return CoefficientSequence(lo, hi, values, self.lambda_tilde, self.lambda_gamma_tilde)


def _resolve(tolerances: Optional[Tolerances]) -> Tolerances:
    return default_tolerances() if tolerances is None else tolerances


def _unwrap(values: np.ndarray, k: KArray) -> Union[complex, np.ndarray]:
    if np.ndim(k) == 0:
        return complex(np.asarray(values).reshape(-1)[0])
    return np.asarray(values).reshape(np.shape(k))


def intertwine_Ik(
    phi: SampledFunction,
    p: ModelParams,
    k: KArray,
    method: str = "quadrature",
    tolerances: Optional[Tolerances] = None,
) -> Union[complex, np.ndarray]:
    """I_k = integral of phi(t) exp(-c_k t) dt, vectorized over k.

    ``method="quadrature"`` interpolates phi on adaptive Chebyshev panels and
    integrates the oscillatory factor exactly; ``method="samples"`` sums the
    sampled values against the exponential (trapezoid rule), which stays
    accurate far into the decaying tail.
    """
    if method not in METHODS:
        raise BadParam(f"method must be one of {METHODS}, got {method!r}")
    ks = np.atleast_1d(np.asarray(k, dtype=float))
    rates = np.asarray(p.rate(ks), dtype=complex)

    if method == "samples":
        return _unwrap(phi.fourier(rates / (2j * np.pi)), k)

    tol = _resolve(tolerances)
    base_rate = 2j * np.pi * p.lambda_tilde + p.rho

    def amplitude(t: np.ndarray) -> np.ndarray:
        return np.asarray(phi(t)) * np.exp(-base_rate * t)

    spec = Quadrature1DSpec(phi.support, tol.abs_tol, tol.rel_tol)
    result = integrate_oscillatory(amplitude, -(rates - base_rate), spec)
    logger.debug("intertwine_Ik: %d values, err %.3e", ks.shape[0], result.err_est)
    return _unwrap(result.value, k)


def intertwine_Ik_derivative(
    phi: SampledFunction,
    p: ModelParams,
    k: KArray,
    method: str = "quadrature",
    tolerances: Optional[Tolerances] = None,
) -> Union[complex, np.ndarray]:
    """integral of phi'(t) exp(-c_k t) dt, which equals c_k * I_k for compact phi."""
    return intertwine_Ik(phi.derivative(), p, k, method=method, tolerances=tolerances)


def _check_weight_method(phi: TwoVariableFunction, method: str) -> None:
    if method not in WEIGHT_METHODS:
        raise BadParam(f"method must be one of {WEIGHT_METHODS}, got {method!r}")
    if method == "closed" and not isinstance(phi, PhiT):
        raise BadParam("the closed form is only available for PhiT")


def _w_hat_quadrature(
    phi: TwoVariableFunction,
    frequency: np.ndarray,
    rho: float,
    tolerances: Tolerances,
) -> np.ndarray:
    """Double integral of phi(a, b) exp(2 pi i (b - a) freq - (a + b) rho)."""
    (a_lo, a_hi), (b_lo, b_hi) = phi.support_box()
    freq = np.asarray(frequency, dtype=complex)

    def integrand(a: np.ndarray, b: np.ndarray) -> np.ndarray:
        weight = np.asarray(phi(a, b))[..., None]
        phase = np.exp(
            2j * np.pi * (b - a)[..., None] * freq - rho * (a + b)[..., None]
        )
        return weight * phase

    spec_a = Quadrature1DSpec((a_lo, a_hi), tolerances.abs_tol, tolerances.rel_tol)
    spec_b = Quadrature1DSpec((b_lo, b_hi), tolerances.abs_tol, tolerances.rel_tol)
    result = integrate_2d(integrand, spec_a, spec_b, y_limits=phi.b_limits)
    return np.asarray(result.value)


def w_hat(
    phi: TwoVariableFunction,
    p: ModelParams,
    k: KArray,
    method: str = "closed",
    tolerances: Optional[Tolerances] = None,
) -> Union[complex, np.ndarray]:
    """Double transform w_hat(k, -k), vectorized over k.

    ``method="closed"`` uses the factorized form (PhiT only);
    ``method="quadrature"`` integrates over the support of phi.
    """
    _check_weight_method(phi, method)
    ks = np.atleast_1d(np.asarray(k, dtype=float))
    frequency = p.lambda_tilde + ks * p.lambda_gamma_tilde

    if method == "closed":
        assert isinstance(phi, PhiT)
        radial = psi_hat(phi.psi, (p.d - 1) / (2j * np.pi))
        values = radial * np.asarray(psi_hat(phi.psi, frequency / phi.T))
    else:
        values = _w_hat_quadrature(phi, frequency, p.rho, _resolve(tolerances))
    return _unwrap(values, k)


def lhs_weight(
    phi: TwoVariableFunction,
    p: ModelParams,
    k: KArray,
    method: str = "closed",
    tolerances: Optional[Tolerances] = None,
) -> Union[complex, np.ndarray]:
    """The weight of |a_k|**2 in the summation formulae.

    It carries the conjugate phase exp(-2 pi i (s - t)(lambda_tilde + k
    lambda_gamma_tilde)), so it equals w_hat at (-lambda_tilde, -k).
    """
    _check_weight_method(phi, method)
    ks = np.atleast_1d(np.asarray(k, dtype=float))
    frequency = -(p.lambda_tilde + ks * p.lambda_gamma_tilde)

    if method == "closed":
        assert isinstance(phi, PhiT)
        radial = psi_hat(phi.psi, (p.d - 1) / (2j * np.pi))
        values = radial * np.asarray(psi_hat(phi.psi, frequency / phi.T))
    else:
        values = _w_hat_quadrature(phi, frequency, p.rho, _resolve(tolerances))
    return _unwrap(values, k)


def radial_factor(phi: PhiT, d: int) -> complex:
    """psi_hat((d-1)/(2 pi i)), the integral of psi(v) exp(-(d-1) v)."""
    return complex(psi_hat(phi.psi, (d - 1) / (2j * np.pi)))
