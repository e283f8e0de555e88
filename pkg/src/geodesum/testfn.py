"""
Test functions: sampled one-variable bumps, the admissible bump psi and the
two-variable family phi_T.

psi is built as c * (u * u * u * u) for an even non-negative C-infinity bump u,
so psi >= 0 and psi_hat = c * u_hat**4 >= 0 hold by construction. The constant
c is chosen so that psi_hat >= scale_target on [-1, 1], and a certificate
records the checked minima.

    from geodesum.testfn import PhiT, build_psi

    psi = build_psi()            # support [-1, 1]
    phi = PhiT(T=4.0, psi=psi)
    phi(0.0, 0.0)                # 4 * psi(0)**2
"""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Protocol, Union

import numpy as np
import pandas as pd
from scipy.optimize import minimize_scalar

from .exceptions import BadParam, ConstructionFailure, GridResolution, NonFinite

logger = logging.getLogger(__name__)

MIN_GRID_POINTS = 64
MAX_GRID_POINTS = 2**22
BUMP_GRID_POINTS = 1025
INTERPOLATION_ORDER = 5
ENDPOINT_RATIO = 1e-12
FOURIER_CHUNK = 256

# sixth-order central difference stencil for offsets -3..3
_DIFF_STENCIL = np.array([-1.0, 9.0, -45.0, 0.0, 45.0, -9.0, 1.0]) / 60.0
_STENCIL_POINTS = INTERPOLATION_ORDER + 1
_LAGRANGE_DENOMS = np.array(
    [
        math.prod(j - m for m in range(_STENCIL_POINTS) if m != j)
        for j in range(_STENCIL_POINTS)
    ],
    dtype=float,
)

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class SampledFunction:
    """A compactly supported real function sampled on a uniform grid.

    Between grid points the function is evaluated by local Lagrange
    interpolation of odd order ``smoothness_order`` (a 6-point stencil for the
    default 5). Outside ``[lo, hi]`` it is zero.
    """

    lo: float
    hi: float
    values: np.ndarray = field(repr=False)
    smoothness_order: int = INTERPOLATION_ORDER

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.ndim != 1:
            raise BadParam(f"values must be one-dimensional, got shape {values.shape}")
        if values.shape[0] < MIN_GRID_POINTS:
            raise GridResolution(
                f"need at least {MIN_GRID_POINTS} samples, got {values.shape[0]}"
            )
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi):
            raise BadParam(f"support must satisfy lo < hi, got [{self.lo}, {self.hi}]")
        if not np.all(np.isfinite(values)):
            raise NonFinite("sampled values contain NaN or infinity")
        if self.smoothness_order != INTERPOLATION_ORDER:
            raise BadParam(
                f"only interpolation order {INTERPOLATION_ORDER} is supported, "
                f"got {self.smoothness_order}"
            )
        peak = float(np.max(np.abs(values)))
        edge = max(abs(values[0]), abs(values[-1]))
        if edge > ENDPOINT_RATIO * peak:
            raise BadParam(
                f"function does not vanish at the support ends: "
                f"|f(end)| = {edge:.3e}, max |f| = {peak:.3e}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / (self.n - 1)

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)

    @property
    def support(self) -> tuple[float, float]:
        return (self.lo, self.hi)

    def __call__(self, x: ArrayLike) -> ArrayLike:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        inside = np.isfinite(x) & (x >= self.lo) & (x <= self.hi)
        if np.any(inside):
            p = (x[inside] - self.lo) / self.step
            start = np.clip(
                np.floor(p).astype(np.intp) - 2, 0, self.n - _STENCIL_POINTS
            )
            s = p - start
            acc = np.zeros(s.shape)
            for j in range(_STENCIL_POINTS):
                weight = np.ones(s.shape)
                for m in range(_STENCIL_POINTS):
                    if m != j:
                        weight *= s - m
                acc += weight / _LAGRANGE_DENOMS[j] * self.values[start + j]
            out[inside] = acc
        if out.ndim == 0:
            return float(out)
        return out

    def derivative(self) -> "SampledFunction":
        """Derivative on the same grid by a sixth-order central difference."""
        padded = np.concatenate([np.zeros(3), self.values, np.zeros(3)])
        slopes = np.convolve(padded, _DIFF_STENCIL[::-1], mode="valid") / self.step
        slopes[0] = slopes[-1] = 0.0
        return SampledFunction(self.lo, self.hi, slopes)

    def integral(self) -> float:
        """Trapezoid integral over the support."""
        v = self.values
        return float(self.step * (v.sum() - 0.5 * (v[0] + v[-1])))

    def fourier(self, xi: Any) -> Union[complex, np.ndarray]:
        """Trapezoid transform sum of f(x) exp(-2 pi i x xi); xi may be complex."""
        xi_arr = np.asarray(xi, dtype=complex)
        flat = xi_arr.ravel()
        weights = np.full(self.n, self.step)
        weights[0] = weights[-1] = 0.5 * self.step
        weighted = weights * self.values
        x = self.grid
        out = np.empty(flat.shape, dtype=complex)
        for start in range(0, flat.size, FOURIER_CHUNK):
            chunk = flat[start : start + FOURIER_CHUNK]
            out[start : start + FOURIER_CHUNK] = (
                np.exp(-2j * np.pi * np.outer(chunk, x)) @ weighted
            )
        if xi_arr.ndim == 0:
            return complex(out[0])
        return out.reshape(xi_arr.shape)

    def shifted(self, offset: float) -> "SampledFunction":
        """x -> f(x - offset)."""
        return SampledFunction(self.lo + offset, self.hi + offset, self.values)

    def scaled(self, factor: float, amplitude: float = 1.0) -> "SampledFunction":
        """x -> amplitude * f(factor * x), for factor > 0."""
        if not factor > 0:
            raise BadParam(f"scale factor must be positive, got {factor}")
        return SampledFunction(
            self.lo / factor, self.hi / factor, amplitude * self.values
        )

    def reflected(self) -> "SampledFunction":
        """x -> f(-x)."""
        return SampledFunction(-self.hi, -self.lo, self.values[::-1])

    def __mul__(self, other: float) -> "SampledFunction":
        return SampledFunction(self.lo, self.hi, float(other) * self.values)

    __rmul__ = __mul__

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"x": self.grid, "value": self.values})


def base_bump(half_width: float, n: int = BUMP_GRID_POINTS) -> SampledFunction:
    """The standard cutoff exp(1 - 1/(1 - (x/h)**2)) on [-h, h], peak value 1."""
    if not (math.isfinite(half_width) and 0 < half_width <= 1):
        raise BadParam(f"half_width must lie in (0, 1], got {half_width}")
    x = np.linspace(-half_width, half_width, n)
    r2 = (x / half_width) ** 2
    values = np.zeros(n)
    inner = r2 < 1
    values[inner] = np.exp(1.0 - 1.0 / (1.0 - r2[inner]))
    return SampledFunction(-half_width, half_width, values)


def self_convolve(f: SampledFunction, times: int) -> SampledFunction:
    """Convolve f with itself ``times`` times: support [(times+1) lo, (times+1) hi]."""
    if times < 1:
        raise BadParam(f"times must be >= 1, got {times}")
    n_out = (times + 1) * (f.n - 1) + 1
    if n_out > MAX_GRID_POINTS:
        raise GridResolution(
            f"{times}-fold self-convolution needs {n_out} samples "
            f"(limit {MAX_GRID_POINTS})"
        )
    values = f.values
    for _ in range(times):
        values = np.convolve(values, f.values) * f.step
    return SampledFunction((times + 1) * f.lo, (times + 1) * f.hi, values)


@dataclass(frozen=True)
class PsiCertificate:
    """Checked minima of psi and psi_hat."""

    min_psi: float
    min_psi_hat_unit: float
    min_psi_hat_grid: float

    def to_dict(self) -> dict[str, float]:
        return {
            "min_psi": self.min_psi,
            "min_psi_hat_unit": self.min_psi_hat_unit,
            "min_psi_hat_grid": self.min_psi_hat_grid,
        }


@dataclass(frozen=True)
class BumpPsi:
    """psi = constant * (u*u*u*u) with its transform and certificate."""

    f: SampledFunction
    base: SampledFunction
    constant: float
    certificate: PsiCertificate

    def __call__(self, x: ArrayLike) -> ArrayLike:
        return self.f(x)

    @property
    def support(self) -> tuple[float, float]:
        return self.f.support

    @cached_property
    def prime(self) -> SampledFunction:
        return self.f.derivative()

    def fourier_cache(self, xi: Any) -> Union[float, np.ndarray]:
        """psi_hat at real xi as constant * u_hat(xi)**4."""
        u_hat = np.real(self.base.fourier(np.asarray(xi, dtype=float)))
        return self.constant * u_hat**4


def _unit_minimum(base: SampledFunction) -> float:
    """Minimum of |u_hat| over [0, 1], refined around the best grid point."""
    xi = np.linspace(0.0, 1.0, 2001)
    u_hat = np.real(base.fourier(xi))
    if np.min(u_hat) <= 0 or np.min(u_hat) < 1e-6 * u_hat[0]:
        raise ConstructionFailure(
            f"u_hat is not positive on [-1, 1] (min {np.min(u_hat):.3e}); "
            "use a smaller half_width"
        )
    best = int(np.argmin(u_hat))
    lo = xi[max(best - 1, 0)]
    hi = xi[min(best + 1, xi.shape[0] - 1)]
    refined = minimize_scalar(
        lambda s: float(np.real(base.fourier(s))),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-10},
    )
    return float(min(u_hat[best], refined.fun))


def build_psi(half_width: float = 0.25, scale_target: float = 1.0) -> BumpPsi:
    """Build and certify the admissible bump psi.

    Raises:
        BadParam: If ``scale_target < 1`` or ``half_width`` is out of range.
        ConstructionFailure: If u_hat changes sign on [-1, 1] or a
            certificate check fails.
    """
    if not (math.isfinite(scale_target) and scale_target >= 1):
        raise BadParam(f"scale_target must be >= 1, got {scale_target}")
    base = base_bump(half_width)
    u_min = _unit_minimum(base)
    constant = scale_target / u_min**4 * (1.0 + 1e-9)
    f = constant * self_convolve(base, 3)

    draft = BumpPsi(f, base, constant, PsiCertificate(0.0, 0.0, 0.0))
    certificate = PsiCertificate(
        min_psi=float(np.min(f.values)),
        min_psi_hat_unit=float(np.min(draft.fourier_cache(np.linspace(-1, 1, 64)))),
        min_psi_hat_grid=float(np.min(draft.fourier_cache(np.linspace(-50, 50, 2001)))),
    )
    if certificate.min_psi < 0:
        raise ConstructionFailure(f"psi is negative: min {certificate.min_psi:.3e}")
    if certificate.min_psi_hat_unit < 1:
        raise ConstructionFailure(
            f"psi_hat < 1 on [-1, 1]: min {certificate.min_psi_hat_unit:.12f}"
        )
    if certificate.min_psi_hat_grid < -1e-10:
        raise ConstructionFailure(
            f"psi_hat negative on the validation grid: "
            f"min {certificate.min_psi_hat_grid:.3e}"
        )
    logger.info(
        "built psi: half_width=%g, constant=%.6g, certificate=%s",
        half_width,
        constant,
        certificate.to_dict(),
    )
    return BumpPsi(f, base, constant, certificate)


def psi_hat(psi: BumpPsi, xi: Any) -> Union[complex, np.ndarray]:
    """Entire extension of psi_hat(xi) = integral of psi(x) exp(-2 pi i x xi).

    Real arguments use the cached product form; complex ones sum the weighted
    samples directly.
    """
    xi_arr = np.asarray(xi, dtype=complex)
    if np.all(xi_arr.imag == 0):
        out = np.asarray(psi.fourier_cache(xi_arr.real), dtype=complex)
    else:
        out = np.asarray(psi.f.fourier(xi_arr), dtype=complex)
    if out.ndim == 0:
        return complex(out)
    return out


# ---------------------------------------------------------------------------
# Two-variable test functions
# ---------------------------------------------------------------------------


class TwoVariableFunction(Protocol):
    """A compactly supported phi(a, b), vectorized over broadcasting arrays."""

    def __call__(self, a: ArrayLike, b: ArrayLike) -> ArrayLike: ...

    def support_box(self) -> tuple[tuple[float, float], tuple[float, float]]: ...

    def b_limits(self, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]: ...

    def transposed(self) -> "TwoVariableFunction": ...


@dataclass(frozen=True)
class SeparableProduct:
    """phi(a, b) = f(a) * g(b)."""

    f: SampledFunction
    g: SampledFunction

    def __call__(self, a: ArrayLike, b: ArrayLike) -> ArrayLike:
        return np.asarray(self.f(a)) * np.asarray(self.g(b))

    def support_box(self) -> tuple[tuple[float, float], tuple[float, float]]:
        return self.f.support, self.g.support

    def b_limits(self, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        a = np.asarray(a, dtype=float)
        return np.full(a.shape, self.g.lo), np.full(a.shape, self.g.hi)

    def transposed(self) -> "SeparableProduct":
        return SeparableProduct(self.g, self.f)


@dataclass(frozen=True)
class RotatedProduct:
    """phi(a, b) = f(a - b) * g((a + b) / 2)."""

    f: SampledFunction
    g: SampledFunction

    def __call__(self, a: ArrayLike, b: ArrayLike) -> ArrayLike:
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        return np.asarray(self.f(a - b)) * np.asarray(self.g(0.5 * (a + b)))

    def support_box(self) -> tuple[tuple[float, float], tuple[float, float]]:
        f, g = self.f, self.g
        return (
            (g.lo + 0.5 * f.lo, g.hi + 0.5 * f.hi),
            (g.lo - 0.5 * f.hi, g.hi - 0.5 * f.lo),
        )

    def b_limits(self, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        a = np.asarray(a, dtype=float)
        lower = np.maximum(a - self.f.hi, 2.0 * self.g.lo - a)
        upper = np.minimum(a - self.f.lo, 2.0 * self.g.hi - a)
        return lower, np.maximum(lower, upper)

    def transposed(self) -> "RotatedProduct":
        return RotatedProduct(self.f.reflected(), self.g)


@dataclass(frozen=True)
class PhiT:
    """phi_T(a, b) = T psi(T (a - b)) psi((a + b) / 2)."""

    T: float
    psi: BumpPsi

    def __post_init__(self) -> None:
        if not (math.isfinite(self.T) and self.T > 0):
            raise BadParam(f"T must be positive and finite, got {self.T}")

    @cached_property
    def rotated(self) -> RotatedProduct:
        return RotatedProduct(self.psi.f.scaled(self.T, amplitude=self.T), self.psi.f)

    def __call__(self, a: ArrayLike, b: ArrayLike) -> ArrayLike:
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        return self.T * np.asarray(self.psi(self.T * (a - b))) * np.asarray(
            self.psi(0.5 * (a + b))
        )

    def support_box(self) -> tuple[tuple[float, float], tuple[float, float]]:
        return self.rotated.support_box()

    def b_limits(self, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.rotated.b_limits(a)

    def transposed(self) -> RotatedProduct:
        return self.rotated.transposed()


def phi_T_eval(phi: PhiT, s: ArrayLike, t: ArrayLike) -> ArrayLike:
    """T psi(T (s - t)) psi((s + t) / 2)."""
    return phi(s, t)


def standard_fixtures(psi: BumpPsi) -> dict[str, TwoVariableFunction]:
    """The battery of two-variable test functions used by the two-route checks."""
    return {
        "phi_T1": PhiT(1.0, psi),
        "phi_T2": PhiT(2.0, psi),
        "product_bump": SeparableProduct(
            base_bump(0.5).shifted(0.3), base_bump(0.5).shifted(-0.2)
        ),
        "separated": SeparableProduct(
            base_bump(0.3).shifted(1.2), base_bump(0.3).shifted(-0.6)
        ),
        "tilted": RotatedProduct(base_bump(0.4), base_bump(0.6).shifted(0.1)),
    }


def psi_table(psi: BumpPsi) -> pd.DataFrame:
    """psi samples with columns x, psi."""
    return pd.DataFrame({"x": psi.f.grid, "psi": psi.f.values})


def psi_hat_table(psi: BumpPsi, xi: np.ndarray) -> pd.DataFrame:
    """psi_hat samples with columns xi, psi_hat_re, psi_hat_im."""
    values = np.asarray(psi_hat(psi, np.asarray(xi, dtype=float)))
    return pd.DataFrame(
        {"xi": np.asarray(xi, dtype=float), "psi_hat_re": values.real, "psi_hat_im": values.imag}
    )
