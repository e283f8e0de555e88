"""
Geometric-side kernels: beta(t), the value R_phi(lambda) along independent
routes, the kernel K_z(a, b) over the region Omega, the function f_T with its
derivative, and the Jacobian checks of the coordinate changes.

Notation used throughout: u = exp(-t), z = 2 pi i lambda_tilde,
rho = (d - 1)/2, A = exp(a), B = exp(b).

Every route for R_phi ends in a Filon-type integral over t (or over the log
distance to the diagonal), so large |lambda_tilde| only changes the
oscillatory factor, never the amplitude evaluations.

    from geodesum.kernels import r_phi_direct, r_phi_kernel
    from geodesum.testfn import PhiT, build_psi

    phi = PhiT(1.0, build_psi())
    r_phi_direct(phi, 0.0, 3)   # ~ r_phi_kernel(phi, 0.0, 3)
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, NamedTuple, Optional, Union

import numpy as np
import pandas as pd

from .config import Tolerances, default_tolerances
from .exceptions import (
    BadParam,
    CoincidentArguments,
    NearSingular,
    RegionResolutionError,
)
from .quadcore import (
    Quadrature1DSpec,
    integrate_1d,
    integrate_1d_batch,
    integrate_2d,
    integrate_oscillatory,
    log_gamma,
    volume_unit_ball,
)
from .testfn import ArrayLike, BumpPsi, PhiT, RotatedProduct, TwoVariableFunction

logger = logging.getLogger(__name__)

ComplexArray = Union[complex, np.ndarray]

COINCIDENCE_DISTANCE = 1e-8
NEAR_SINGULAR_DISTANCE = 1e-8
KERNEL_METHODS = ("slices", "kernel")
F_T_COORDINATES = ("slices", "rotated")

# diagonal band skipped by the literal kernel route
DIAGONAL_FLOOR = 2e-8

_BETA_CUTOFF = 20.0
_FD_STEP = 1e-4
_TINY = float(np.finfo(float).tiny)


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------


def _resolve(tolerances: Optional[Tolerances]) -> Tolerances:
    return default_tolerances() if tolerances is None else tolerances


def _inner(tol: Tolerances) -> Tolerances:
    """Tolerances for integrals nested inside a Filon amplitude."""
    return Tolerances(tol.abs_tol * 1e-2, max(tol.rel_tol * 1e-2, 1e-14))


def _check_dimension(d: int, minimum: int) -> int:
    if isinstance(d, bool) or int(d) != d or d < minimum:
        raise BadParam(f"d must be an integer >= {minimum}, got {d!r}")
    return int(d)


def _spectral(lam_tilde: Any) -> tuple[np.ndarray, bool]:
    lam = np.asarray(lam_tilde, dtype=complex)
    if not np.all(np.isfinite(lam)):
        raise BadParam(f"lambda_tilde must be finite, got {lam_tilde!r}")
    return 2j * np.pi * lam.ravel(), lam.ndim == 0


def _unwrap(values: Any, scalar: bool, shape: tuple[int, ...] = ()) -> ComplexArray:
    arr = np.asarray(values, dtype=complex)
    if scalar:
        return complex(arr.reshape(-1)[0])
    return arr.reshape(shape) if shape else arr


def _support_box(
    phi: TwoVariableFunction,
) -> tuple[tuple[float, float], tuple[float, float]]:
    try:
        (alo, ahi), (blo, bhi) = phi.support_box()
    except (AttributeError, TypeError, ValueError) as exc:
        raise RegionResolutionError(f"cannot read the support box of {phi!r}") from exc
    box = (float(alo), float(ahi), float(blo), float(bhi))
    if not all(math.isfinite(v) for v in box) or not (alo < ahi and blo < bhi):
        raise RegionResolutionError(f"support box {box} is not a bounded rectangle")
    return (box[0], box[1]), (box[2], box[3])


def _t_start(box: tuple[tuple[float, float], tuple[float, float]]) -> float:
    """Smallest t whose Omega slice can meet the support box."""
    (_, ahi), (_, bhi) = box
    return -float(np.logaddexp(ahi, bhi))


def _safe_log(x: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(x, _TINY))


def _filon(
    amplitude: Callable[[np.ndarray], np.ndarray],
    rate: np.ndarray,
    start: float,
    tol: Tolerances,
) -> np.ndarray:
    if np.any(np.asarray(rate).real >= 0):
        raise BadParam("R_phi needs Re(2 pi i lambda_tilde) + rho > 0")
    spec = Quadrature1DSpec(
        (start, math.inf), tol.abs_tol, tol.rel_tol, decay_declared=True
    )
    return np.asarray(integrate_oscillatory(amplitude, rate, spec).value)


def _per_component(
    value_at: Callable[[float], complex],
) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorize a scalar-t double integral one node at a time.

    Each t gets its own adaptive rule, so memory stays bounded by a single
    scalar 2D integral whatever the number of nodes.
    """

    def amplitude(t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.empty(t.shape, dtype=complex)
        for index, t_k in np.ndenumerate(t):
            out[index] = value_at(float(t_k))
        return out

    return amplitude


def sphere_factor(d: int) -> float:
    """(d - 2) vol(B_{d-2}), the prefactor of the d >= 3 routes."""
    d = _check_dimension(d, 3)
    return (d - 2) * volume_unit_ball(d - 2)


# ---------------------------------------------------------------------------
# beta(t)
# ---------------------------------------------------------------------------


def _beta_exponent(t: Any, d: int) -> tuple[np.ndarray, bool]:
    d = _check_dimension(d, 2)
    t_arr = np.asarray(t, dtype=complex)
    if not np.all(np.isfinite(t_arr)):
        raise BadParam(f"t must be finite, got {t!r}")
    s = 2j * np.pi * t_arr.ravel() + 0.5 * (d - 1)
    if np.any(s.real <= 0):
        raise BadParam(f"2 pi i t + (d-1)/2 needs a positive real part, t={t!r}")
    return s, t_arr.ndim == 0


def beta_fn(t: Any, d: int) -> ComplexArray:
    """beta(t) = Gamma(s/2)**2 / (2 Gamma(s)), s = 2 pi i t + (d - 1)/2.

    Equals the integral of (exp(x) + exp(-x))**(-s) over the real line.
    """
    s, scalar = _beta_exponent(t, d)
    value = 0.5 * np.exp(2.0 * log_gamma(s / 2.0) - log_gamma(s))
    return _unwrap(value, scalar, np.shape(t))


def beta_fn_quadrature(
    t: Any, d: int, tolerances: Optional[Tolerances] = None
) -> ComplexArray:
    """beta(t) by direct quadrature of (2 cosh x)**(-s).

    The integrand is even; [0, 20] is integrated numerically and the rest by
    three terms of the binomial series of (1 + exp(-2x))**(-s).
    """
    s, scalar = _beta_exponent(t, d)
    tol = tolerances or Tolerances(1e-15, 1e-13)

    def integrand(x: np.ndarray) -> np.ndarray:
        log_cosh = x + np.log1p(np.exp(-2.0 * x))
        return np.exp(-np.multiply.outer(log_cosh, s))

    spec = Quadrature1DSpec(
        (0.0, _BETA_CUTOFF), tol.abs_tol, tol.rel_tol, initial_panels=64
    )
    body = np.asarray(integrate_1d(integrand, spec).value)
    coefficients = (np.ones_like(s), -s, 0.5 * s * (s + 1.0))
    tail = sum(
        c * np.exp(-(s + 2 * n) * _BETA_CUTOFF) / (s + 2 * n)
        for n, c in enumerate(coefficients)
    )
    return _unwrap(2.0 * (body + tail), scalar, np.shape(t))


# ---------------------------------------------------------------------------
# Coordinates, the region Omega and the Jacobians
# ---------------------------------------------------------------------------


class KernelPoint(NamedTuple):
    """a = log|x + exp(-t)|, b = log|x|."""

    a: float
    b: float

    @classmethod
    def from_xt(cls, x: float, t: float) -> "KernelPoint":
        shifted = x + math.exp(-t)
        if abs(x) < NEAR_SINGULAR_DISTANCE or abs(shifted) < NEAR_SINGULAR_DISTANCE:
            raise NearSingular(f"(x, t) = ({x}, {t}) is too close to x = 0 or x = -e^-t")
        return cls(math.log(abs(shifted)), math.log(abs(x)))


@dataclass(frozen=True)
class OmegaRegion:
    """Omega = {(a, b, t): (e^b - e^-t)**2 < e^(2a) < (e^b + e^-t)**2}."""

    def contains(self, a: ArrayLike, b: ArrayLike, t: ArrayLike) -> np.ndarray:
        a, b, t = (np.asarray(v, dtype=float) for v in (a, b, t))
        big = np.exp(b)
        u = np.exp(-t)
        a2 = np.exp(2.0 * a)
        return ((big - u) ** 2 < a2) & (a2 < (big + u) ** 2)

    def t_interval(self, a: ArrayLike, b: ArrayLike) -> tuple[np.ndarray, np.ndarray]:
        """(-log(e^a + e^b), -log|e^a - e^b|); the upper end is +inf when a = b."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        lower = -np.logaddexp(a, b)
        top = np.maximum(a, b)
        gap = np.abs(a - b)
        with np.errstate(divide="ignore"):
            upper = -top - np.log(-np.expm1(-gap))
        return lower, upper

    def b_interval(self, a: ArrayLike, t: ArrayLike) -> tuple[np.ndarray, np.ndarray]:
        """(log|e^a - e^-t|, log(e^a + e^-t)) for fixed a and t."""
        a = np.asarray(a, dtype=float)
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            lower = np.log(np.abs(np.exp(a) - np.exp(-t)))
        return lower, np.logaddexp(a, -t)


class JacobianCheck(NamedTuple):
    analytic: float
    numeric: float

    @property
    def rel_err(self) -> float:
        return abs(self.analytic - self.numeric) / abs(self.analytic)


def jacobian_check_d2(x: float, t: float) -> JacobianCheck:
    """|det D| of (x, t) -> (a, b) against central differences.

    Raises:
        NearSingular: If |x| or |x + exp(-t)| is below 1e-8.
    """
    point = KernelPoint.from_xt(x, t)
    analytic = math.exp(-t - point.a - point.b)
    u = math.exp(-t)
    h_x = _FD_STEP * min(abs(x), abs(x + u), 1.0)
    h_t = _FD_STEP * min(1.0, abs(x + u) / u)

    def coords(xx: float, tt: float) -> np.ndarray:
        return np.array(KernelPoint.from_xt(xx, tt))

    d_dx = (coords(x + h_x, t) - coords(x - h_x, t)) / (2.0 * h_x)
    d_dt = (coords(x, t + h_t) - coords(x, t - h_t)) / (2.0 * h_t)
    numeric = abs(float(np.linalg.det(np.column_stack([d_dx, d_dt]))))
    return JacobianCheck(analytic, numeric)


def jacobian_check_d3(x: float, r: float, t: float) -> JacobianCheck:
    """det D of (x, r, t) -> (a, b, t), analytic r exp(-(t + 2a + 2b)).

    Raises:
        NearSingular: If r or the distance to the axis points is below 1e-8.
    """
    u = math.exp(-t)
    outer = (x + u) ** 2 + r**2
    inner = x**2 + r**2
    if r < NEAR_SINGULAR_DISTANCE or min(outer, inner) < NEAR_SINGULAR_DISTANCE**2:
        raise NearSingular(f"(x, r, t) = ({x}, {r}, {t}) is too close to the axis")
    a = 0.5 * math.log(outer)
    b = 0.5 * math.log(inner)
    analytic = r * math.exp(-(t + 2.0 * a + 2.0 * b))

    def coords(v: np.ndarray) -> np.ndarray:
        xx, rr, tt = v
        uu = math.exp(-tt)
        return np.array(
            [0.5 * math.log((xx + uu) ** 2 + rr**2), 0.5 * math.log(xx**2 + rr**2), tt]
        )

    base = np.array([x, r, t])
    scale = min(1.0, math.sqrt(min(outer, inner)))
    steps = _FD_STEP * np.array([scale, min(scale, r), min(1.0, scale / u)])
    columns = []
    for i, h in enumerate(steps):
        e = np.zeros(3)
        e[i] = h
        columns.append((coords(base + e) - coords(base - e)) / (2.0 * h))
    numeric = float(np.linalg.det(np.column_stack(columns)))
    return JacobianCheck(analytic, numeric)


# ---------------------------------------------------------------------------
# The kernel K_z(a, b)
# ---------------------------------------------------------------------------


def kernel_bracket(a: ArrayLike, b: ArrayLike, t: ArrayLike) -> np.ndarray:
    """e^(2b) - ((e^(2a) - e^(2b) - e^(-2t)) / (2 e^(-t)))**2, non-negative on Omega."""
    a, b, t = (np.asarray(v, dtype=float) for v in (a, b, t))
    u = np.exp(-t)
    return np.exp(2.0 * b) - ((np.exp(2.0 * a) - np.exp(2.0 * b) - u * u) / (2.0 * u)) ** 2


def _kernel_values(
    z: np.ndarray, a: np.ndarray, b: np.ndarray, d: int, tol: Tolerances
) -> np.ndarray:
    """K_z(a, b) for broadcast arrays, as an integral over the slice angle.

    With u = D + 2 R sin(theta/2)**2 running over the t-slice (D = |A - B|,
    R = min(A, B), S = A + B) the bracket becomes
    (R sin(theta))**2 (u + D)(u + S) / (4 u**2) and the square-root endpoint
    behaviour of the d = 3 integrand disappears.
    """
    z, a, b = np.broadcast_arrays(z, a, b)
    shape = z.shape
    z, a, b = z.ravel(), a.ravel(), b.ravel()
    top = np.maximum(a, b)
    gap = np.abs(a - b)
    big_a, big_b = np.exp(a), np.exp(b)
    near = np.exp(np.minimum(a, b))
    diff = np.exp(top) * -np.expm1(-gap)
    total = big_a + big_b
    power = 0.5 * (d - 4)
    exponent = z + 0.5 * (d - 5)

    def integrand(theta: np.ndarray) -> np.ndarray:
        th = theta[:, None]
        u = diff + 2.0 * near * np.sin(0.5 * th) ** 2
        body = (near * np.sin(th)) ** (d - 3)
        if power != 0:
            body = body * ((u + diff) * (u + total) / (4.0 * u * u)) ** power
        return body * np.exp(exponent * np.log(u))

    spec = Quadrature1DSpec((0.0, math.pi), tol.abs_tol, tol.rel_tol)
    value = np.asarray(integrate_1d(integrand, spec).value)
    return (np.exp(2.0 * (a + b)) * value).reshape(shape)


def kernel_K(
    z: Any, a: ArrayLike, b: ArrayLike, d: int, tolerances: Optional[Tolerances] = None
) -> ComplexArray:
    """K_z(a, b) = integral over the Omega slice of
    bracket**((d-4)/2) exp(2a + 2b - t (z + (d-3)/2)) dt.

    ``z``, ``a`` and ``b`` broadcast against each other.

    Raises:
        CoincidentArguments: If |a - b| <= 1e-8 anywhere.
    """
    d = _check_dimension(d, 3)
    z_arr = np.asarray(z, dtype=complex)
    a_arr = np.asarray(a, dtype=float)
    b_arr = np.asarray(b, dtype=float)
    if np.any(np.abs(a_arr - b_arr) <= COINCIDENCE_DISTANCE):
        raise CoincidentArguments(
            f"K_z is singular on a = b; |a - b| <= {COINCIDENCE_DISTANCE}"
        )
    values = _kernel_values(z_arr, a_arr, b_arr, d, _resolve(tolerances))
    if values.ndim == 0:
        return complex(values)
    return values


def kernel_K_closed(z: Any, a: ArrayLike, b: ArrayLike) -> ComplexArray:
    """The d = 4 kernel e^(2a+2b) (S**(z+1/2) - D**(z+1/2)) / (z + 1/2).

    S = e^a + e^b and D = |e^a - e^b|; at z = -1/2 the limit
    e^(2a+2b) log(S / D) is used.
    """
    z, a, b = np.broadcast_arrays(
        np.asarray(z, dtype=complex), np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    )
    if np.any(np.abs(a - b) <= COINCIDENCE_DISTANCE):
        raise CoincidentArguments("K_z is singular on a = b")
    log_s = np.logaddexp(a, b)
    log_d = np.maximum(a, b) + np.log(-np.expm1(-np.abs(a - b)))
    w = z + 0.5
    limit = np.abs(w) < 1e-14
    safe_w = np.where(limit, 1.0, w)
    ratio = (np.exp(w * log_s) - np.exp(w * log_d)) / safe_w
    ratio = np.where(limit, log_s - log_d, ratio)
    value = np.exp(2.0 * (a + b)) * ratio
    if value.ndim == 0:
        return complex(value)
    return value


# ---------------------------------------------------------------------------
# R_phi, d = 2
# ---------------------------------------------------------------------------


class DecompositionParts(NamedTuple):
    """The pieces c1 (a > b), c2 (the e^a + e^b term) and c3 (a < b)."""

    c1: ComplexArray
    c2: ComplexArray
    c3: ComplexArray

    @property
    def total(self) -> ComplexArray:
        return self.c1 + self.c2 + self.c3


def _d2_amplitude(
    phi: TwoVariableFunction,
    box: tuple[tuple[float, float], tuple[float, float]],
    tol: Tolerances,
) -> Callable[[np.ndarray], np.ndarray]:
    """t -> the x-integral of phi(log|x + u|, log|x|) split at x = 0 and x = -u."""
    (alo, ahi), (blo, bhi) = box
    ea_lo, ea_hi = math.exp(alo), math.exp(ahi)

    def amplitude(t: np.ndarray) -> np.ndarray:
        u = np.exp(-t)
        out = np.zeros((t.shape[0], 3), dtype=complex)

        # x > 0: a = log(B + u)
        def right(y: np.ndarray, index: np.ndarray) -> np.ndarray:
            uu = u[index][None, :]
            return np.exp(y) * phi(y + np.log1p(uu * np.exp(-y)), y)

        # -u < x < 0: a = log(u - B)
        def middle(y: np.ndarray, index: np.ndarray) -> np.ndarray:
            uu = u[index][None, :]
            return np.exp(y) * phi(np.log(uu) + np.log1p(-np.exp(y) / uu), y)

        # x < -u: a = log(B - u)
        def left(y: np.ndarray, index: np.ndarray) -> np.ndarray:
            uu = u[index][None, :]
            return np.exp(y) * phi(y + np.log1p(-uu * np.exp(-y)), y)

        limits = (
            (_safe_log(ea_lo - u), _safe_log(ea_hi - u)),
            (_safe_log(u - ea_hi), _safe_log(u - ea_lo)),
            (np.log(u + ea_lo), np.log(u + ea_hi)),
        )
        for column, (branch, (lo, hi)) in enumerate(zip((right, middle, left), limits)):
            lower = np.maximum(blo, lo)
            upper = np.minimum(bhi, hi)
            out[:, column] = integrate_1d_batch(
                branch, lower, upper, tol.abs_tol, tol.rel_tol
            ).value
        return out

    return amplitude


def r_phi_direct_parts(
    phi: TwoVariableFunction,
    lam_tilde: Any,
    tolerances: Optional[Tolerances] = None,
) -> DecompositionParts:
    """The d = 2 direct integral split over x > 0, -e^-t < x < 0 and x < -e^-t.

    The three regions map onto a > b, the anti-diagonal term and a < b, so the
    parts equal c1, c2 and c3 of ``r_phi_closed_d2``.
    """
    z, scalar = _spectral(lam_tilde)
    tol = _resolve(tolerances)
    box = _support_box(phi)
    rate = -(z + 0.5)[:, None]
    values = _filon(_d2_amplitude(phi, box, _inner(tol)), rate, _t_start(box), tol)
    shape = np.shape(lam_tilde)
    return DecompositionParts(
        *(_unwrap(values[:, i], scalar, shape) for i in range(3))
    )


def _diagonal_part(
    phi: TwoVariableFunction, z: np.ndarray, tol: Tolerances
) -> np.ndarray:
    """c1 = integral over a > b of phi e^(a+b) (e^a - e^b)**(z - 1/2).

    With eps = a - b = exp(-v), (e^a - e^b)**(z - 1/2) = e^(b (z - 1/2))
    eps**(z - 1/2) h(eps)**(z - 1/2), h(eps) = expm1(eps)/eps, and the
    eps**(z + 1/2) factor becomes the Filon rate in v.
    """
    (alo, ahi), (blo, bhi) = _support_box(phi)
    eps_max = ahi - blo
    if eps_max <= 0:
        return np.zeros(z.shape, dtype=complex)
    shift = z - 0.5
    inner = _inner(tol)

    def amplitude(v: np.ndarray) -> np.ndarray:
        eps = np.exp(-v)
        lower = np.maximum(blo, alo - eps)
        upper = np.minimum(bhi, ahi - eps)
        log_h = np.log(np.expm1(eps) / eps)

        def integrand(y: np.ndarray, index: np.ndarray) -> np.ndarray:
            e = eps[index][None, :]
            base = np.asarray(phi(y + e, y)) * np.exp(2.0 * y + e)
            phase = np.exp(np.multiply.outer(y + log_h[index][None, :], shift))
            return base[..., None] * phase

        return integrate_1d_batch(
            integrand, lower, upper, inner.abs_tol, inner.rel_tol
        ).value

    return _filon(amplitude, -(z + 0.5), -math.log(eps_max), tol)


def r_phi_closed_d2(
    phi: TwoVariableFunction,
    lam_tilde: Any,
    tolerances: Optional[Tolerances] = None,
) -> DecompositionParts:
    """c1 + c2 + c3 over the (a, b) plane.

    c2 is a plain 2D integral; c1 and c3 carry the |e^a - e^b|**(z - 1/2)
    singularity on the diagonal and go through ``_diagonal_part`` (c3 on the
    transposed function).
    """
    z, scalar = _spectral(lam_tilde)
    tol = _resolve(tolerances)
    (alo, ahi), (blo, bhi) = _support_box(phi)
    shift = z - 0.5

    def anti_diagonal(a: np.ndarray, b: np.ndarray) -> np.ndarray:
        weight = np.asarray(phi(a, b))[..., None]
        log_sum = np.logaddexp(a, b)[..., None]
        return weight * np.exp((a + b)[..., None] + shift * log_sum)

    c2 = integrate_2d(
        anti_diagonal,
        Quadrature1DSpec((alo, ahi), tol.abs_tol, tol.rel_tol),
        Quadrature1DSpec((blo, bhi), tol.abs_tol, tol.rel_tol),
        y_limits=phi.b_limits,
    ).value
    c1 = _diagonal_part(phi, z, tol)
    c3 = _diagonal_part(phi.transposed(), z, tol)
    shape = np.shape(lam_tilde)
    return DecompositionParts(
        _unwrap(c1, scalar, shape), _unwrap(c2, scalar, shape), _unwrap(c3, scalar, shape)
    )


# ---------------------------------------------------------------------------
# R_phi, d >= 3
# ---------------------------------------------------------------------------


def _polar_amplitude(
    phi: TwoVariableFunction,
    d: int,
    box: tuple[tuple[float, float], tuple[float, float]],
    tol: Tolerances,
) -> Callable[[np.ndarray], np.ndarray]:
    """t -> integral of r**(d-3) phi(a, b) dx dr in polar form x + i r = B e^(i theta)."""
    (alo, ahi), (blo, bhi) = box
    e2_lo, e2_hi = math.exp(2.0 * alo), math.exp(2.0 * ahi)

    def at(t: float) -> complex:
        u = math.exp(-t)

        def integrand(b: np.ndarray, eta: np.ndarray) -> np.ndarray:
            big = np.exp(b)
            denom = 2.0 * big * u
            c_lo = np.clip((e2_lo - big * big - u * u) / denom, -1.0, 1.0)
            c_hi = np.clip((e2_hi - big * big - u * u) / denom, -1.0, 1.0)
            start = np.arccos(c_hi)
            width = np.arccos(c_lo) - start
            theta = start + width * eta
            a2 = (big - u) ** 2 + 4.0 * big * u * np.cos(0.5 * theta) ** 2
            with np.errstate(divide="ignore"):
                a = 0.5 * np.log(a2)
            weight = np.exp((d - 1) * b) * np.sin(theta) ** (d - 3) * width
            return weight * phi(a, b)

        return complex(
            integrate_2d(
                integrand,
                Quadrature1DSpec((blo, bhi), tol.abs_tol, tol.rel_tol),
                Quadrature1DSpec((0.0, 1.0), tol.abs_tol, tol.rel_tol),
            ).value
        )

    return _per_component(at)


def slice_amplitude(
    phi: TwoVariableFunction,
    d: int,
    tolerances: Optional[Tolerances] = None,
) -> Callable[[np.ndarray], np.ndarray]:
    """t -> g(t), the integral of phi A**2 B**2 bracket**((d-4)/2) / u over the Omega slice.

    On the slice, B runs over (|A - u|, A + u); with B = lo + 2 R sin(theta/2)**2
    and R = min(A, u) the bracket power turns into a bounded integrand.
    R_phi = (d-2) vol(B_{d-2}) * integral of g(t) exp(-t (z + rho)) dt.
    """
    d = _check_dimension(d, 3)
    tol = _resolve(tolerances)
    (alo, ahi), (blo, bhi) = _support_box(phi)
    eb_lo, eb_hi = math.exp(blo), math.exp(bhi)
    power = 0.5 * (d - 4)

    def at(t: float) -> complex:
        u = math.exp(-t)

        def integrand(a: np.ndarray, eta: np.ndarray) -> np.ndarray:
            big = np.exp(a)
            lo = np.abs(big - u)
            near = np.minimum(big, u)
            hi = big + u
            r_lo = np.clip((eb_lo - lo) / (2.0 * near), 0.0, 1.0)
            r_hi = np.clip((eb_hi - lo) / (2.0 * near), 0.0, 1.0)
            start = 2.0 * np.arcsin(np.sqrt(r_lo))
            width = 2.0 * np.arcsin(np.sqrt(r_hi)) - start
            theta = start + width * eta
            b_val = lo + 2.0 * near * np.sin(0.5 * theta) ** 2
            body = big * big * b_val * np.sin(theta) ** (d - 3) * (near / u) ** (d - 3)
            if power != 0:
                body = body * ((b_val + lo) * (b_val + hi) / 4.0) ** power
            with np.errstate(divide="ignore"):
                weight = phi(a, np.log(b_val))
            return body * weight * width

        return complex(
            integrate_2d(
                integrand,
                Quadrature1DSpec((alo, ahi), tol.abs_tol, tol.rel_tol),
                Quadrature1DSpec((0.0, 1.0), tol.abs_tol, tol.rel_tol),
            ).value
        )

    return _per_component(at)


def r_phi_direct(
    phi: TwoVariableFunction,
    lam_tilde: Any,
    d: int,
    tolerances: Optional[Tolerances] = None,
) -> ComplexArray:
    """R_phi(lambda) from the defining integral over (x, t), or (x, r, t) for d >= 3.

    Raises:
        RegionResolutionError: If phi has no bounded support box.
    """
    d = _check_dimension(d, 2)
    if d == 2:
        return r_phi_direct_parts(phi, lam_tilde, tolerances).total
    z, scalar = _spectral(lam_tilde)
    tol = _resolve(tolerances)
    box = _support_box(phi)
    rho = 0.5 * (d - 1)
    values = _filon(_polar_amplitude(phi, d, box, _inner(tol)), -(z + rho), _t_start(box), tol)
    logger.debug("r_phi_direct d=%d: %d spectral values", d, z.shape[0])
    return _unwrap(sphere_factor(d) * values, scalar, np.shape(lam_tilde))


def _kernel_double_integral(
    phi: TwoVariableFunction, z: np.ndarray, d: int, tol: Tolerances
) -> np.ndarray:
    """Integral of phi K_z over the plane, split at the diagonal.

    Each half is integrated in w = -log|a - b|; the band |a - b| < DIAGONAL_FLOOR
    is left out.
    """
    (alo, ahi), (blo, bhi) = _support_box(phi)
    inner = _inner(tol)
    w_max = -math.log(DIAGONAL_FLOOR)

    def half(sign: float) -> Callable[[np.ndarray], np.ndarray]:
        def across(a: np.ndarray) -> np.ndarray:
            if sign < 0:
                eps_lo, eps_hi = a - bhi, a - blo
            else:
                eps_lo, eps_hi = blo - a, bhi - a
            eps_lo = np.maximum(eps_lo, DIAGONAL_FLOOR)
            lower = np.where(eps_hi > eps_lo, -_safe_log(eps_hi), w_max)
            upper = np.where(eps_hi > eps_lo, -np.log(eps_lo), w_max)

            def integrand(w: np.ndarray, index: np.ndarray) -> np.ndarray:
                eps = np.exp(-w)
                aa = np.broadcast_to(a[index][None, :], w.shape)
                bb = aa + sign * eps
                weight = np.asarray(phi(aa, bb), dtype=float)
                out = np.zeros(w.shape + z.shape, dtype=complex)
                live = weight != 0
                if np.any(live):
                    kernel = _kernel_values(
                        z[None, :], aa[live][:, None], bb[live][:, None], d, inner
                    )
                    out[live] = (weight[live] * eps[live])[:, None] * kernel
                return out

            return integrate_1d_batch(
                integrand, lower, upper, inner.abs_tol, inner.rel_tol
            ).value

        return across

    spec_a = Quadrature1DSpec((alo, ahi), tol.abs_tol, tol.rel_tol)
    below = np.asarray(integrate_1d(half(-1.0), spec_a).value)
    above = np.asarray(integrate_1d(half(1.0), spec_a).value)
    return below + above


def r_phi_kernel(
    phi: TwoVariableFunction,
    lam_tilde: Any,
    d: int,
    method: str = "slices",
    tolerances: Optional[Tolerances] = None,
) -> ComplexArray:
    """R_phi = (d-2) vol(B_{d-2}) * double integral of phi(a, b) K_z(a, b).

    ``method="slices"`` integrates over Omega with t outermost, which keeps
    large |lambda_tilde| cheap. ``method="kernel"`` evaluates K_z pointwise and
    integrates it against phi; it omits the band |a - b| < 2e-8 and is meant
    for small |lambda_tilde| cross-checks.
    """
    d = _check_dimension(d, 3)
    if method not in KERNEL_METHODS:
        raise BadParam(f"method must be one of {KERNEL_METHODS}, got {method!r}")
    z, scalar = _spectral(lam_tilde)
    tol = _resolve(tolerances)
    if method == "kernel":
        values = _kernel_double_integral(phi, z, d, tol)
    else:
        box = _support_box(phi)
        rho = 0.5 * (d - 1)
        amplitude = slice_amplitude(phi, d, _inner(tol))
        values = _filon(amplitude, -(z + rho), _t_start(box), tol)
    return _unwrap(sphere_factor(d) * values, scalar, np.shape(lam_tilde))


# ---------------------------------------------------------------------------
# f_T and its derivative
# ---------------------------------------------------------------------------


def _t_values(t: Any) -> tuple[np.ndarray, bool]:
    arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise BadParam(f"t must be finite, got {t!r}")
    return arr.ravel(), arr.ndim == 0


def _real_out(values: np.ndarray, scalar: bool, shape: tuple[int, ...]) -> Any:
    real = np.real(np.asarray(values))
    if scalar:
        return float(real.reshape(-1)[0])
    return real.reshape(shape)


def _smeared(psi: BumpPsi, T: float, g: Any) -> RotatedProduct:
    """(a, b) -> T psi(T (a - b)) g((a + b)/2)."""
    if not (math.isfinite(T) and T > 0):
        raise BadParam(f"T must be positive and finite, got {T}")
    return RotatedProduct(psi.f.scaled(T, amplitude=T), g)


def _rotated_integral(
    psi: BumpPsi,
    T: float,
    t: np.ndarray,
    d: int,
    power: float,
    tol: Tolerances,
    extra: Optional[Callable[..., np.ndarray]] = None,
) -> np.ndarray:
    """Integral over alpha, beta of T psi(T alpha) psi(beta) e^(4 beta)
    bracket**power u**((d-3)/2) [* extra] over the region
    2 e^beta sinh(|alpha|/2) < u < 2 e^beta cosh(alpha/2).

    With c = 2 cosh(alpha/2), s = 2 sinh(|alpha|/2) and
    E = u/c + 2 R' sin(theta/2)**2, R' = u e^(-|alpha|/2) / (s c), the
    bracket is (R' sin(theta))**2 X with X = s c (u + s E)(u + c E) / (4 u**2).
    """
    f = psi.f
    e_lo, e_hi = math.exp(f.lo), math.exp(f.hi)

    def at(t_k: float) -> complex:
        u = math.exp(-t_k)

        def integrand(al: np.ndarray, eta: np.ndarray) -> np.ndarray:
            half = 0.5 * np.abs(al)
            c = 2.0 * np.cosh(0.5 * al)
            s = 2.0 * np.sinh(half)
            low = u / c
            radius = u * np.exp(-half) / (s * c)
            r_lo = np.clip((e_lo - low) / (2.0 * radius), 0.0, 1.0)
            r_hi = np.clip((e_hi - low) / (2.0 * radius), 0.0, 1.0)
            start = 2.0 * np.arcsin(np.sqrt(r_lo))
            width = 2.0 * np.arcsin(np.sqrt(r_hi)) - start
            theta = start + width * eta
            big = low + 2.0 * radius * np.sin(0.5 * theta) ** 2
            x = s * c * (u + s * big) * (u + c * big) / (4.0 * u * u)
            body = big**3 * (radius * np.sin(theta)) ** (2.0 * power + 1.0) * x**power
            body = body * u ** (0.5 * (d - 3)) * width
            if extra is not None:
                body = body * extra(al, big, u)
            weight = T * np.asarray(f(T * al)) * np.asarray(f(np.log(big)))
            return weight * body

        return sum(
            complex(
                integrate_2d(
                    integrand,
                    Quadrature1DSpec((lo, hi), tol.abs_tol, tol.rel_tol),
                    Quadrature1DSpec((0.0, 1.0), tol.abs_tol, tol.rel_tol),
                ).value
            )
            for lo, hi in ((f.lo / T, 0.0), (0.0, f.hi / T))
        )

    return _per_component(at)(t)


def _f_slices(
    phi: TwoVariableFunction, t: np.ndarray, d: int, tol: Tolerances
) -> np.ndarray:
    rho = 0.5 * (d - 1)
    return np.exp(-rho * t) * np.asarray(slice_amplitude(phi, d, tol)(t))


def f_T(
    psi: BumpPsi,
    T: float,
    t: Any,
    d: int,
    tolerances: Optional[Tolerances] = None,
    coordinates: str = "slices",
) -> Any:
    """f_T(t) = integral of T psi(T alpha) psi(beta) e^(4 beta) bracket**((d-4)/2)
    e^(-t (d-3)/2) over the region of (alpha, beta) allowed at t.

    ``coordinates="slices"`` reuses the R_phi slice amplitude for phi_T and is
    accurate for all t; ``"rotated"`` integrates in (alpha, beta) directly.
    Zero for t below -log(e^a + e^b) over the support.
    """
    d = _check_dimension(d, 3)
    if coordinates not in F_T_COORDINATES:
        raise BadParam(f"coordinates must be one of {F_T_COORDINATES}, got {coordinates!r}")
    t_arr, scalar = _t_values(t)
    tol = _resolve(tolerances)
    if coordinates == "rotated":
        values = _rotated_integral(psi, T, t_arr, d, 0.5 * (d - 4), tol)
    else:
        values = _f_slices(PhiT(T, psi), t_arr, d, tol)
    return _real_out(values, scalar, np.shape(t))


def f_T_prime(
    psi: BumpPsi,
    T: float,
    t: Any,
    d: int,
    tolerances: Optional[Tolerances] = None,
) -> Any:
    """f_T'(t) = -S[psi'](t) - (3d - 3)/2 f_T(t).

    S[g] is f_T with psi(beta) replaced by g(beta). The formula comes from
    shifting beta by -t, which makes the region independent of t.
    """
    d = _check_dimension(d, 3)
    t_arr, scalar = _t_values(t)
    tol = _resolve(tolerances)
    moved = _f_slices(_smeared(psi, T, psi.prime), t_arr, d, tol)
    base = _f_slices(PhiT(T, psi), t_arr, d, tol)
    return _real_out(-moved - 1.5 * (d - 1) * base, scalar, np.shape(t))


class DerivativeTerms(NamedTuple):
    """f_T' split into the region-interior derivative and the two boundary terms."""

    interior: Any
    boundary_cosh: Any
    boundary_sinh: Any

    @property
    def total(self) -> Any:
        return self.interior + self.boundary_cosh - self.boundary_sinh


def _boundary_term(
    psi: BumpPsi, T: float, t: np.ndarray, which: str, tol: Tolerances
) -> np.ndarray:
    """Integral over alpha of T psi(T alpha) psi(beta) e^(4 beta) u**(1/2) at a region edge (d = 4)."""
    f = psi.f
    u = np.exp(-t)

    def integrand(alpha: np.ndarray) -> np.ndarray:
        al = alpha[:, None]
        if which == "cosh":
            edge = 2.0 * np.cosh(0.5 * al)
        else:
            edge = 2.0 * np.sinh(0.5 * np.abs(al))
        with np.errstate(divide="ignore"):
            beta = np.log(u) - np.log(edge)
        weight = np.asarray(f(beta))
        live = weight != 0
        grown = np.where(live, np.exp(4.0 * np.where(live, beta, 0.0)), 0.0)
        return T * np.asarray(f(T * al)) * weight * grown * np.sqrt(u)

    total = np.zeros(t.shape, dtype=complex)
    for lo, hi in ((f.lo / T, 0.0), (0.0, f.hi / T)):
        total = total + np.asarray(
            integrate_1d(integrand, Quadrature1DSpec((lo, hi), tol.abs_tol, tol.rel_tol)).value
        )
    return total


def f_T_prime_terms(
    psi: BumpPsi,
    T: float,
    t: Any,
    d: int,
    tolerances: Optional[Tolerances] = None,
) -> DerivativeTerms:
    """f_T' by differentiating under the integral plus the moving-edge terms.

    The lower edge beta = log(u / (2 cosh(alpha/2))) contributes +F and the
    upper edge beta = log(u / (2 sinh(|alpha|/2))) contributes -F. The edge
    integrands carry bracket**((d-4)/2), so they vanish for d >= 5 and diverge
    for d = 3.

    Raises:
        BadParam: If d < 4.
    """
    d = _check_dimension(d, 3)
    if d < 4:
        raise BadParam("the boundary-term form of f_T' needs d >= 4")
    if not (math.isfinite(T) and T > 0):
        raise BadParam(f"T must be positive and finite, got {T}")
    t_arr, scalar = _t_values(t)
    tol = _resolve(tolerances)
    m = 0.5 * (d - 4)

    def bracket_rate(alpha: np.ndarray, big: np.ndarray, u: np.ndarray) -> np.ndarray:
        p = 2.0 * big * big * np.sinh(alpha)
        return -(p * p - u**4) / (2.0 * u * u)

    interior = -0.5 * (d - 3) * _rotated_integral(psi, T, t_arr, d, m, tol)
    if d > 4:
        interior = interior + m * _rotated_integral(
            psi, T, t_arr, d, m - 1.0, tol, extra=bracket_rate
        )
    if d == 4:
        cosh_edge = _boundary_term(psi, T, t_arr, "cosh", tol)
        sinh_edge = _boundary_term(psi, T, t_arr, "sinh", tol)
    else:
        cosh_edge = np.zeros(t_arr.shape)
        sinh_edge = np.zeros(t_arr.shape)
    shape = np.shape(t)
    return DerivativeTerms(
        _real_out(interior, scalar, shape),
        _real_out(cosh_edge, scalar, shape),
        _real_out(sinh_edge, scalar, shape),
    )


def f_T_transform(
    psi: BumpPsi,
    T: float,
    lam_tilde: Any,
    d: int,
    tolerances: Optional[Tolerances] = None,
) -> ComplexArray:
    """Integral of f_T(t) exp(-2 pi i lambda_tilde t) dt.

    (d-2) vol(B_{d-2}) times this equals R_phi for phi = phi_T.
    """
    d = _check_dimension(d, 3)
    z, scalar = _spectral(lam_tilde)
    tol = _resolve(tolerances)
    phi = PhiT(T, psi)
    rho = 0.5 * (d - 1)
    amplitude = slice_amplitude(phi, d, _inner(tol))
    values = _filon(amplitude, -(z + rho), _t_start(_support_box(phi)), tol)
    return _unwrap(values, scalar, np.shape(lam_tilde))


class MonteCarloEstimate(NamedTuple):
    mean: float
    stderr: float
    n_samples: int
    seed: int


def f_T_monte_carlo(
    psi: BumpPsi,
    T: float,
    t: float,
    d: int,
    n_samples: int = 1_000_000,
    seed: int = 0,
    chunk: int = 1 << 18,
) -> MonteCarloEstimate:
    """f_T(t) by uniform sampling of (alpha, beta) over the support box.

    For d = 3 the bracket**(-1/2) weight has infinite variance; use d >= 4
    when the standard error matters.
    """
    d = _check_dimension(d, 3)
    if n_samples < 2:
        raise BadParam(f"n_samples must be >= 2, got {n_samples}")
    if not (math.isfinite(T) and T > 0):
        raise BadParam(f"T must be positive and finite, got {T}")
    f = psi.f
    rng = np.random.default_rng(seed)
    a_lo, a_hi = f.lo / T, f.hi / T
    area = (a_hi - a_lo) * (f.hi - f.lo)
    u = math.exp(-t)
    power = 0.5 * (d - 4)
    total = 0.0
    total_sq = 0.0
    remaining = n_samples
    while remaining > 0:
        n = min(chunk, remaining)
        remaining -= n
        alpha = rng.uniform(a_lo, a_hi, n)
        beta = rng.uniform(f.lo, f.hi, n)
        big = np.exp(beta)
        s = 2.0 * np.sinh(0.5 * np.abs(alpha))
        c = 2.0 * np.cosh(0.5 * alpha)
        inside = (s * big < u) & (u < c * big)
        values = np.zeros(n)
        if np.any(inside):
            bi, si, ci, al = big[inside], s[inside], c[inside], alpha[inside]
            bracket = (u * u - (si * bi) ** 2) * ((ci * bi) ** 2 - u * u) / (4.0 * u * u)
            weight = T * np.asarray(f(T * al)) * np.asarray(f(np.log(bi)))
            values[inside] = weight * bi**4 * bracket**power * u ** (0.5 * (d - 3))
        total += float(values.sum())
        total_sq += float((values * values).sum())
    mean = total / n_samples
    variance = max(total_sq / n_samples - mean * mean, 0.0)
    stderr = area * math.sqrt(variance / (n_samples - 1))
    logger.debug("f_T Monte-Carlo at t=%g: %d samples, seed %d", t, n_samples, seed)
    return MonteCarloEstimate(area * mean, stderr, n_samples, seed)


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------


def kernel_slice_table(
    z: complex,
    a: Any,
    b: float,
    d: int,
    tolerances: Optional[Tolerances] = None,
) -> pd.DataFrame:
    """K_z(a, b) along a line of fixed b, columns a, b, re, im."""
    a_arr = np.asarray(a, dtype=float).ravel()
    values = np.asarray(kernel_K(z, a_arr, b, d, tolerances)).reshape(a_arr.shape)
    return pd.DataFrame(
        {"a": a_arr, "b": np.full(a_arr.shape, float(b)), "re": values.real, "im": values.imag}
    )


def f_T_trace_table(
    psi: BumpPsi,
    T: float,
    t: Any,
    d: int,
    tolerances: Optional[Tolerances] = None,
) -> pd.DataFrame:
    """f_T and f_T' on a t-grid, columns t, f, f_prime."""
    t_arr = np.asarray(t, dtype=float).ravel()
    return pd.DataFrame(
        {
            "t": t_arr,
            "f": np.asarray(f_T(psi, T, t_arr, d, tolerances)),
            "f_prime": np.asarray(f_T_prime(psi, T, t_arr, d, tolerances)),
        }
    )
