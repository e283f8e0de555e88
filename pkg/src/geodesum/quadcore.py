"""
Numerical foundation: complex log-Gamma, adaptive quadrature and
compensated summation.

Every integrator in this module is vectorized: the integrand receives a 1D
array of nodes and returns an array whose leading axis runs over those nodes.
Trailing axes are treated as independent components of a vector-valued
integral, which is how the kernel routes evaluate many spectral parameters in
a single pass.

    from geodesum.quadcore import Quadrature1DSpec, integrate_1d

    spec = Quadrature1DSpec((0.0, 1.0), singular_endpoints={"lower"})
    integrate_1d(lambda t: t**-0.5, spec).value   # ~ 2
"""

import functools
import logging
import math
from collections.abc import Iterable
from dataclasses import dataclass, field, replace
from typing import Any, Callable, NamedTuple, Optional, Union

import numpy as np

from .config import Tolerances, default_tolerances
from .exceptions import BadParam, NonConvergence, NonFinite, PoleError

logger = logging.getLogger(__name__)

ComplexValue = complex
Integrand = Callable[[np.ndarray], Any]

_EPS = float(np.finfo(float).eps)

# Lanczos approximation, g = 7, n = 9
_LANCZOS_G = 7.0
_LANCZOS_COEFFS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_LOG_PI = math.log(math.pi)
_POLE_DISTANCE = 1e-12

# Gauss-Kronrod 7/15 abscissae and weights (QUADPACK qk15)
_XGK = (
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
)
_WGK = (
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
)
_WG = (
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
)


def _gk_tables() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    nodes = np.array([-x for x in _XGK[:-1]] + [0.0] + list(reversed(_XGK[:-1])))
    kronrod = np.array(list(_WGK[:-1]) + [_WGK[-1]] + list(reversed(_WGK[:-1])))
    gauss = np.zeros(15)
    # Gauss nodes are the odd-indexed Kronrod nodes
    for i, w in zip((1, 3, 5), _WG[:3]):
        gauss[i] = w
        gauss[14 - i] = w
    gauss[7] = _WG[3]
    return nodes, kronrod, gauss


_GK_NODES, _GK_WEIGHTS, _G_WEIGHTS = _gk_tables()

_DE_TMAX = 4.0
_DE_MAX_LEVEL = 10
_DE_MIN_LEVEL = 3

_CHEB_POINTS = 33
_CHEB_NODES = np.cos(np.pi * (np.arange(_CHEB_POINTS) + 0.5) / _CHEB_POINTS)
_CHEB_FIT = (2.0 / _CHEB_POINTS) * np.polynomial.chebyshev.chebvander(
    _CHEB_NODES, _CHEB_POINTS - 1
).T
_CHEB_FIT[0] *= 0.5
_OSC_DECAY_CUTOFF = 40.0

# Upper bounds on a single integrand call: nodes, and nodes * components
MAX_CALL_NODES = 2048
MAX_CALL_VALUES = 1 << 19
_HEAD_NODES = 15

_ENDPOINT_NAMES = frozenset({"lower", "upper"})


# ---------------------------------------------------------------------------
# log-Gamma
# ---------------------------------------------------------------------------


def _log_gamma_right(z: np.ndarray) -> np.ndarray:
    """Lanczos log-Gamma for Re z >= 1/2."""
    z = z - 1.0
    x = np.full(z.shape, _LANCZOS_COEFFS[0], dtype=complex)
    for i in range(1, len(_LANCZOS_COEFFS)):
        x = x + _LANCZOS_COEFFS[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (z + 0.5) * np.log(t) - t + np.log(x)


def _log_sin_pi(z: np.ndarray) -> np.ndarray:
    """log sin(pi z), written to avoid overflow for large |Im z|."""
    out = np.empty(z.shape, dtype=complex)
    upper = z.imag > 1.0
    lower = z.imag < -1.0
    middle = ~(upper | lower)
    zu = z[upper]
    out[upper] = -1j * np.pi * zu + np.log((np.exp(2j * np.pi * zu) - 1.0) / 2j)
    zl = z[lower]
    out[lower] = 1j * np.pi * zl + np.log((1.0 - np.exp(-2j * np.pi * zl)) / 2j)
    out[middle] = np.log(np.sin(np.pi * z[middle]))
    return out


def log_gamma(z: Union[complex, float, np.ndarray]) -> Union[complex, np.ndarray]:
    """Principal-branch log Gamma(z) for complex z.

    Lanczos approximation on Re z >= 1/2, reflection formula elsewhere. Accepts
    scalars (returns ``complex``) or arrays (returns a complex ndarray).

    Raises:
        PoleError: If z is within 1e-12 of a non-positive integer.
        NonFinite: If z is NaN or infinite.
    """
    arr = np.asarray(z, dtype=complex)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if not np.all(np.isfinite(arr)):
        raise NonFinite(f"log_gamma argument is not finite: {arr[~np.isfinite(arr)][0]}")

    nearest = np.round(arr.real)
    pole = (nearest <= 0) & (np.abs(arr - nearest) < _POLE_DISTANCE)
    if np.any(pole):
        raise PoleError(
            f"log_gamma: z={arr[pole][0]} is within {_POLE_DISTANCE} of a pole"
        )

    out = np.empty(arr.shape, dtype=complex)
    right = arr.real >= 0.5
    out[right] = _log_gamma_right(arr[right])
    left = ~right
    if np.any(left):
        zl = arr[left]
        out[left] = _LOG_PI - _log_sin_pi(zl) - _log_gamma_right(1.0 - zl)
    if scalar:
        return complex(out[0])
    return out


# ---------------------------------------------------------------------------
# Quadrature specs and results
# ---------------------------------------------------------------------------


def _default_abs_tol() -> float:
    return default_tolerances().abs_tol


def _default_rel_tol() -> float:
    return default_tolerances().rel_tol


@dataclass(frozen=True)
class Quadrature1DSpec:
    """Interval, tolerances and rule hints for a 1D integral.

    ``singular_endpoints`` names finite endpoints where the integrand may have
    an integrable power-type singularity; they switch the rule to tanh-sinh.
    Infinite endpoints require ``decay_declared=True``: the caller asserts the
    integrand decays fast enough for a double-exponential rule.
    ``max_evals`` caps the number of nodes a rule may evaluate before it gives
    up with NonConvergence.
    """

    interval: tuple[float, float]
    abs_tol: float = field(default_factory=_default_abs_tol)
    rel_tol: float = field(default_factory=_default_rel_tol)
    singular_endpoints: frozenset[str] = frozenset()
    decay_declared: bool = False
    initial_panels: int = 1
    max_panels: int = 4000
    max_evals: int = 1_000_000

    def __post_init__(self) -> None:
        lo, hi = (float(v) for v in self.interval)
        object.__setattr__(self, "interval", (lo, hi))
        if math.isnan(lo) or math.isnan(hi) or not lo < hi:
            raise BadParam(f"interval must satisfy lo < hi, got {self.interval}")
        # Reuse the tolerance validation
        Tolerances(self.abs_tol, self.rel_tol)

        names = frozenset(self.singular_endpoints)
        object.__setattr__(self, "singular_endpoints", names)
        unknown = names - _ENDPOINT_NAMES
        if unknown:
            raise BadParam(f"unknown singular endpoint names: {sorted(unknown)}")

        if (math.isinf(lo) or math.isinf(hi)) and not self.decay_declared:
            raise BadParam(
                f"infinite interval {self.interval} requires decay_declared=True"
            )
        if self.initial_panels < 1 or self.max_panels < self.initial_panels:
            raise BadParam(
                f"need 1 <= initial_panels <= max_panels, got "
                f"{self.initial_panels}, {self.max_panels}"
            )
        if self.max_evals < 15:
            raise BadParam(f"max_evals must be at least 15, got {self.max_evals}")

    @property
    def is_finite(self) -> bool:
        return not (math.isinf(self.interval[0]) or math.isinf(self.interval[1]))

    def with_interval(self, lo: float, hi: float) -> "Quadrature1DSpec":
        return replace(self, interval=(lo, hi))


class QuadratureResult(NamedTuple):
    """Value of an integral with its error estimate and evaluation count."""

    value: Union[complex, np.ndarray]
    err_est: float
    n_evals: int


def _finish(total: np.ndarray) -> Union[complex, np.ndarray]:
    if total.ndim == 0:
        return complex(total)
    return total


def _evaluate(f: Integrand, x: np.ndarray) -> np.ndarray:
    """Evaluate f on x in chunks of bounded size.

    The first few nodes are evaluated alone to learn the number of components
    per node; the rest go in calls of at most MAX_CALL_NODES nodes and
    MAX_CALL_VALUES values. Nested integrals rely on this: an inner rule sees
    every outer node as a component.
    """
    n = x.shape[0]
    if n <= _HEAD_NODES:
        return _evaluate_once(f, x)
    head = _evaluate_once(f, x[:_HEAD_NODES])
    per_node = max(1, head[0].size)
    step = max(1, min(MAX_CALL_NODES, MAX_CALL_VALUES // per_node))
    parts = [head]
    for start in range(_HEAD_NODES, n, step):
        parts.append(_evaluate_once(f, x[start : start + step]))
    return np.concatenate(parts, axis=0)


def _evaluate_once(f: Integrand, x: np.ndarray) -> np.ndarray:
    """Call a vectorized integrand and check its output."""
    values = np.asarray(f(x))
    if values.ndim == 0:
        values = np.broadcast_to(values, x.shape)
    if values.shape[0] != x.shape[0]:
        raise BadParam(
            f"integrand returned shape {values.shape} for {x.shape[0]} nodes"
        )
    finite = np.isfinite(values)
    if not np.all(finite):
        bad = ~finite.reshape(x.shape[0], -1).all(axis=1)
        raise NonFinite(f"integrand returned a non-finite value at x={x[bad][0]!r}")
    return values.astype(complex, copy=False)


def _component_max(values: np.ndarray) -> float:
    if values.size == 0:
        return 0.0
    return float(np.max(np.abs(values)))


# ---------------------------------------------------------------------------
# Adaptive Gauss-Kronrod
# ---------------------------------------------------------------------------


def _gk_panels(
    f: Integrand, a: np.ndarray, b: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Kronrod value, QUADPACK-style error and roundoff floor per panel."""
    center = 0.5 * (a + b)
    half = 0.5 * (b - a)
    x = (center[:, None] + half[:, None] * _GK_NODES[None, :]).ravel()
    fx = _evaluate(f, x)
    n_panels = a.shape[0]
    fx = fx.reshape((n_panels, 15) + fx.shape[1:])
    hw = half.reshape((n_panels,) + (1,) * (fx.ndim - 2))

    kron = hw * np.einsum("k,pk...->p...", _GK_WEIGHTS, fx)
    gauss = hw * np.einsum("k,pk...->p...", _G_WEIGHTS, fx)
    resabs = hw * np.einsum("k,pk...->p...", _GK_WEIGHTS, np.abs(fx))
    mean = kron / (2.0 * hw)
    resasc = hw * np.einsum(
        "k,pk...->p...", _GK_WEIGHTS, np.abs(fx - mean[:, None, ...])
    )
    diff = np.abs(kron - gauss)
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = resasc * np.minimum(1.0, (200.0 * diff / resasc) ** 1.5)
    err = np.where(resasc > 0, scaled, diff)
    floor = 50.0 * _EPS * resabs
    err = np.maximum(err, floor)

    err_panel = err.reshape(n_panels, -1).max(axis=1)
    floor_panel = floor.reshape(n_panels, -1).max(axis=1)
    return kron, err_panel, floor_panel


def _gauss_kronrod(f: Integrand, spec: Quadrature1DSpec) -> QuadratureResult:
    lo, hi = spec.interval
    edges = np.linspace(lo, hi, spec.initial_panels + 1)
    a, b = edges[:-1], edges[1:]
    val, err, floor = _gk_panels(f, a, b)
    n_evals = 15 * a.shape[0]

    while True:
        total = val.sum(axis=0)
        total_err = float(err.sum())
        target = max(spec.abs_tol, spec.rel_tol * _component_max(total))
        if total_err <= target:
            break

        n_panels = a.shape[0]
        width = b - a
        resolvable = width > 64.0 * np.spacing(np.maximum(np.abs(a), np.abs(b)))
        big = err > target / n_panels
        improvable = err > 2.0 * floor
        pick = big & improvable & resolvable
        if not np.any(pick):
            if np.any(big & improvable):
                raise NonConvergence(
                    f"gauss-kronrod: panels cannot be subdivided further on "
                    f"[{lo}, {hi}], err {total_err:.3e} > target {target:.3e}"
                )
            logger.debug(
                "gauss-kronrod limited by roundoff: err %.3e, target %.3e",
                total_err,
                target,
            )
            break
        if n_panels + int(pick.sum()) > spec.max_panels:
            raise NonConvergence(
                f"gauss-kronrod: panel budget {spec.max_panels} exhausted on "
                f"[{lo}, {hi}], err {total_err:.3e} > target {target:.3e}"
            )

        if n_evals + 30 * int(pick.sum()) > spec.max_evals:
            raise NonConvergence(
                f"gauss-kronrod: evaluation budget {spec.max_evals} exhausted on "
                f"[{lo}, {hi}], err {total_err:.3e} > target {target:.3e}"
            )
        mid = 0.5 * (a[pick] + b[pick])
        new_a = np.concatenate([a[pick], mid])
        new_b = np.concatenate([mid, b[pick]])
        new_val, new_err, new_floor = _gk_panels(f, new_a, new_b)
        n_evals += 15 * new_a.shape[0]

        keep = ~pick
        a = np.concatenate([a[keep], new_a])
        b = np.concatenate([b[keep], new_b])
        val = np.concatenate([val[keep], new_val], axis=0)
        err = np.concatenate([err[keep], new_err])
        floor = np.concatenate([floor[keep], new_floor])

    logger.debug(
        "gauss-kronrod on [%g, %g]: %d panels, err %.3e", lo, hi, a.shape[0], total_err
    )
    return QuadratureResult(_finish(total), total_err, n_evals)


# ---------------------------------------------------------------------------
# Double-exponential rules
# ---------------------------------------------------------------------------


def _tanh_sinh_map(
    lo: float, hi: float
) -> Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]:
    width = hi - lo

    def transform(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        y = 0.5 * np.pi * np.sinh(t)
        e = np.exp(-2.0 * np.abs(y))
        # distance to the nearer endpoint, computed without cancellation
        near = width * e / (1.0 + e)
        x = np.where(t < 0, lo + near, hi - near)
        sech2 = 4.0 * e / (1.0 + e) ** 2
        w = 0.5 * width * sech2 * 0.5 * np.pi * np.cosh(t)
        inside = (x > lo) & (x < hi) & (w > 0)
        return x[inside], w[inside]

    return transform


def _sinh_sinh_map(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    y = 0.5 * np.pi * np.sinh(t)
    return np.sinh(y), 0.5 * np.pi * np.cosh(t) * np.cosh(y)


def _exp_sinh_map(
    anchor: float, direction: float
) -> Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]:
    def transform(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        e = np.exp(0.5 * np.pi * np.sinh(t))
        x = anchor + direction * e
        w = 0.5 * np.pi * np.cosh(t) * e
        inside = (x != anchor) & (w > 0)
        return x[inside], w[inside]

    return transform


def _de_sum(
    f: Integrand,
    transform: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]],
    t: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, int]:
    x, w = transform(t)
    if x.size == 0:
        return np.zeros(()), np.zeros(()), 0
    fx = _evaluate(f, x)
    wx = w.reshape((-1,) + (1,) * (fx.ndim - 1))
    return (wx * fx).sum(axis=0), (wx * np.abs(fx)).sum(axis=0), x.shape[0]


def _double_exponential(
    f: Integrand,
    transform: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]],
    spec: Quadrature1DSpec,
) -> QuadratureResult:
    h = 1.0
    k_max = math.floor(_DE_TMAX)
    t = np.arange(-k_max, k_max + 1, dtype=float)
    acc, acc_abs, n_evals = _de_sum(f, transform, t)
    estimate = h * acc

    for level in range(1, _DE_MAX_LEVEL + 1):
        h *= 0.5
        k = np.arange(1, int(_DE_TMAX / h) + 1, 2, dtype=float)
        t = np.concatenate([-k[::-1], k]) * h
        new_sum, new_abs, n_new = _de_sum(f, transform, t)
        acc = acc + new_sum
        acc_abs = acc_abs + new_abs
        n_evals += n_new
        previous, estimate = estimate, h * acc

        err = _component_max(np.asarray(estimate - previous))
        target = max(spec.abs_tol, spec.rel_tol * _component_max(np.asarray(estimate)))
        roundoff = 64.0 * _EPS * h * _component_max(np.asarray(acc_abs))
        if level >= _DE_MIN_LEVEL and err <= max(target, roundoff):
            logger.debug("double-exponential converged at level %d, err %.3e", level, err)
            return QuadratureResult(_finish(np.asarray(estimate)), err, n_evals)
        if n_evals > spec.max_evals:
            break

    raise NonConvergence(
        f"double-exponential rule on {spec.interval} did not converge after "
        f"{level} levels and {n_evals} evaluations (last change {err:.3e})"
    )


# ---------------------------------------------------------------------------
# Public integrators
# ---------------------------------------------------------------------------


def integrate_1d(f: Integrand, spec: Quadrature1DSpec) -> QuadratureResult:
    """Integrate a vectorized (possibly vector-valued) function over an interval.

    Finite intervals use adaptive Gauss-Kronrod 7/15 unless singular endpoints
    are declared, in which case tanh-sinh is used. Infinite intervals use
    exp-sinh or sinh-sinh.

    Raises:
        NonConvergence: If the budget is exhausted before reaching tolerance.
        NonFinite: If the integrand returns NaN or infinity.
    """
    lo, hi = spec.interval
    if math.isinf(lo) and math.isinf(hi):
        return _double_exponential(f, _sinh_sinh_map, spec)
    if math.isinf(hi):
        return _double_exponential(f, _exp_sinh_map(lo, 1.0), spec)
    if math.isinf(lo):
        return _double_exponential(f, _exp_sinh_map(hi, -1.0), spec)
    if spec.singular_endpoints:
        return _double_exponential(f, _tanh_sinh_map(lo, hi), spec)
    return _gauss_kronrod(f, spec)


def integrate_1d_batch(
    f: Callable[[np.ndarray, np.ndarray], Any],
    lower: np.ndarray,
    upper: np.ndarray,
    abs_tol: Optional[float] = None,
    rel_tol: Optional[float] = None,
    singular_endpoints: Iterable[str] = (),
    initial_panels: int = 1,
) -> QuadratureResult:
    """Integrate a batch of integrands, each over its own interval.

    ``f(y, index)`` receives nodes ``y`` of shape ``(m, n)`` together with the
    indices (into ``lower``/``upper``) of the ``n`` batch elements being
    evaluated, and returns shape ``(m, n, ...)``. Elements with an empty
    interval contribute zero and are never evaluated.
    """
    tolerances = default_tolerances()
    lower = np.asarray(lower, dtype=float).ravel()
    upper = np.asarray(upper, dtype=float).ravel()
    width = upper - lower
    active = np.flatnonzero(width > 0)

    if active.size == 0:
        return QuadratureResult(np.zeros(lower.shape, dtype=complex), 0.0, 0)

    lo_a = lower[active]
    width_a = width[active]

    def mapped(eta: np.ndarray) -> np.ndarray:
        y = lo_a[None, :] + width_a[None, :] * eta[:, None]
        values = np.asarray(f(y, active))
        if values.ndim < 2:
            values = np.broadcast_to(values, y.shape)
        scale = width_a.reshape((1, -1) + (1,) * (values.ndim - 2))
        return values * scale

    spec = Quadrature1DSpec(
        (0.0, 1.0),
        abs_tol=tolerances.abs_tol if abs_tol is None else abs_tol,
        rel_tol=tolerances.rel_tol if rel_tol is None else rel_tol,
        singular_endpoints=frozenset(singular_endpoints),
        initial_panels=initial_panels,
    )
    result = integrate_1d(mapped, spec)
    active_values = np.asarray(result.value)
    out = np.zeros((lower.shape[0],) + active_values.shape[1:], dtype=complex)
    out[active] = active_values
    return QuadratureResult(out, result.err_est, result.n_evals)


def _broadcast_grid(values: Any, shape: tuple[int, ...]) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim < len(shape):
        arr = np.broadcast_to(arr, shape)
    return arr


def integrate_2d(
    f: Callable[[np.ndarray, np.ndarray], Any],
    spec_x: Quadrature1DSpec,
    spec_y: Quadrature1DSpec,
    y_limits: Optional[Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]] = None,
) -> QuadratureResult:
    """Iterated integral of f(x, y): x outer, y inner.

    ``f`` must broadcast: it is called with x of shape ``(1, n)`` and y of
    shape ``(m, 1)`` (or ``(m, n)`` with ``y_limits``) and returns
    ``(m, n, ...)``. With ``y_limits``, the inner interval for each outer node
    is ``y_limits(x)``; ``spec_y`` then contributes tolerances and singular
    endpoint flags, which refer to the ends of each inner interval.
    """
    inner_err = [0.0]
    inner_evals = [0]

    def inner(x: np.ndarray) -> np.ndarray:
        if y_limits is None:

            def column(y: np.ndarray) -> np.ndarray:
                xx, yy = x[None, :], y[:, None]
                return _broadcast_grid(f(xx, yy), (y.shape[0], x.shape[0]))

            result = integrate_1d(column, spec_y)
        else:
            lo, hi = y_limits(x)
            lo = np.broadcast_to(np.asarray(lo, dtype=float), x.shape)
            hi = np.broadcast_to(np.asarray(hi, dtype=float), x.shape)

            def batch(y: np.ndarray, index: np.ndarray) -> np.ndarray:
                return _broadcast_grid(f(x[index][None, :], y), y.shape)

            result = integrate_1d_batch(
                batch,
                lo,
                hi,
                spec_y.abs_tol,
                spec_y.rel_tol,
                spec_y.singular_endpoints,
                spec_y.initial_panels,
            )
        inner_err[0] = max(inner_err[0], result.err_est)
        inner_evals[0] += result.n_evals
        return np.asarray(result.value)

    outer = integrate_1d(inner, spec_x)
    lo, hi = spec_x.interval
    span = hi - lo if spec_x.is_finite else 1.0
    return QuadratureResult(
        outer.value, outer.err_est + span * inner_err[0], inner_evals[0]
    )


def integrate_3d(
    f: Callable[[np.ndarray, np.ndarray, np.ndarray], Any],
    spec_x: Quadrature1DSpec,
    spec_y: Quadrature1DSpec,
    spec_z: Quadrature1DSpec,
) -> QuadratureResult:
    """Iterated integral of f(x, y, z) over a box, z innermost."""
    inner_err = [0.0]
    inner_evals = [0]

    def inner(x: np.ndarray) -> np.ndarray:
        def plane(y: np.ndarray, z: np.ndarray) -> np.ndarray:
            values = f(x[None, None, :], y[..., None], z[..., None])
            shape = np.broadcast_shapes(y.shape, z.shape) + (x.shape[0],)
            return _broadcast_grid(values, shape)

        result = integrate_2d(plane, spec_y, spec_z)
        inner_err[0] = max(inner_err[0], result.err_est)
        inner_evals[0] += result.n_evals
        return np.asarray(result.value)

    outer = integrate_1d(inner, spec_x)
    lo, hi = spec_x.interval
    span = hi - lo if spec_x.is_finite else 1.0
    return QuadratureResult(
        outer.value, outer.err_est + span * inner_err[0], inner_evals[0]
    )


# ---------------------------------------------------------------------------
# Filon-type oscillatory rule
# ---------------------------------------------------------------------------


@functools.lru_cache(maxsize=64)
def _gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    vander = np.polynomial.chebyshev.chebvander(x, _CHEB_POINTS - 1)
    return x, w, vander


def _align(values: np.ndarray, ndim: int) -> np.ndarray:
    """Insert unit axes after the node axis so trailing shapes broadcast."""
    missing = ndim - (values.ndim - 1)
    if missing <= 0:
        return values
    return values.reshape(values.shape[:1] + (1,) * missing + values.shape[1:])


def _initial_edges(lo: float, hi: float, panels: int, unbounded: bool) -> np.ndarray:
    if not unbounded:
        return np.linspace(lo, hi, panels + 1)
    steps = [0.0, 1.0]
    while steps[-1] < hi - lo:
        steps.append(2.0 * steps[-1])
    edges = lo + np.array(steps)
    edges[-1] = hi
    return edges


def integrate_oscillatory(
    amplitude: Integrand,
    rate: Union[complex, np.ndarray],
    spec: Quadrature1DSpec,
) -> QuadratureResult:
    """Integrate g(w) * exp(rate * w) over ``spec.interval``.

    ``amplitude(w)`` returns shape ``(len(w), *S)`` and ``rate`` has a shape
    that broadcasts against ``S``; the result has the broadcast shape. The
    amplitude is interpolated on adaptive Chebyshev panels, so it is called
    only at interpolation nodes no matter how large ``|rate|`` is. An infinite
    upper limit needs ``Re(rate) < 0``; the integral is cut where
    ``exp(Re(rate) * w)`` drops below ``e**-40`` and the remainder is added in
    closed form.
    """
    lo, hi = spec.interval
    rate = np.asarray(rate, dtype=complex)
    if math.isinf(lo):
        raise BadParam("integrate_oscillatory needs a finite lower limit")
    unbounded = math.isinf(hi)
    if unbounded:
        if np.any(rate.real >= 0):
            raise BadParam("an infinite upper limit requires Re(rate) < 0")
        decay = float(np.min(-rate.real))
        hi = lo + _OSC_DECAY_CUTOFF / decay

    edges = _initial_edges(lo, hi, spec.initial_panels, unbounded)
    pending_a, pending_b = edges[:-1], edges[1:]
    accepted: list[tuple[float, float, np.ndarray]] = []
    trailing: Optional[tuple[int, ...]] = None
    scale = 0.0
    tail_total = 0.0
    n_evals = 0

    while pending_a.size:
        if len(accepted) + pending_a.size > spec.max_panels:
            raise NonConvergence(
                f"oscillatory rule: panel budget {spec.max_panels} exhausted on "
                f"[{lo}, {hi}]"
            )
        center = 0.5 * (pending_a + pending_b)
        half = 0.5 * (pending_b - pending_a)
        nodes = (center[:, None] + half[:, None] * _CHEB_NODES[None, :]).ravel()
        if n_evals + nodes.shape[0] > spec.max_evals:
            raise NonConvergence(
                f"oscillatory rule: evaluation budget {spec.max_evals} exhausted on "
                f"[{lo}, {hi}]"
            )
        values = _evaluate(amplitude, nodes)
        n_evals += nodes.shape[0]
        trailing = values.shape[1:]
        values = values.reshape(pending_a.shape[0], _CHEB_POINTS, -1)
        scale = max(scale, _component_max(values))
        coeffs = np.einsum("kj,pjq->pkq", _CHEB_FIT, values)
        tail = np.abs(coeffs[:, -3:, :]).reshape(pending_a.shape[0], -1).max(axis=1)
        tol = max(spec.abs_tol, spec.rel_tol * scale)

        done = tail <= tol
        for i in np.flatnonzero(done):
            accepted.append((pending_a[i], pending_b[i], coeffs[i]))
            tail_total += 2.0 * half[i] * tail[i]
        split = ~done
        if np.any(split & (half < 32.0 * np.spacing(np.abs(center) + 1.0))):
            raise NonConvergence(
                "oscillatory rule: amplitude is not resolvable by polynomials "
                f"near w={center[split][0]:g}"
            )
        mid = center[split]
        pending_a = np.concatenate([pending_a[split], mid])
        pending_b = np.concatenate([mid, pending_b[split]])

    assert trailing is not None
    ndim = max(len(trailing), rate.ndim)
    total: Any = 0.0
    for a, b, coeffs in accepted:
        half = 0.5 * (b - a)
        n_nodes = 40 + math.ceil(0.6 * float(np.max(np.abs(rate))) * (b - a))
        x, w, vander = _gauss_legendre(n_nodes)
        poly = (vander @ coeffs).reshape((n_nodes,) + trailing)
        points = 0.5 * (a + b) + half * x
        phase = np.exp(np.multiply.outer(points, rate))
        weights = w.reshape((-1,) + (1,) * ndim)
        total = total + half * np.sum(
            weights * _align(poly, ndim) * _align(phase, ndim), axis=0
        )

    if unbounded:
        g_cut = _evaluate(amplitude, np.array([hi]))[0]
        total = total + np.asarray(g_cut) * np.exp(rate * hi) / (-rate)

    logger.debug(
        "oscillatory rule on [%g, %g]: %d panels, %d amplitude calls",
        lo,
        hi,
        len(accepted),
        n_evals,
    )
    return QuadratureResult(_finish(np.asarray(total)), tail_total, n_evals)


# ---------------------------------------------------------------------------
# Summation
# ---------------------------------------------------------------------------


def compensated_sum(terms: Union[Iterable[complex], np.ndarray]) -> complex:
    """Correctly rounded sum of complex terms in the given order.

    Real and imaginary parts are summed separately with ``math.fsum``, so the
    result does not depend on term order or sequence length.

    Raises:
        NonFinite: If any term is NaN or infinite.
    """
    if isinstance(terms, np.ndarray):
        arr = terms.astype(complex, copy=False).ravel()
        if not np.all(np.isfinite(arr)):
            index = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise NonFinite(f"compensated_sum: term {index} is not finite")
        return complex(math.fsum(arr.real.tolist()), math.fsum(arr.imag.tolist()))

    real: list[float] = []
    imag: list[float] = []
    for index, term in enumerate(terms):
        value = complex(term)
        if not (math.isfinite(value.real) and math.isfinite(value.imag)):
            raise NonFinite(f"compensated_sum: term {index} is not finite ({value})")
        real.append(value.real)
        imag.append(value.imag)
    return complex(math.fsum(real), math.fsum(imag))


def as_complex(value: Any) -> complex:
    """Convert to ``complex``, rejecting NaN and infinities."""
    result = complex(value)
    if not (math.isfinite(result.real) and math.isfinite(result.imag)):
        raise NonFinite(f"value is not finite: {result}")
    return result


def volume_unit_ball(n: int) -> float:
    """Volume of the unit ball in R^n, pi**(n/2) / Gamma(n/2 + 1)."""
    if isinstance(n, bool) or int(n) != n or n < 0:
        raise BadParam(f"dimension must be a non-negative integer, got {n!r}")
    log_volume = 0.5 * n * _LOG_PI - log_gamma(0.5 * n + 1.0).real
    return math.exp(log_volume)
