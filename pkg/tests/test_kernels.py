"""
Tests for beta(t), the region Omega, the kernel K_z, the R_phi routes and f_T.
"""

import math

import numpy as np
import pytest
from scipy import special

from geodesum.config import Tolerances
from geodesum.exceptions import (
    BadParam,
    CoincidentArguments,
    NearSingular,
    RegionResolutionError,
)
from geodesum.kernels import (
    DerivativeTerms,
    KernelPoint,
    OmegaRegion,
    beta_fn,
    beta_fn_quadrature,
    f_T,
    f_T_monte_carlo,
    f_T_prime,
    f_T_prime_terms,
    f_T_trace_table,
    f_T_transform,
    jacobian_check_d2,
    jacobian_check_d3,
    kernel_bracket,
    kernel_K,
    kernel_K_closed,
    kernel_slice_table,
    r_phi_closed_d2,
    r_phi_direct,
    r_phi_direct_parts,
    r_phi_kernel,
    slice_amplitude,
    sphere_factor,
)
from geodesum.quadcore import MAX_CALL_VALUES
from geodesum.testfn import PhiT

ROUTE_TOL = Tolerances(1e-10, 1e-9)


def _scaled_err(x, y):
    x, y = np.atleast_1d(x), np.atleast_1d(y)
    return float(np.max(np.abs(x - y)) / max(np.max(np.abs(y)), 1e-300))


class TestBeta:
    """Test beta(t) = Gamma(s/2)**2 / (2 Gamma(s))."""

    def test_d3_at_zero(self):
        assert beta_fn(0.0, 3) == pytest.approx(math.pi / 2, rel=1e-13)

    def test_d2_at_zero(self):
        assert beta_fn(0.0, 2).real == pytest.approx(3.7081493546, rel=1e-9)

    def test_real_s_against_beta_function(self):
        """At t = 0 the value is B(s/2, s/2) / 2."""
        for d in (2, 3, 4, 7):
            s = 0.5 * (d - 1)
            assert beta_fn(0.0, d).real == pytest.approx(
                0.5 * special.beta(s / 2, s / 2), rel=1e-12
            )

    @pytest.mark.parametrize("d", [2, 3, 4, 6])
    def test_against_quadrature(self, d):
        t = np.linspace(-5.0, 5.0, 21)
        closed = beta_fn(t, d)
        quad = beta_fn_quadrature(t, d)
        np.testing.assert_allclose(quad, closed, rtol=1e-10)

    def test_conjugate_symmetry(self):
        t = np.linspace(0.1, 3.0, 7)
        np.testing.assert_allclose(beta_fn(-t, 3), np.conj(beta_fn(t, 3)), rtol=1e-13)

    def test_shapes(self):
        assert isinstance(beta_fn(0.5, 3), complex)
        assert beta_fn(np.zeros((2, 3)), 3).shape == (2, 3)

    def test_bad_dimension(self):
        with pytest.raises(BadParam, match="d must be"):
            beta_fn(0.0, 1)

    def test_non_positive_exponent(self):
        """A complex t can push Re s below zero."""
        with pytest.raises(BadParam, match="positive real part"):
            beta_fn(1j, 3)


class TestOmegaAndJacobians:
    """Test the coordinates, the region Omega and the Jacobian checks."""

    def test_kernel_point(self):
        point = KernelPoint.from_xt(1.0, 0.0)
        assert point.a == pytest.approx(math.log(2.0))
        assert point.b == 0.0

    def test_kernel_point_near_singular(self):
        with pytest.raises(NearSingular):
            KernelPoint.from_xt(1e-10, 0.0)

    def test_contains_interior_points(self, rng):
        """(x, r, t) with r > 0 lands strictly inside Omega."""
        x = rng.uniform(-2.0, 2.0, 50)
        r = rng.uniform(0.1, 2.0, 50)
        t = rng.uniform(-1.0, 1.0, 50)
        u = np.exp(-t)
        a = 0.5 * np.log((x + u) ** 2 + r**2)
        b = 0.5 * np.log(x**2 + r**2)
        region = OmegaRegion()
        assert np.all(region.contains(a, b, t))
        lower, upper = region.t_interval(a, b)
        assert np.all((lower < t) & (t < upper))
        b_lo, b_hi = region.b_interval(a, t)
        assert np.all((b_lo < b) & (b < b_hi))
        np.testing.assert_allclose(kernel_bracket(a, b, t), r**2, rtol=1e-9)

    def test_outside(self):
        assert not OmegaRegion().contains(2.0, 0.0, 3.0)

    def test_t_interval_on_diagonal(self):
        lower, upper = OmegaRegion().t_interval(0.0, 0.0)
        assert lower == pytest.approx(-math.log(2.0))
        assert np.isinf(upper)

    def test_jacobian_d2_at_reference_point(self):
        """|det| = exp(-t - a - b) = 1/2 at (x, t) = (1, 0)."""
        check = jacobian_check_d2(1.0, 0.0)
        assert check.analytic == pytest.approx(0.5, rel=1e-14)
        assert check.rel_err < 1e-6

    @pytest.mark.parametrize("x, t", [(-3.0, 0.5), (-0.4, -1.0), (2.5, 1.7)])
    def test_jacobian_d2(self, x, t):
        assert jacobian_check_d2(x, t).rel_err < 1e-6

    @pytest.mark.parametrize("x, r, t", [(0.5, 1.0, 0.3), (-1.2, 0.2, -0.7), (0.0, 2.0, 1.5)])
    def test_jacobian_d3(self, x, r, t):
        assert jacobian_check_d3(x, r, t).rel_err < 1e-6

    def test_jacobian_near_singular(self):
        with pytest.raises(NearSingular):
            jacobian_check_d2(-1.0, 0.0)
        with pytest.raises(NearSingular, match="axis"):
            jacobian_check_d3(0.5, 0.0, 0.0)


class TestKernel:
    """Test K_z(a, b)."""

    @pytest.mark.parametrize("lam", [0.0, 0.3, 1.7])
    def test_d4_matches_closed_form(self, lam):
        z = 2j * math.pi * lam
        a = np.array([0.2, -0.5, 1.0])
        b = np.array([-0.1, 0.4, 0.95])
        values = kernel_K(z, a, b, 4, Tolerances(1e-14, 1e-12))
        np.testing.assert_allclose(values, kernel_K_closed(z, a, b), rtol=1e-8)

    @pytest.mark.slow
    def test_d4_closed_form_at_random_points(self, rng):
        """Twenty random (z, a, b) with |a - b| kept away from the diagonal."""
        lam = rng.uniform(0.0, 4.0, 20)
        a = rng.uniform(-1.5, 1.5, 20)
        b = a + rng.choice([-1.0, 1.0], 20) * rng.uniform(0.05, 1.5, 20)
        for lam_k, a_k, b_k in zip(lam, a, b):
            z = 2j * math.pi * lam_k
            value = kernel_K(z, a_k, b_k, 4, Tolerances(1e-14, 1e-12))
            assert value == pytest.approx(kernel_K_closed(z, a_k, b_k), rel=1e-7)

    def test_closed_form_limit(self):
        """At z = -1/2 the closed form uses its logarithmic limit."""
        a, b = 0.3, -0.2
        near = kernel_K_closed(-0.5 + 1e-8, a, b)
        assert kernel_K_closed(-0.5, a, b) == pytest.approx(near, rel=1e-6)

    def test_symmetric(self):
        z = 2j * math.pi * 0.4
        assert kernel_K(z, 0.3, -0.2, 3) == pytest.approx(kernel_K(z, -0.2, 0.3, 3), rel=1e-9)

    def test_coincident(self):
        with pytest.raises(CoincidentArguments):
            kernel_K(0.0, 0.5, 0.5, 3)
        with pytest.raises(CoincidentArguments):
            kernel_K_closed(0.0, 0.5, 0.5 + 1e-9)

    def test_needs_d3(self):
        with pytest.raises(BadParam):
            kernel_K(0.0, 0.5, 0.0, 2)

    def test_slice_table(self):
        frame = kernel_slice_table(0.5j, np.array([0.1, 0.4]), -0.3, 4)
        assert list(frame.columns) == ["a", "b", "re", "im"]
        np.testing.assert_allclose(
            frame["re"] + 1j * frame["im"],
            kernel_K_closed(0.5j, np.array([0.1, 0.4]), -0.3),
            rtol=1e-8,
        )

    def test_sphere_factor(self):
        assert sphere_factor(3) == pytest.approx(2.0)
        assert sphere_factor(4) == pytest.approx(2.0 * math.pi)
        with pytest.raises(BadParam):
            sphere_factor(2)


class TestRPhiRoutes:
    """Independent routes to R_phi(lambda) must agree."""

    def test_no_support_box(self):
        with pytest.raises(RegionResolutionError):
            r_phi_direct(object(), 0.0, 3)

    def test_growing_rate_rejected(self, phi_t1):
        """A complementary parameter beyond (d-1)/2 has no convergent integral."""
        with pytest.raises(BadParam, match="R_phi needs"):
            r_phi_direct(phi_t1, 0.5j, 2)

    def test_unknown_method(self, phi_t1):
        with pytest.raises(BadParam, match="method"):
            r_phi_kernel(phi_t1, 0.0, 3, method="series")

    @pytest.mark.slow
    @pytest.mark.parametrize("name", ["phi_T1", "product_bump", "tilted"])
    def test_d2_direct_against_decomposition(self, fixtures, name):
        phi = fixtures[name]
        lam = np.array([0.0, 0.4, 1.5])
        direct = r_phi_direct(phi, lam, 2, ROUTE_TOL)
        closed = r_phi_closed_d2(phi, lam, ROUTE_TOL).total
        assert _scaled_err(direct, closed) < 1e-6

    @pytest.mark.slow
    def test_d2_parts_match(self, fixtures):
        """The three regions of the direct integral map onto c1, c2 and c3."""
        phi = fixtures["separated"]
        direct = r_phi_direct_parts(phi, 0.3, ROUTE_TOL)
        closed = r_phi_closed_d2(phi, 0.3, ROUTE_TOL)
        scale = abs(closed.total)
        for mine, theirs in zip(direct, closed):
            assert abs(mine - theirs) < 1e-6 * scale

    @pytest.mark.slow
    @pytest.mark.parametrize("d", [3, 4, 5])
    def test_direct_against_slices(self, fixtures, d):
        phi = fixtures["phi_T1"]
        lam = np.array([0.0, 0.5, 2.0])
        direct = r_phi_direct(phi, lam, d, ROUTE_TOL)
        slices = r_phi_kernel(phi, lam, d, tolerances=ROUTE_TOL)
        assert _scaled_err(direct, slices) < 1e-6

    @pytest.mark.slow
    def test_kernel_route(self, fixtures):
        """Pointwise K_z against the slice route at small lambda."""
        phi = fixtures["separated"]
        slices = r_phi_kernel(phi, 0.2, 4, tolerances=ROUTE_TOL)
        kernel = r_phi_kernel(phi, 0.2, 4, method="kernel", tolerances=ROUTE_TOL)
        assert _scaled_err(kernel, slices) < 1e-6

    @pytest.mark.slow
    def test_transform_of_f_T(self, psi):
        """R_phi for phi_T is the sphere factor times the transform of f_T."""
        lam = np.array([0.0, 0.7])
        transform = f_T_transform(psi, 2.0, lam, 4, ROUTE_TOL)
        direct = r_phi_direct(PhiT(2.0, psi), lam, 4, ROUTE_TOL)
        assert _scaled_err(sphere_factor(4) * transform, direct) < 1e-6

    @pytest.mark.slow
    @pytest.mark.parametrize("d", [3, 4])
    @pytest.mark.parametrize(
        "name", ["phi_T1", "phi_T2", "product_bump", "separated", "tilted"]
    )
    def test_battery_at_default_tolerances(self, fixtures, name, d):
        """Direct and slice routes agree across the fixture battery up to lambda 16."""
        phi = fixtures[name]
        lam = np.array([0.0, 1.0, 4.0, 16.0])
        direct = np.atleast_1d(r_phi_direct(phi, lam, d))
        slices = np.atleast_1d(r_phi_kernel(phi, lam, d))
        scale = np.max(np.abs(slices))
        assert np.max(np.abs(direct - slices)) < 1e-5 * scale


class TestFT:
    """Test f_T and its derivative."""

    def test_zero_below_support(self, psi):
        assert f_T(psi, 1.0, -5.0, 4) == 0.0

    def test_bad_coordinates(self, psi):
        with pytest.raises(BadParam, match="coordinates"):
            f_T(psi, 1.0, 0.0, 4, coordinates="polar")

    def test_non_finite_t(self, psi):
        with pytest.raises(BadParam, match="finite"):
            f_T(psi, 1.0, float("nan"), 4)

    def test_positive_inside(self, psi):
        assert f_T(psi, 1.0, 0.0, 4) > 0

    @pytest.mark.slow
    @pytest.mark.parametrize("d", [4, 5])
    def test_coordinates_agree(self, psi, d):
        t = np.array([-0.5, 0.3, 1.0])
        slices = f_T(psi, 1.0, t, d, ROUTE_TOL)
        rotated = f_T(psi, 1.0, t, d, ROUTE_TOL, coordinates="rotated")
        assert _scaled_err(rotated, slices) < 1e-6

    @pytest.mark.slow
    def test_derivative_against_differences(self, psi, tight):
        t = np.array([-0.8, 0.0, 0.6])
        h = 1e-4
        formula = f_T_prime(psi, 1.0, t, 4, tight)
        fd = (f_T(psi, 1.0, t + h, 4, tight) - f_T(psi, 1.0, t - h, 4, tight)) / (2 * h)
        assert np.max(np.abs(formula - fd)) < 1e-5

    @pytest.mark.slow
    @pytest.mark.parametrize("d", [4, 5])
    def test_boundary_terms(self, psi, d):
        """Differentiating under the integral plus edge terms gives the same f_T'."""
        t = np.array([-0.3, 0.5])
        terms = f_T_prime_terms(psi, 1.0, t, d, ROUTE_TOL)
        assert isinstance(terms, DerivativeTerms)
        expected = f_T_prime(psi, 1.0, t, d, ROUTE_TOL)
        assert _scaled_err(terms.total, expected) < 1e-5

    def test_boundary_terms_need_d4(self, psi):
        with pytest.raises(BadParam, match="d >= 4"):
            f_T_prime_terms(psi, 1.0, 0.0, 3)

    @pytest.mark.slow
    def test_monte_carlo(self, psi):
        """Uniform sampling agrees with quadrature within four standard errors."""
        estimate = f_T_monte_carlo(psi, 1.0, 0.3, 4, n_samples=400_000, seed=7)
        exact = f_T(psi, 1.0, 0.3, 4, ROUTE_TOL)
        assert estimate.n_samples == 400_000
        assert estimate.seed == 7
        assert abs(estimate.mean - exact) <= 4.0 * estimate.stderr + 1e-12

    def test_monte_carlo_is_reproducible(self, psi):
        first = f_T_monte_carlo(psi, 1.0, 0.3, 5, n_samples=5000, seed=3)
        second = f_T_monte_carlo(psi, 1.0, 0.3, 5, n_samples=5000, seed=3)
        assert first == second

    def test_monte_carlo_needs_samples(self, psi):
        with pytest.raises(BadParam, match="n_samples"):
            f_T_monte_carlo(psi, 1.0, 0.0, 4, n_samples=1)

    def test_trace_table(self, psi):
        frame = f_T_trace_table(psi, 1.0, np.array([-5.0, -4.0]), 4)
        assert list(frame.columns) == ["t", "f", "f_prime"]
        np.testing.assert_array_equal(frame["f"], 0.0)

    @pytest.mark.slow
    @pytest.mark.parametrize("T", [1.0, 8.0])
    def test_derivative_on_a_fine_grid(self, psi, T):
        """f_T' against central differences at d = 3 over 41 points of [-3, 3]."""
        t = np.linspace(-3.0, 3.0, 41)
        h = 1e-4
        formula = f_T_prime(psi, T, t, 3)
        fd = (f_T(psi, T, t + h, 3) - f_T(psi, T, t - h, 3)) / (2 * h)
        assert np.max(np.abs(formula - fd)) < 1e-5

    @pytest.mark.slow
    def test_sup_stable_in_T(self, psi):
        """sup |f_T| settles as T grows instead of drifting."""
        t = np.linspace(-2.0, 2.0, 41)
        sups = [np.max(np.abs(f_T(psi, T, t, 3))) for T in (1.0, 4.0, 16.0, 64.0)]
        assert (max(sups) - min(sups)) / max(sups) < 1e-2


class _CountingPhi:
    """Wraps a two-variable function and records the largest array it is called with."""

    def __init__(self, phi):
        self.phi = phi
        self.largest = 0

    def support_box(self):
        return self.phi.support_box()

    def __call__(self, a, b):
        self.largest = max(self.largest, np.broadcast(a, b).size)
        return self.phi(a, b)


class TestBoundedEvaluation:
    """Nested amplitude integrals keep each integrand call bounded in size."""

    @pytest.mark.slow
    def test_slice_amplitude_many_nodes(self, phi_t1):
        counting = _CountingPhi(phi_t1)
        t = np.linspace(-1.0, 1.5, 200)
        values = slice_amplitude(counting, 3, Tolerances(1e-8, 1e-6))(t)
        assert values.shape == t.shape
        assert counting.largest <= MAX_CALL_VALUES

    def test_node_by_node_matches_single(self, phi_t1):
        amplitude = slice_amplitude(phi_t1, 4, Tolerances(1e-10, 1e-8))
        t = np.array([[-0.4, 0.2], [0.7, 1.1]])
        values = amplitude(t)
        assert values.shape == (2, 2)
        for index, t_k in np.ndenumerate(t):
            assert values[index] == pytest.approx(amplitude(np.array([t_k]))[0], rel=1e-12)

    @pytest.mark.slow
    def test_direct_d3_high_lambda(self, phi_t1):
        """The polar route at lambda 16 finishes with bounded calls."""
        counting = _CountingPhi(phi_t1)
        value = r_phi_direct(counting, 16.0, 3)
        assert np.isfinite(value)
        assert counting.largest <= MAX_CALL_VALUES

    @pytest.mark.slow
    def test_rotated_f_T_many_points(self, psi):
        t = np.linspace(-1.0, 1.0, 60)
        rotated = f_T(psi, 2.0, t, 4, coordinates="rotated")
        slices = f_T(psi, 2.0, t, 4)
        assert _scaled_err(rotated, slices) < 1e-5
