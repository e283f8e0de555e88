"""
Tests for sampled functions, the admissible bump psi and phi_T.
"""

import math

import numpy as np
import pytest
from scipy import integrate

from geodesum.exceptions import BadParam, GridResolution, NonFinite
from geodesum.quadcore import Quadrature1DSpec, integrate_1d
from geodesum.testfn import (
    PhiT,
    RotatedProduct,
    SampledFunction,
    SeparableProduct,
    base_bump,
    build_psi,
    phi_T_eval,
    psi_hat,
    psi_hat_table,
    psi_table,
    self_convolve,
)


def _bump(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape)
    inner = np.abs(x) < 1
    out[inner] = np.exp(1.0 - 1.0 / (1.0 - x[inner] ** 2))
    return out


class TestSampledFunction:
    """Test construction and evaluation of sampled functions."""

    def test_too_few_points(self):
        with pytest.raises(GridResolution, match="at least 64"):
            SampledFunction(-1.0, 1.0, np.zeros(10))

    def test_must_vanish_at_ends(self):
        with pytest.raises(BadParam, match="vanish"):
            SampledFunction(-1.0, 1.0, np.ones(100))

    def test_reversed_support(self):
        with pytest.raises(BadParam, match="lo < hi"):
            SampledFunction(1.0, -1.0, np.zeros(100))

    def test_nan(self):
        values = np.zeros(100)
        values[50] = np.nan
        with pytest.raises(NonFinite):
            SampledFunction(-1.0, 1.0, values)

    def test_values_are_read_only(self):
        f = base_bump(1.0)
        with pytest.raises(ValueError):
            f.values[0] = 1.0

    def test_zero_outside_support(self):
        f = base_bump(0.5)
        np.testing.assert_array_equal(f(np.array([-2.0, -0.5001, 0.6, np.inf])), 0.0)

    def test_interpolation(self):
        """Order-5 interpolation is accurate between grid points."""
        f = base_bump(1.0)
        x = np.linspace(-0.8, 0.8, 101) + 1e-4
        np.testing.assert_allclose(f(x), _bump(x), atol=1e-9)

    def test_scalar_call(self):
        assert isinstance(base_bump(1.0)(0.1), float)

    def test_derivative(self):
        """Sixth-order differences match the analytic derivative."""
        f = base_bump(1.0)
        x = f.grid
        inner = np.abs(x) < 0.8
        exact = _bump(x[inner]) * (-2.0 * x[inner] / (1.0 - x[inner] ** 2) ** 2)
        np.testing.assert_allclose(f.derivative().values[inner], exact, atol=1e-8)

    def test_integral(self):
        """The trapezoid integral matches adaptive quadrature of the bump."""
        expected, _ = integrate.quad(_bump, -1.0, 1.0, epsabs=1e-14, epsrel=1e-13)
        assert base_bump(1.0).integral() == pytest.approx(expected, rel=1e-10)

    def test_fourier(self):
        """fourier is the transform with the 2 pi convention."""
        xi = 0.7
        expected, _ = integrate.quad(
            lambda x: _bump(x) * math.cos(2 * math.pi * x * xi),
            -1.0,
            1.0,
            epsabs=1e-14,
            epsrel=1e-13,
        )
        value = base_bump(1.0).fourier(xi)
        assert value.real == pytest.approx(expected, rel=1e-9)
        assert abs(value.imag) < 1e-12

    def test_fourier_at_zero_is_integral(self):
        f = base_bump(0.5).shifted(0.2)
        assert f.fourier(0.0) == pytest.approx(f.integral(), rel=1e-13)

    def test_fourier_shape(self):
        assert base_bump(1.0).fourier(np.zeros((2, 300))).shape == (2, 300)

    def test_shifted(self):
        f = base_bump(0.5)
        g = f.shifted(0.3)
        assert g.support == pytest.approx((-0.2, 0.8))
        assert g(0.3) == pytest.approx(f(0.0), rel=1e-12)

    def test_scaled(self):
        """x -> amplitude * f(factor * x)."""
        f = base_bump(1.0)
        g = f.scaled(2.0, amplitude=3.0)
        assert g.support == (-0.5, 0.5)
        assert g(0.25) == pytest.approx(3.0 * f(0.5), rel=1e-12)

    def test_scaled_rejects_non_positive(self):
        with pytest.raises(BadParam, match="positive"):
            base_bump(1.0).scaled(0.0)

    def test_reflected(self):
        f = base_bump(0.5).shifted(0.2)
        g = f.reflected()
        assert g.support == pytest.approx((-0.7, 0.3))
        grid = f.grid[::7]
        np.testing.assert_allclose(g(-grid), f(grid), atol=1e-12)

    def test_multiply(self):
        f = base_bump(1.0)
        assert (2.5 * f)(0.0) == pytest.approx(2.5)
        assert (f * 2.5)(0.0) == pytest.approx(2.5)

    def test_to_frame(self):
        frame = base_bump(1.0).to_frame()
        assert list(frame.columns) == ["x", "value"]
        assert len(frame) == 1025


class TestBaseBump:
    """Test the standard cutoff bump."""

    def test_peak(self):
        assert base_bump(1.0)(0.0) == pytest.approx(1.0, abs=1e-15)

    def test_half_way(self):
        """exp(1 - 4/3) at half the half width."""
        assert base_bump(0.25)(0.125) == pytest.approx(0.7165313105737893, rel=1e-12)

    @pytest.mark.parametrize("h", [0.0, -0.5, 1.5, float("nan")])
    def test_bad_half_width(self, h):
        with pytest.raises(BadParam, match="half_width"):
            base_bump(h)


class TestSelfConvolve:
    """Test repeated self-convolution."""

    def test_support_and_mass(self):
        """Mass multiplies and the support widens."""
        f = base_bump(0.25)
        g = self_convolve(f, 2)
        assert g.support == pytest.approx((-0.75, 0.75))
        assert g.integral() == pytest.approx(f.integral() ** 3, rel=1e-10)

    def test_transform_is_power(self):
        f = base_bump(0.25)
        g = self_convolve(f, 3)
        xi = np.array([0.0, 0.4, 1.3])
        np.testing.assert_allclose(g.fourier(xi), f.fourier(xi) ** 4, rtol=1e-9, atol=1e-14)

    def test_times_must_be_positive(self):
        with pytest.raises(BadParam, match="times"):
            self_convolve(base_bump(0.25), 0)

    def test_too_large(self):
        with pytest.raises(GridResolution, match="limit"):
            self_convolve(base_bump(0.25), 5000)


class TestBuildPsi:
    """Test construction and certification of psi."""

    def test_support(self, psi):
        assert psi.support == pytest.approx((-1.0, 1.0))

    def test_certificate(self, psi):
        cert = psi.certificate
        assert cert.min_psi >= 0
        assert cert.min_psi_hat_unit >= 1
        assert cert.min_psi_hat_grid >= -1e-10
        assert set(cert.to_dict()) == {"min_psi", "min_psi_hat_unit", "min_psi_hat_grid"}

    def test_known_values(self, psi):
        """Reference values of the default construction."""
        assert psi.constant == pytest.approx(269.6, rel=1e-3)
        assert psi(0.0) == pytest.approx(4.357, rel=1e-3)
        assert psi_hat(psi, 0.0).real == pytest.approx(2.23455, rel=1e-4)

    def test_even(self, psi):
        x = np.linspace(0.0, 1.0, 77)
        np.testing.assert_allclose(psi(x), psi(-x), rtol=1e-10, atol=1e-11)

    def test_non_negative(self, psi):
        assert np.all(psi(np.linspace(-1.2, 1.2, 501)) >= -1e-12)

    def test_psi_hat_at_least_one_on_unit_interval(self, psi):
        values = psi_hat(psi, np.linspace(-1.0, 1.0, 201))
        assert np.all(values.real >= 1.0 - 1e-12)
        np.testing.assert_allclose(values.imag, 0.0, atol=1e-12)

    def test_psi_hat_against_quad(self, psi):
        """The cached product form matches direct quadrature of psi."""
        xi = 0.6
        expected, _ = integrate.quad(
            lambda x: psi(x) * math.cos(2 * math.pi * x * xi),
            -1.0,
            1.0,
            limit=400,
            epsabs=1e-12,
            epsrel=1e-10,
        )
        assert psi_hat(psi, xi).real == pytest.approx(expected, rel=1e-6)

    def test_mass_from_quadrature(self, psi):
        """psi_hat(0) is the integral of psi."""
        result = integrate_1d(psi, Quadrature1DSpec((-1.0, 1.0), abs_tol=1e-9, rel_tol=1e-9))
        assert result.value.real == pytest.approx(psi_hat(psi, 0.0).real, rel=1e-7)

    def test_complex_argument(self, psi):
        """Complex xi uses the direct sum and agrees with the real branch."""
        near = psi_hat(psi, 0.3 + 1e-12j)
        assert near == pytest.approx(psi_hat(psi, 0.3), rel=1e-9)
        assert isinstance(psi_hat(psi, 0.3 + 0.2j), complex)

    def test_psi_hat_grows_off_axis(self, psi):
        """|psi_hat| grows like exp(2 pi |Im xi|) in the imaginary direction."""
        assert abs(psi_hat(psi, 1.0j)) > abs(psi_hat(psi, 0.0))

    def test_prime(self, psi):
        x = np.array([-0.5, 0.3])
        h = 1e-5
        fd = (psi(x + h) - psi(x - h)) / (2 * h)
        np.testing.assert_allclose(psi.prime(x), fd, rtol=1e-5)

    def test_scale_target(self):
        with pytest.raises(BadParam, match="scale_target"):
            build_psi(scale_target=0.5)

    def test_larger_target(self):
        psi2 = build_psi(scale_target=2.0)
        assert psi2.certificate.min_psi_hat_unit >= 2.0

    def test_tables(self, psi):
        assert list(psi_table(psi).columns) == ["x", "psi"]
        table = psi_hat_table(psi, np.linspace(-2.0, 2.0, 5))
        assert list(table.columns) == ["xi", "psi_hat_re", "psi_hat_im"]
        assert len(table) == 5


class TestPhiT:
    """Test the two-variable family phi_T."""

    @pytest.mark.parametrize("T", [0.0, -1.0, float("inf")])
    def test_bad_T(self, psi, T):
        with pytest.raises(BadParam, match="T must be positive"):
            PhiT(T, psi)

    def test_diagonal_value(self, psi, phi_t4):
        assert phi_t4(0.0, 0.0) == pytest.approx(4.0 * psi(0.0) ** 2, rel=1e-12)

    def test_eval_alias(self, phi_t4):
        assert phi_T_eval(phi_t4, 0.1, -0.05) == phi_t4(0.1, -0.05)

    def test_symmetric(self, phi_t1, rng):
        a, b = rng.uniform(-1.5, 1.5, size=(2, 50))
        np.testing.assert_allclose(phi_t1(a, b), phi_t1(b, a), rtol=1e-10, atol=1e-10)

    def test_rotated_form(self, phi_t4, rng):
        """The rotated product reproduces phi_T."""
        a, b = rng.uniform(-1.2, 1.2, size=(2, 50))
        np.testing.assert_allclose(phi_t4.rotated(a, b), phi_t4(a, b), rtol=1e-10, atol=1e-11)

    def test_support_box(self, phi_t4):
        (a_lo, a_hi), (b_lo, b_hi) = phi_t4.support_box()
        assert (a_lo, a_hi) == pytest.approx((-1.125, 1.125))
        assert (b_lo, b_hi) == pytest.approx((-1.125, 1.125))
        assert phi_t4(1.2, 1.0) == 0.0

    def test_b_limits(self, phi_t4):
        """phi_T vanishes outside the inner limits."""
        a = np.array([-0.9, 0.0, 0.6])
        lower, upper = phi_t4.b_limits(a)
        assert np.all(lower <= upper)
        np.testing.assert_array_equal(phi_t4(a, lower - 1e-3), 0.0)
        np.testing.assert_array_equal(phi_t4(a, upper + 1e-3), 0.0)
        assert np.all(phi_t4(a, 0.5 * (lower + upper)) > 0)

    def test_transposed(self, phi_t4):
        a, b = np.array([0.1, -0.3]), np.array([0.2, -0.1])
        np.testing.assert_allclose(phi_t4.transposed()(a, b), phi_t4(b, a), atol=1e-8)


class TestFixtures:
    """Test the battery of two-variable fixtures."""

    def test_keys(self, fixtures):
        assert set(fixtures) == {"phi_T1", "phi_T2", "product_bump", "separated", "tilted"}

    @pytest.mark.parametrize("name", ["product_bump", "separated", "tilted"])
    def test_transposed(self, fixtures, name):
        phi = fixtures[name]
        (a_lo, a_hi), (b_lo, b_hi) = phi.support_box()
        a = np.linspace(a_lo, a_hi, 9)[:, None]
        b = np.linspace(b_lo, b_hi, 9)[None, :]
        np.testing.assert_allclose(phi.transposed()(b, a), phi(a, b), atol=1e-8)

    def test_separable_limits(self, fixtures):
        phi = fixtures["separated"]
        assert isinstance(phi, SeparableProduct)
        lower, upper = phi.b_limits(np.zeros(3))
        np.testing.assert_allclose(lower, -0.9)
        np.testing.assert_allclose(upper, -0.3)

    def test_rotated_limits_are_ordered(self, fixtures):
        phi = fixtures["tilted"]
        assert isinstance(phi, RotatedProduct)
        lower, upper = phi.b_limits(np.linspace(-2.0, 2.0, 41))
        assert np.all(lower <= upper)
