"""
Tests for both sides of the summation formulae, the report and the
factorized d = 2 inner integral.
"""

import json
import math

import numpy as np
import pytest

from geodesum.config import Tolerances
from geodesum.exceptions import BadParam, DimensionMismatch
from geodesum.kernels import beta_fn, r_phi_closed_d2, r_phi_direct, r_phi_kernel
from geodesum.spectra import SpectralDataset, SpectralEntry
from geodesum.summation import (
    FactorizationCheck,
    GrowthFactor,
    SummationReport,
    TermBreakdown,
    factorization_check,
    growth_factor,
    lhs_sum,
    rhs_sum_d2,
    rhs_sum_general,
    sumcheck,
)
from geodesum.testfn import psi_hat
from geodesum.transforms import CoefficientSequence, ModelParams, lhs_weight

ROUTE_TOL = Tolerances(1e-10, 1e-9)


@pytest.fixture
def params():
    return ModelParams(2, 0.3, 1.0)


@pytest.fixture
def empty_d2():
    return SpectralDataset(2, (), "empty")


class TestLhsSum:
    """Test the spectral-side sum over k."""

    def test_single_coefficient(self, phi_t1, params):
        """A lone a_0 gives |a_0|**2 times the k = 0 weight."""
        coeffs = CoefficientSequence(0, 0, [2.0])
        result = lhs_sum(coeffs, phi_t1, params)
        assert result.value == pytest.approx(4.0 * lhs_weight(phi_t1, params, 0), rel=1e-14)
        np.testing.assert_array_equal(result.labels, [0])

    def test_zero_coefficients(self, phi_t1, params):
        result = lhs_sum(CoefficientSequence.zeros(-3, 3), phi_t1, params)
        assert result.value == 0j
        assert result.truncation_bound == 0.0

    def test_matches_plain_sum(self, gaussian_coeffs, phi_t1, params):
        ks = gaussian_coeffs.ks
        expected = sum(
            abs(gaussian_coeffs[k]) ** 2 * lhs_weight(phi_t1, params, int(k)) for k in ks
        )
        result = lhs_sum(gaussian_coeffs, phi_t1, params)
        assert result.value == pytest.approx(expected, rel=1e-12)

    def test_summation_order(self, gaussian_coeffs, phi_t1, params):
        result = lhs_sum(gaussian_coeffs, phi_t1, params)
        np.testing.assert_array_equal(result.labels[:5], [0, -1, 1, -2, 2])
        assert result.terms.shape == result.weights.shape == (13,)

    def test_truncation_bound_scales_with_edge_mass(self, gaussian_coeffs, phi_t1, params):
        """The tail estimate is the largest edge |a_k|**2 times the outside weights."""
        flat = CoefficientSequence(-6, 6, np.ones(13), 0.3, 1.0)
        flat_bound = lhs_sum(flat, phi_t1, params).truncation_bound
        bound = lhs_sum(gaussian_coeffs, phi_t1, params).truncation_bound
        assert flat_bound > 0.0
        assert bound == pytest.approx(math.exp(-18.0) * flat_bound, rel=1e-12)

    @pytest.mark.slow
    def test_quadrature_weights(self, fixtures, params):
        """A non-PhiT function uses the quadrature weights."""
        coeffs = CoefficientSequence(-1, 1, [0.5, 1.0, 0.5])
        result = lhs_sum(coeffs, fixtures["product_bump"], params, tolerances=ROUTE_TOL)
        expected = lhs_weight(
            fixtures["product_bump"], params, 0, method="quadrature", tolerances=ROUTE_TOL
        )
        assert result.weights[0] == pytest.approx(expected, rel=1e-7)

    def test_to_dict(self, gaussian_coeffs, phi_t1, params):
        data = lhs_sum(gaussian_coeffs, phi_t1, params).to_dict()
        assert data["labels"][:3] == [0, -1, 1]
        assert len(data["value"]) == 2
        assert data["dropped"] == 0


class TestRhsSum:
    """Test the geometric-side sums over the spectrum."""

    def test_empty_dataset(self, empty_d2, phi_t1):
        result = rhs_sum_d2(empty_d2, phi_t1)
        assert isinstance(result, TermBreakdown)
        assert result.value == 0j
        assert result.labels.shape == (0,)

    def test_empty_general(self, phi_t1):
        assert rhs_sum_general(SpectralDataset(3, ()), phi_t1).value == 0j

    def test_d2_needs_d2_data(self, phi_t1):
        with pytest.raises(DimensionMismatch):
            rhs_sum_d2(SpectralDataset(3, ()), phi_t1)

    def test_general_dimension_mismatch(self, phi_t1):
        with pytest.raises(DimensionMismatch):
            rhs_sum_general(SpectralDataset(3, ()), phi_t1, d=4)

    def test_general_needs_d3(self, empty_d2, phi_t1):
        with pytest.raises(BadParam, match="d >= 3"):
            rhs_sum_general(empty_d2, phi_t1)

    @pytest.mark.slow
    def test_d2_against_direct_integral(self, small_dataset, phi_t1):
        """2 sum c a0 beta R_phi with R_phi from the (x, t) integral."""
        result = rhs_sum_d2(small_dataset, phi_t1, ROUTE_TOL)
        lam = small_dataset.lambdas
        direct = np.asarray(r_phi_direct(phi_t1, lam, 2, ROUTE_TOL))
        expected = 2.0 * np.sum(small_dataset.weights * np.asarray(beta_fn(lam, 2)) * direct)
        assert abs(result.value - expected) <= 1e-6 * max(abs(expected), 1e-12)
        np.testing.assert_allclose(result.labels, lam)
        assert math.isfinite(result.truncation_bound) and result.truncation_bound >= 0

    @pytest.mark.slow
    def test_general_d3(self, phi_t1):
        data = SpectralDataset(3, (SpectralEntry(0.4, 1.0, 1.0), SpectralEntry(0.9, 0.5j, 2.0)))
        result = rhs_sum_general(data, phi_t1, tolerances=ROUTE_TOL)
        lam = data.lambdas
        expected = np.sum(
            data.weights
            * np.asarray(beta_fn(lam, 3))
            * np.asarray(r_phi_kernel(phi_t1, lam, 3, tolerances=ROUTE_TOL))
        )
        assert result.value == pytest.approx(expected, rel=1e-7)


class TestSumcheck:
    """Test the end-to-end report."""

    def test_dimension_mismatch(self, gaussian_coeffs, phi_t1):
        with pytest.raises(DimensionMismatch, match="d=3"):
            sumcheck(gaussian_coeffs, SpectralDataset(3, ()), phi_t1, ModelParams(2, 0.3, 1.0))

    def test_report_without_spectrum(self, gaussian_coeffs, empty_d2, phi_t1, params):
        """With no spectral data the residual is the whole left side."""
        report = sumcheck(gaussian_coeffs, empty_d2, phi_t1, params, run_config={"seed": 0})
        assert isinstance(report, SummationReport)
        assert report.rhs == 0j
        assert report.residual_abs == pytest.approx(abs(report.lhs))
        assert report.residual_rel == pytest.approx(1.0)
        assert set(report.truncation_bounds) == {"lhs", "rhs"}

    def test_homogeneity(self, gaussian_coeffs, empty_d2, phi_t1, params):
        """Scaling a_k by s scales the left side by |s|**2."""
        report = sumcheck(gaussian_coeffs, empty_d2, phi_t1, params)
        assert report.homogeneity["lhs_rel_err"] <= 1e-12
        assert report.homogeneity["rhs_rel_err"] == 0.0

    def test_json(self, gaussian_coeffs, empty_d2, phi_t1, params):
        report = sumcheck(gaussian_coeffs, empty_d2, phi_t1, params, run_config={"seed": 5})
        data = json.loads(report.to_json())
        assert data["params"]["d"] == 2
        assert data["run_config"] == {"seed": 5}
        assert data["lhs"][0] == pytest.approx(report.lhs.real)
        assert set(data) >= {"residual_abs", "residual_rel", "homogeneity", "lhs_terms"}

    @pytest.mark.slow
    def test_full_d2(self, gaussian_coeffs, small_dataset, phi_t1, params):
        report = sumcheck(gaussian_coeffs, small_dataset, phi_t1, params, ROUTE_TOL)
        assert report.homogeneity["lhs_rel_err"] <= 1e-12
        assert report.homogeneity["rhs_rel_err"] <= 1e-12
        assert len(report.rhs_terms.terms) == 3


class TestGrowthFactor:
    """Test the factorized d = 2 inner integral for phi_T."""

    def test_validation(self, psi):
        with pytest.raises(BadParam, match="d=2"):
            growth_factor(psi, 0.3, 2.0, d=3)
        with pytest.raises(BadParam, match="T must be positive"):
            growth_factor(psi, 0.3, 0.0)

    def test_cosh_limit(self, psi):
        """For large T the cosh factor tends to 2**(z - 1/2) psi_hat(0)."""
        lam = 0.4
        z = 2j * math.pi * lam
        factors = growth_factor(psi, lam, 1e4)
        expected = 2.0 ** (z - 0.5) * psi_hat(psi, 0.0)
        assert factors.cosh_part == pytest.approx(expected, rel=1e-6)

    def test_weight_factors(self, psi):
        factors = growth_factor(psi, 0.25, 3.0)
        assert isinstance(factors, GrowthFactor)
        assert factors.weight_factor == pytest.approx(psi_hat(psi, -0.25 - 3.0 / (4j * math.pi)))
        assert factors.alt_value == pytest.approx(
            factors.alt_weight_factor * (factors.cosh_part + factors.sinh_part)
        )

    def test_vectorized(self, psi):
        lam = np.array([0.0, 0.5])
        factors = growth_factor(psi, lam, 2.0)
        assert np.shape(factors.value) == (2,)
        single = growth_factor(psi, 0.5, 2.0)
        assert factors.value[1] == pytest.approx(single.value, rel=1e-8)

    def test_sqrt_growth(self, psi):
        """|value| grows like T**(1/2)."""
        T = np.geomspace(256.0, 4096.0, 5)
        values = np.array([abs(growth_factor(psi, 0.3, float(t)).value) for t in T])
        slope = np.polyfit(np.log(T), np.log(values), 1)[0]
        assert slope == pytest.approx(0.5, abs=0.05)

    def test_sinh_part_slope(self, psi):
        T = np.geomspace(16.0, 1024.0, 7)
        parts = np.array([abs(growth_factor(psi, 0.3, float(t)).sinh_part) for t in T])
        slope = np.polyfit(np.log(T), np.log(parts), 1)[0]
        assert slope == pytest.approx(0.5, abs=0.05)

    def test_rapid_decay_in_lambda(self, psi):
        """Past lambda = 8 the value sits more than six orders below lambda = 0."""
        values = np.abs(growth_factor(psi, np.array([0.0, 8.0, 12.0, 16.0]), 2.0).value)
        assert np.all(values[1:] < 1e-6 * values[0])

    @pytest.mark.slow
    def test_matches_two_dimensional_integral(self, psi):
        """The factorized form reproduces c1 + c2 + c3 for phi_T."""
        check = factorization_check(psi, 0.3, 2.0, ROUTE_TOL)
        assert isinstance(check, FactorizationCheck)
        assert check.match == "three_halves"
        assert check.rel_err_three_halves < 1e-6
        assert set(check.to_dict()) >= {"direct", "match"}

    @pytest.mark.slow
    def test_direct_value(self, psi, phi_t4):
        closed = r_phi_closed_d2(phi_t4, 0.6, ROUTE_TOL).total
        assert growth_factor(psi, 0.6, 4.0, tolerances=ROUTE_TOL).value == pytest.approx(
            closed, rel=1e-6
        )
