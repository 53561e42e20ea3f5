"""
Tests for the numerical checks of the integral/sum inequality and of the
series coefficients behind the sufficient conditions.
"""

import math
import os
import sys
from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

# Add src to path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "../src")))

from nbmc import config_base as config
from nbmc.appendix_verify import (
    Family,
    Sampling,
    boundary_witness,
    coefficient_x,
    coefficient_x_prime,
    coefficients_nonnegative_sweep,
    direct_x,
    direct_x_prime,
    lemma1_check,
    lemma1_lhs,
    lemma1_n_star_max,
    lemma1_rhs,
    lemma1_sweep,
    nu_bound,
    x1_closed_form,
    x_series,
)
from nbmc.exceptions import ParameterError
from nbmc.specfun import log_factorial


def quadrature_lhs(N: int, p: float, n_star: int) -> float:
    """Integral of x^(N-1) e^(-p x) over [N-1, n_star] by 40-digit quadrature."""
    with mpmath.workdps(40):
        peak = (N - 1) / p
        nodes = [N - 1, peak, n_star] if N - 1 < peak < n_star else [N - 1, n_star]
        return float(mpmath.quad(lambda x: x ** (N - 1) * mpmath.exp(-p * x), nodes))


def rational_rhs(N: int, p: Fraction, n_star: int) -> Fraction:
    total = Fraction(0)
    for n in range(N, n_star + 1):
        total += math.perm(n - 1, N - 1) * (1 - p) ** (n - N)
    return total


class TestLemmaSides:
    """Tests for the integral and sum sides of the inequality."""

    def test_lhs_empty_integral(self):
        """Test that the integral over an empty range is zero."""
        assert lemma1_lhs(10, 0.1, 9) == 0.0

    @pytest.mark.parametrize(("N", "p", "n_star"), [(3, 0.5, 6), (30, 0.01, 2000), (10, 0.2, 40)])
    def test_lhs_against_quadrature(self, N, p, n_star):
        """Test the closed-form integral against quadrature."""
        assert lemma1_lhs(N, p, n_star) == pytest.approx(quadrature_lhs(N, p, n_star), rel=1e-11)

    @settings(max_examples=25, deadline=None)
    @given(
        N=st.integers(min_value=3, max_value=40),
        p=st.floats(min_value=0.01, max_value=0.9),
        extra=st.integers(min_value=1, max_value=300),
    )
    def test_lhs_against_quadrature_random(self, N, p, extra):
        """Test random parameters against quadrature."""
        n_star = N - 1 + extra
        assert lemma1_lhs(N, p, n_star) == pytest.approx(quadrature_lhs(N, p, n_star), rel=1e-9)

    def test_rhs_single_term(self):
        """Test a sum with a single term."""
        assert lemma1_rhs(7, 0.3, 7) == pytest.approx(math.factorial(6), rel=1e-14)

    def test_rhs_small_example(self):
        """Test a hand-computed sum."""
        expected = rational_rhs(3, Fraction(1, 2), 6)
        assert expected == Fraction(21, 2)
        assert lemma1_rhs(3, 0.5, 6) == pytest.approx(float(expected), rel=1e-14)

    def test_rhs_against_rational(self):
        """Test a long sum against rational arithmetic."""
        expected = rational_rhs(8, Fraction(1, 10), 150)
        assert lemma1_rhs(8, 0.1, 150) == pytest.approx(float(expected), rel=1e-12)

    def test_rhs_empty_sum(self):
        """Test that an empty sum is zero."""
        assert lemma1_rhs(5, 0.2, 4) == 0.0

    def test_lhs_rejects_short_range(self):
        """Test that an upper end below N - 1 is rejected."""
        with pytest.raises(ParameterError):
            lemma1_lhs(5, 0.2, 3)


class TestLemmaCheck:
    """Tests for lemma1_check and lemma1_sweep."""

    def test_small_exhaustive(self):
        """Test a short range, checked at every n*."""
        # n*_max = floor((2.5 - sqrt(2.5)) / 0.1 + 0.5) = 9
        report = lemma1_check(3, 0.1)
        assert report.n_star_max == 9
        assert report.all_hold
        assert report.sampling is Sampling.EXHAUSTIVE
        assert report.points_checked == report.n_star_max - 3 + 1

    def test_thirty(self):
        """Test every point at N = 30, p = 0.1."""
        report = lemma1_check(30, 0.1)
        assert report.all_hold
        assert report.worst_relative_margin >= -config.LEMMA_TOLERANCE

    def test_vacuous(self):
        """Test a parameter pair with nothing to check."""
        assert lemma1_n_star_max(3, 0.9) < 3
        report = lemma1_check(3, 0.9)
        assert report.all_hold
        assert report.points_checked == 0
        assert report.worst_relative_margin is None
        assert lemma1_n_star_max(3, 0.5) == 2
        assert report.to_dict()["sampling"] == "vacuous"

    def test_subsampled(self, monkeypatch):
        """Test that large ranges are subsampled."""
        monkeypatch.setattr(config, "LEMMA_EXHAUSTIVE_LIMIT", 100)
        report = lemma1_check(10, 0.001)
        assert report.sampling is Sampling.SUBSAMPLED
        assert report.points_checked < report.n_star_max - 10 + 1
        assert report.all_hold

    def test_sweep_order(self):
        """Test that sweep reports come back in grid order."""
        reports = lemma1_sweep([3, 4], [0.3, 0.7])
        assert [(r.N, r.p) for r in reports] == [(3, 0.3), (3, 0.7), (4, 0.3), (4, 0.7)]

    @pytest.mark.slow
    def test_full_grid(self):
        """Test the default grid of N and p."""
        reports = lemma1_sweep(range(3, 51), config.DEFAULT_VERIFY_PS, workers=2)
        assert all(r.all_hold for r in reports)


class TestCoefficients:
    """Tests for the series coefficients x_j and x'_j."""

    @pytest.mark.parametrize("N", [3, 5, 10, 50])
    def test_x0_vanishes_at_bound(self, N):
        """Test that the constant coefficient is zero at the bound."""
        M = N - 1
        nu = nu_bound(N, Family.X)
        assert coefficient_x(N, nu, 0) == pytest.approx(0.0, abs=1e-12 * M)

    def test_x1_closed_form(self):
        """Test the linear coefficient against its closed form."""
        assert coefficient_x(3, 1.0, 1) == pytest.approx(x1_closed_form(2, 1.0), rel=1e-14)
        assert coefficient_x(3, 1.0, 1) == pytest.approx(-1 / 6, rel=1e-14)

    @pytest.mark.parametrize(("N", "nu"), [(5, 0.7), (12, 3.0), (40, 20.0)])
    def test_x1_closed_form_grid(self, N, nu):
        """Test the linear coefficient's closed form across a grid."""
        assert coefficient_x(N, nu, 1) == pytest.approx(x1_closed_form(N - 1, nu), rel=1e-12, abs=1e-12)

    def test_x_prime_small_example(self):
        """Test a hand-computed coefficient."""
        assert coefficient_x_prime(3, 1.0, 2) == pytest.approx(7 / 12, rel=1e-14)

    @pytest.mark.parametrize("N", [3, 8, 30])
    def test_x_prime0_nonnegative(self, N):
        """Test that the constant coefficient is nonnegative at the bound."""
        M = N - 0.5
        assert coefficient_x_prime(N, M - math.sqrt(M - 0.25), 0) >= -1e-12 * M

    def test_single_point(self):
        """Test a single coefficient at the bound."""
        assert coefficient_x(5, nu_bound(5, Family.X), 3) >= 0.0

    @pytest.mark.parametrize("coefficient", [coefficient_x, coefficient_x_prime])
    def test_diverges_at_zero(self, coefficient):
        """Test that coefficients blow up as nu goes to zero."""
        assert coefficient(10, 1e-8, 2) > 1e15

    def test_rejects_large_j(self):
        """Test that j at the exponent cap is rejected."""
        with pytest.raises(ParameterError):
            coefficient_x(5, 1.0, config.MAX_POWER_EXPONENT)

    def test_boundary_witness_is_past_bound(self):
        """Test that the witness point lies past the bound."""
        point = boundary_witness(10)
        assert point.nu > nu_bound(10, Family.X)
        assert point.j == 0


class TestCoefficientSweep:
    """Tests for coefficients_nonnegative_sweep."""

    @pytest.mark.parametrize("family", [Family.X, Family.X_PRIME])
    def test_full_grid(self, family):
        """Test nonnegativity over the default grid."""
        report = coefficients_nonnegative_sweep(range(3, 51), 20, 200, family=family)
        assert report.all_hold
        assert report.points_checked == 48 * 21 * 200
        assert report.to_dict()["family"] == family.value

    def test_parallel_matches_serial(self):
        """Test that worker processes give the same report."""
        serial = coefficients_nonnegative_sweep(range(3, 9), 5, 20)
        parallel = coefficients_nonnegative_sweep(range(3, 9), 5, 20, workers=2)
        assert serial == parallel

    def test_rejects_empty_range(self):
        """Test that an empty N range is rejected."""
        with pytest.raises(ParameterError):
            coefficients_nonnegative_sweep([], 5, 10)

    def test_rejects_large_N(self):
        """Test that N beyond the cap is rejected."""
        with pytest.raises(ParameterError):
            coefficients_nonnegative_sweep([5, 2000], 5, 10)


class TestDirectDefinitions:
    """The exact log-ratios against their power series in p."""

    @pytest.mark.parametrize(("N", "p", "n"), [(5, 0.1, 20), (3, 0.01, 50), (10, 0.05, 200)])
    def test_series_converges(self, N, p, n):
        """Test the truncated series against the direct value."""
        assert abs(direct_x(N, p, n) - x_series(N, p, n, 31)) < 1e-9

    def test_series_converges_prime(self):
        """Test the truncated series for the second family."""
        assert abs(direct_x_prime(5, 0.1, 20) - x_series(5, 0.1, 20, 31, Family.X_PRIME)) < 1e-9

    @settings(max_examples=30, deadline=None)
    @given(
        N=st.integers(min_value=3, max_value=20),
        p=st.floats(min_value=1e-3, max_value=0.1),
        extra=st.integers(min_value=0, max_value=400),
    )
    def test_series_converges_random(self, N, p, extra):
        """Test the 31-term series where every ratio (i-1)/(n-1) is below 1/4."""
        # The dropped tail is about (N-1) (1/4)^32 / p, far below the tolerance.
        n = 4 * N - 3 + extra
        assert abs(direct_x(N, p, n) - x_series(N, p, n, 31)) < 1e-9

    def test_series_near_N_needs_more_terms(self):
        """Test that at n = N the ratios reach 1/2 and 40 terms are needed."""
        N, p, n = 3, 0.0078125, 3
        assert abs(direct_x(N, p, n) - x_series(N, p, n, 40)) < 1e-9

    def test_sign_matches_definition(self):
        """Test the log form against the product definition."""
        N, p, n = 10, 0.05, 100
        lhs = (N - 1) * math.log(n - 1) - (n - 1) * p
        rhs = sum(math.log(n - i) for i in range(1, N)) + (n - N) * math.log1p(-p)
        assert (direct_x(N, p, n) >= 0) == (lhs >= rhs)

    def test_log_factorial_link(self):
        """At n = N the falling factorial is (N-1)!."""
        N, p = 6, 0.2
        expected = ((N - 1) * math.log(N - 1) - (N - 1) * p - log_factorial(N - 1)) / p
        assert direct_x(N, p, N) == pytest.approx(expected, rel=1e-12)

    def test_rejects_small_n(self):
        """Test that n below N is rejected."""
        with pytest.raises(ParameterError):
            direct_x(5, 0.1, 4)
