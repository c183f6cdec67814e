import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from occslide.errors import NonConvergence, NonFinite, Overflow, SingularCovariance
from occslide.numerics import (
    GAUSS_WEIGHTS, KRONROD_WEIGHTS, NODES, GaussianSpec, QuadratureSpec, erfc, erfcx,
    exp_erfc, gaussian_logpdf, gaussian_pdf, integrate, integrate_batch,
    integrate_semi_infinite, rk4_solve,
)

# values frozen from mpmath at 30 digits
ERFC_1 = 0.15729920705028513
ERFCX_5 = 0.11070463773306863
ERFCX_M3 = 16205.988853999587


class TestSpecialFunctions:
    def test_erfc_values(self):
        assert erfc(0.0) == 1.0
        assert erfc(30.0) == 0.0
        assert erfc(1.0) == pytest.approx(ERFC_1, rel=1e-14)

    @pytest.mark.parametrize("x", [-25.0, -3.3, -0.4, 0.2, 1.7, 6.0, 15.0, 25.9])
    def test_erfc_against_mpmath(self, x):
        ref = float(mpmath.erfc(mpmath.mpf(x)))
        assert erfc(x) == pytest.approx(ref, rel=1e-13)

    def test_erfcx_values(self):
        assert erfcx(0.0) == 1.0
        assert erfcx(5.0) == pytest.approx(ERFCX_5, rel=1e-13)
        assert erfcx(-3.0) == pytest.approx(ERFCX_M3, rel=1e-13)

    @pytest.mark.parametrize("x", [-20.0, -1.1, 0.5, 4.0, 40.0, 1e4])
    def test_erfcx_against_mpmath(self, x):
        mx = mpmath.mpf(x)
        ref = float(mpmath.exp(mx * mx) * mpmath.erfc(mx))
        assert erfcx(x) == pytest.approx(ref, rel=1e-12)

    def test_erfcx_identity(self):
        x = np.linspace(-5, 5, 201)
        np.testing.assert_allclose(erfcx(x) * np.exp(-x * x), erfc(x), rtol=1e-12)

    def test_erfcx_overflow(self):
        with pytest.raises(Overflow):
            erfcx(-27.0)
        assert math.isfinite(erfcx(-26.0))

    def test_exp_erfc_matches_naive_where_safe(self):
        lp = np.array([-3.0, 0.0, 2.0, 5.0])
        x = np.array([-1.0, 0.5, 2.0, 3.0])
        np.testing.assert_allclose(exp_erfc(lp, x), np.exp(lp) * erfc(x), rtol=1e-13)

    def test_exp_erfc_avoids_overflow(self):
        # exp(800) overflows but exp(800) * erfc(30) ~ exp(-100) / (30 sqrt(pi))
        v = exp_erfc(800.0, 30.0)
        ref = float(mpmath.exp(800) * mpmath.erfc(30))
        assert v == pytest.approx(ref, rel=1e-12)


class TestRule:
    def test_weights_sum(self):
        assert KRONROD_WEIGHTS.sum() == pytest.approx(2.0, abs=1e-15)
        assert GAUSS_WEIGHTS.sum() == pytest.approx(2.0, abs=1e-15)
        assert np.all(np.diff(NODES) > 0)

    @pytest.mark.parametrize("k", range(0, 23))
    def test_kronrod_exact_on_polynomials(self, k):
        exact = (1 - (-1) ** (k + 1)) / (k + 1)
        assert np.dot(KRONROD_WEIGHTS, NODES ** k) == pytest.approx(exact, abs=1e-14)

    @pytest.mark.parametrize("k", range(0, 14))
    def test_gauss_exact_on_polynomials(self, k):
        exact = (1 - (-1) ** (k + 1)) / (k + 1)
        assert np.dot(GAUSS_WEIGHTS, NODES ** k) == pytest.approx(exact, abs=1e-14)


class TestIntegrate:
    def test_quadrature_spec_validation(self):
        assert QuadratureSpec() == QuadratureSpec(1e-10, 1e-8, 200)
        for bad in [dict(abs_tol=0), dict(rel_tol=-1), dict(max_subdivisions=0)]:
            with pytest.raises(ValueError):
                QuadratureSpec(**bad)

    def test_arcsine_mass(self):
        v = integrate(lambda x: 1 / (math.pi * np.sqrt(x * (1 - x))), 0, 1,
                      singularity="inv_sqrt_both")
        assert v == pytest.approx(1.0, abs=1e-10)

    def test_polynomial(self):
        assert integrate(lambda x: x * x, 0, 1) == pytest.approx(1 / 3, abs=1e-12)

    def test_inv_sqrt_left_exact(self):
        assert integrate(lambda x: x ** -0.5, 0, 1, singularity="inv_sqrt_left") == \
            pytest.approx(2.0, abs=1e-12)

    def test_inv_sqrt_right(self):
        v = integrate(lambda x: np.cos(x) / np.sqrt(2 - x), 0, 2, singularity="inv_sqrt_right")
        ref = float(mpmath.quad(lambda x: mpmath.cos(x) / mpmath.sqrt(2 - x), [0, 2]))
        assert v == pytest.approx(ref, rel=1e-8)

    def test_break_points(self):
        f = lambda x: np.exp(-((x - 0.3137) / 1e-3) ** 2)
        v = integrate(f, 0, 1, points=[0.3137])
        assert v == pytest.approx(1e-3 * math.sqrt(math.pi), rel=1e-9)

    def test_semi_infinite(self):
        assert integrate_semi_infinite(lambda x: np.exp(-x), 0.0) == pytest.approx(1, abs=1e-10)
        half = integrate_semi_infinite(lambda x: np.exp(-x * x / 2) / math.sqrt(2 * math.pi), 0.0)
        assert half == pytest.approx(0.5, abs=1e-10)

    def test_semi_infinite_with_singularity(self):
        v = integrate_semi_infinite(lambda x: np.exp(-x) / np.sqrt(x), 0.0,
                                    singularity="inv_sqrt_left")
        assert v == pytest.approx(math.sqrt(math.pi), rel=1e-10)

    def test_semi_infinite_narrow_scale(self):
        v = integrate_semi_infinite(lambda x: 1e4 * np.exp(-1e4 * x), 0.0)
        assert v == pytest.approx(1.0, rel=1e-9)

    def test_batch(self):
        a = np.zeros(4)
        b = np.array([1.0, 2.0, 3.0, 0.0])
        out = integrate_batch(lambda x, i: x ** (i + 1), a, b)
        np.testing.assert_allclose(out, [0.5, 8 / 3, 81 / 4, 0.0], atol=1e-12)

    def test_nonconvergence_reports_estimate(self):
        spec = QuadratureSpec(abs_tol=1e-15, rel_tol=1e-15, max_subdivisions=2)
        with pytest.raises(NonConvergence) as info:
            integrate(lambda x: np.sin(1 / (x + 1e-3)), 0, 1, spec, where="wiggle")
        assert info.value.estimate is not None and info.value.error > 0
        assert "wiggle" in str(info.value)

    def test_requires_ordered_limits(self):
        with pytest.raises(ValueError):
            integrate(lambda x: x, 1, 0)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-5, 5), min_size=4, max_size=4),
           st.lists(st.floats(-5, 5), min_size=4, max_size=4),
           st.floats(-3, 3), st.floats(-3, 3))
    def test_linearity(self, cf, cg, alpha, beta):
        f = np.polynomial.Polynomial(cf)
        g = np.polynomial.Polynomial(cg)
        lhs = integrate(lambda x: alpha * f(x) + beta * g(x), 0, 1)
        rhs = alpha * integrate(f, 0, 1) + beta * integrate(g, 0, 1)
        tol = 10 * max(1e-10, 1e-8 * abs(lhs))
        assert abs(lhs - rhs) <= tol


class TestRK4:
    def test_exponential(self):
        tr = rk4_solve(lambda t, y: -y, 1.0, 0.0, 1.0, 1e-3)
        assert tr.final[0] == pytest.approx(math.exp(-1), abs=1e-10)

    def test_sliding_field(self):
        tr = rk4_solve(lambda t, y: (1 - 3 * y) / 4, 2.0, 0.0, 1.0, 1e-3)
        assert tr.final[0] == pytest.approx(5 / 3 * math.exp(-0.75) + 1 / 3, abs=1e-8)

    def test_zero_field(self):
        tr = rk4_solve(lambda t, y: np.zeros_like(y), [1.0, -2.0], 0.0, 3.0, 0.1)
        np.testing.assert_array_equal(tr.final, [1.0, -2.0])

    def test_order_four(self):
        err = [abs(rk4_solve(lambda t, y: -y, 1.0, 0, 1, h).final[0] - math.exp(-1))
               for h in (0.1, 0.05)]
        assert 12 <= err[0] / err[1] <= 20

    def test_last_step_lands_on_t1(self):
        tr = rk4_solve(lambda t, y: np.ones_like(y), 0.0, 0.0, 1.0, 0.3)
        assert tr.t[-1] == 1.0
        assert tr.final[0] == pytest.approx(1.0, abs=1e-14)

    def test_dense_output(self):
        tr = rk4_solve(lambda t, y: -y, 1.0, 0.0, 1.0, 0.01)
        assert tr(0.505)[0] == pytest.approx(math.exp(-0.505), abs=1e-9)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_nonfinite(self):
        with pytest.raises(NonFinite):
            rk4_solve(lambda t, y: y * y, 1.0, 0.0, 2.0, 0.01)

    def test_projection_applied(self):
        tr = rk4_solve(lambda t, y: np.ones_like(y), 0.0, 0.0, 1.0, 0.5, project=lambda s: s * 0)
        assert tr.final[0] == 0.0


class TestGaussian:
    def test_values(self):
        assert gaussian_pdf([0.0], GaussianSpec([0.0], [[1.0]])) == pytest.approx(1 / math.sqrt(2 * math.pi))
        assert gaussian_pdf([1.0], GaussianSpec([0.0], [[1.0]])) == \
            pytest.approx(math.exp(-0.5) / math.sqrt(2 * math.pi))
        assert gaussian_pdf([0.0, 0.0], GaussianSpec([0, 0], np.eye(2))) == pytest.approx(1 / (2 * math.pi))

    def test_against_scipy(self, rng):
        from scipy import stats
        A = rng.normal(size=(3, 3))
        cov = A @ A.T + 0.1 * np.eye(3)
        mean = rng.normal(size=3)
        pts = rng.normal(size=(10, 3))
        np.testing.assert_allclose(gaussian_logpdf(pts, GaussianSpec(mean, cov)),
                                   stats.multivariate_normal(mean, cov).logpdf(pts), rtol=1e-12)

    def test_singular(self):
        g = GaussianSpec([0, 0], [[1, 1], [1, 1]])
        with pytest.raises(SingularCovariance):
            gaussian_pdf([0, 0], g)

    def test_validation(self):
        with pytest.raises(ValueError):
            GaussianSpec([0, 0], [[1, 0.5], [0.4, 1]])
        with pytest.raises(ValueError):
            GaussianSpec([0, 0], [[1, 0], [0, -1]])
