import math

import numpy as np
import pytest

from occslide.errors import DomainError, LeftSlidingRegion, NotStableSliding
from occslide.grids import DensityGrid, build_histogram
from occslide.montecarlo import SimConfig, l1_distance, simulate_filippov
from occslide.sliding_long import (
    covariance, longtime_marginal_x, longtime_marginal_y, longtime_pdf, noise_matrix,
    sliding_jacobian, sliding_solution, sliding_vector_field,
)
from occslide.systems import FilippovSystem, NoiseSpec, PiecewiseAffineSystem

THETA = {0.5: 0.20138009903717939, 1.0: 0.29650532221001595, 2.0: 0.36266460223959860}
Y_S = {0.1: 1.8795724772142548, 1.0: 1.1206109212350245, 2.0: 0.70521693358071638}


def theta_exact(t):
    return 0.5725 * (1 - math.exp(-1.5 * t)) / 1.5


def test_frozen_oracle_values():
    for t, v in THETA.items():
        assert theta_exact(t) == pytest.approx(v, rel=1e-15)
    for t, v in Y_S.items():
        assert 5 / 3 * math.exp(-0.75 * t) + 1 / 3 == pytest.approx(v, rel=1e-15)


class TestField:
    def test_example(self, example):
        system, _ = example
        assert sliding_vector_field(system, [2.0])[0] == pytest.approx(-1.25, abs=1e-15)
        assert sliding_vector_field(system, [1 / 3])[0] == pytest.approx(0.0, abs=1e-15)
        for y in np.linspace(-0.9, 2.9, 7):
            assert sliding_vector_field(system, [y])[0] == pytest.approx((1 - 3 * y) / 4, abs=1e-14)

    def test_symmetric_weights(self):
        s = PiecewiseAffineSystem.from_matrices(np.zeros((3, 3)), [1.0, 2.0, -1.0],
                                                np.zeros((3, 3)), [-1.0, 4.0, 3.0])
        np.testing.assert_allclose(sliding_vector_field(s, [0.0, 0.0]), [3.0, 1.0])

    def test_outside(self, example):
        with pytest.raises(NotStableSliding):
            sliding_vector_field(example[0], [3.5])

    def test_jacobian(self, example):
        system, _ = example
        np.testing.assert_allclose(sliding_jacobian(system, [2.0]), [[-0.75]], atol=1e-9)

    def test_jacobian_near_edge_shrinks_step(self, example):
        y = 3.0 - 2e-6
        np.testing.assert_allclose(sliding_jacobian(example[0], [y]), [[-0.75]], atol=1e-6)

    def test_analytic_jacobian_echoed(self, example):
        s = example[0]
        s2 = PiecewiseAffineSystem(s.drift_left, s.drift_right, 2, omega_jacobian=lambda y: [[7.0]])
        np.testing.assert_array_equal(sliding_jacobian(s2, [2.0]), [[7.0]])

    def test_noise_matrix(self, example):
        M = noise_matrix(*example, [2.0])
        np.testing.assert_allclose(M, [[-0.75, 0.1]], atol=1e-15)
        assert (M @ M.T)[0, 0] == pytest.approx(0.5725, abs=1e-15)

    def test_noise_matrix_identity_d(self):
        s = PiecewiseAffineSystem.from_matrices(np.zeros((3, 3)), [1.0, 2.0, -1.0],
                                                np.zeros((3, 3)), [-2.0, 4.0, 3.0])
        M = noise_matrix(s, NoiseSpec(0.1, np.eye(3)), [0.0, 0.0])
        d = np.array([-2.0, -4.0]) / 3.0
        np.testing.assert_allclose(M @ M.T, np.outer(d, d) + np.eye(2), atol=1e-14)

    def test_noise_matrix_equal_b(self):
        s = PiecewiseAffineSystem.from_matrices(np.zeros((2, 2)), [1.0, 2.0], np.zeros((2, 2)), [-1.0, 2.0])
        D = np.array([[1.0, 0.2], [0.3, 0.4]])
        np.testing.assert_allclose(noise_matrix(s, NoiseSpec(0.1, D), [0.0]), D[1:], atol=1e-15)


class TestTrajectories:
    def test_sliding_solution(self, example):
        tr = sliding_solution(example[0], [2.0], 2.0, step=1e-3)
        for t, v in Y_S.items():
            assert tr(t)[0] == pytest.approx(v, abs=1e-8)
        ts = np.linspace(0, 2, 41)
        ref = 5 / 3 * np.exp(-0.75 * ts) + 1 / 3
        np.testing.assert_allclose([tr(t)[0] for t in ts], ref, atol=1e-8)

    def test_equilibrium_and_zero_time(self, example):
        tr = sliding_solution(example[0], [1 / 3], 1.0)
        assert tr.final[0] == pytest.approx(1 / 3, abs=1e-15)
        assert sliding_solution(example[0], [2.0], 0.0).final[0] == 2.0

    def test_theta_oracle(self, example):
        tr = covariance(*example, [2.0], 2.0)
        for t, v in THETA.items():
            st = tr(t)
            assert st.Theta[0, 0] == pytest.approx(v, abs=1e-6)
            assert st.y_S[0] == pytest.approx(Y_S.get(t, st.y_S[0]), abs=1e-8)
        assert tr(0.0).Theta[0, 0] == 0.0

    def test_theta_monotone_psd(self, example):
        tr = covariance(*example, [2.0], 2.0)
        th = np.array([tr(t).Theta[0, 0] for t in np.linspace(0, 2, 51)])
        assert np.all(np.diff(th) > 0)

    def test_scalar_ou_closed_form(self):
        # constant coefficients: y' = a y + const, Theta = m^2 (e^{2at} - 1) / (2a)
        s = PiecewiseAffineSystem.from_matrices([[0, 0], [0, 0.2]], [2.0, 1.0],
                                                [[0, 0], [0, 0.2]], [-2.0, -1.0])
        noise = NoiseSpec(0.1, np.array([[1.0, 0.0], [0.3, 0.5]]))
        a = 0.2
        M = noise_matrix(s, noise, [0.0])
        m2 = float((M @ M.T)[0, 0])
        st = covariance(s, noise, [0.0], 1.5)(1.5)
        assert st.Theta[0, 0] == pytest.approx(m2 * (math.exp(2 * a * 1.5) - 1) / (2 * a), rel=1e-10)

    def test_two_dimensional_theta_symmetric_psd(self):
        A = [[0, 0, 0], [0.1, -1.0, 0.3], [0.0, 0.2, -0.5]]
        s = PiecewiseAffineSystem.from_matrices(A, [1.0, 1.0, 0.0], A, [-1.0, -1.0, 2.0])
        noise = NoiseSpec(0.1, np.array([[1.0, 0, 0], [0.2, 0.5, 0], [0, 0.1, 0.3]]))
        th = covariance(s, noise, [0.5, -0.5], 1.0).final.Theta
        assert np.array_equal(th, th.T)
        assert np.linalg.eigvalsh(th).min() > 0

    def test_left_sliding_region(self):
        s = PiecewiseAffineSystem.from_matrices([[0, 0], [0, 0]], [1, 2], [[0, 1], [0, 0]], [-3, 2])
        with pytest.raises(LeftSlidingRegion) as info:
            sliding_solution(s, [2.0], 2.0)
        assert info.value.exit_time == pytest.approx(0.5, abs=1e-3)

    def test_start_outside(self, example):
        with pytest.raises(LeftSlidingRegion) as info:
            covariance(*example, [3.5], 1.0)
        assert info.value.exit_time == 0.0

    def test_dimension_mismatch(self, example):
        with pytest.raises(DomainError):
            covariance(*example, [1.0, 2.0], 1.0)


class TestDensity:
    def test_marginals_and_product(self, example):
        system, noise = example
        t = 2.0
        tr = covariance(system, noise, [2.0], t)
        st = tr(t)
        aL, aR = system.a_L(st.y_S), system.a_R(st.y_S)
        eps = noise.epsilon
        peak = 2 * aL * aR / (eps * (aL + aR))
        assert longtime_marginal_x(0.0, t, system, noise, [2.0], trajectory=tr) == pytest.approx(peak)
        x = np.array([-0.05, -1e-12, 1e-12, 0.03])
        y = np.array([0.6, 0.7, 0.8, 0.9])
        fx = longtime_marginal_x(x, t, system, noise, [2.0], trajectory=tr)
        fy = longtime_marginal_y(y, t, system, noise, [2.0], trajectory=tr)
        joint = longtime_pdf(x, y, t, system, noise, [2.0], trajectory=tr)
        np.testing.assert_allclose(joint, fx * fy, rtol=1e-12)
        assert fx[1] == pytest.approx(fx[2], rel=1e-9)

    def test_x_mass_fraction(self, example):
        system, noise = example
        t = 1.0
        tr = covariance(system, noise, [2.0], t)
        ys = tr(t).y_S
        aL, aR = system.a_L(ys), system.a_R(ys)
        x = np.linspace(0, 3, 300001)
        right = np.trapezoid(longtime_marginal_x(x, t, system, noise, [2.0], trajectory=tr), x)
        assert right == pytest.approx(aL / (aL + aR), abs=1e-8)

    def test_joint_mass_and_mean(self, example):
        system, noise = example
        t = 2.0
        tr = covariance(system, noise, [2.0], t)
        st = tr(t)
        sd = math.sqrt(noise.epsilon * st.Theta[0, 0])
        assert sd == pytest.approx(math.sqrt(0.1 * THETA[2.0]), rel=1e-6)
        xg = np.linspace(-1.0, 1.0, 4001)
        yg = st.y_S[0] + np.linspace(-8, 8, 801) * sd
        X, Y = np.meshgrid(xg, yg, indexing="ij")
        f = longtime_pdf(X, Y, t, system, noise, [2.0], trajectory=tr)
        mass = np.trapezoid(np.trapezoid(f, yg, axis=1), xg)
        assert mass == pytest.approx(1.0, abs=1e-3)
        fy = longtime_marginal_y(yg, t, system, noise, [2.0], trajectory=tr)
        assert np.trapezoid(yg * fy, yg) == pytest.approx(st.y_S[0], abs=1e-9)

    def test_y_marginal_shapes(self, example):
        system, noise = example
        tr = covariance(system, noise, [2.0], 1.0)
        args = (1.0, system, noise, [2.0])
        assert isinstance(longtime_marginal_y(1.0, *args, trajectory=tr), float)
        assert longtime_marginal_y(np.ones(4), *args, trajectory=tr).shape == (4,)
        assert longtime_marginal_y(np.ones((4, 1)), *args, trajectory=tr).shape == (4,)

    def test_time_domain(self, example):
        with pytest.raises(DomainError):
            longtime_marginal_x(0.0, 0.0, *example, [2.0])

    @pytest.mark.slow
    def test_covariance_against_monte_carlo(self, example):
        system, _ = example
        noise = NoiseSpec(0.01, np.diag([1.0, 0.1]))
        res = simulate_filippov(system, noise, [2.0], SimConfig(100_000, 1e-4, 1.0, seed=21,
                                                                 record="final_state"))
        Y = (res.y[:, 0] - Y_S[1.0]) / math.sqrt(0.01)
        assert np.var(Y) == pytest.approx(THETA[1.0], rel=0.05)

    @pytest.mark.slow
    def test_y_marginal_against_monte_carlo(self, example):
        system, noise = example
        t = 2.0
        res = simulate_filippov(system, noise, [2.0], SimConfig(10_000, 1e-4, t, seed=11))
        h = build_histogram(res.y[:, 0], 40, axis="y").as_grid()
        model = DensityGrid("y", h.abscissae,
                            longtime_marginal_y(h.abscissae, t, system, noise, [2.0]))
        assert l1_distance(h, model) <= 0.1


def test_generic_system_matches_affine(example):
    system, noise = example
    generic = FilippovSystem(system.drift_left, system.drift_right, 2)
    a = covariance(system, noise, [2.0], 1.0).final
    b = covariance(generic, noise, [2.0], 1.0).final
    np.testing.assert_allclose(a.Theta, b.Theta, atol=1e-12)
