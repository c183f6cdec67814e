import numpy as np
import pytest

from occslide.errors import DomainError, NotStableSliding
from occslide.systems import FilippovSystem, NoiseSpec, PiecewiseAffineSystem


def test_example_coefficients(example):
    system, noise = example
    for y in (-0.5, 0.0, 2.0):
        assert system.a_L(y) == pytest.approx(1 + y)
        assert system.a_R(y) == pytest.approx(3 - y)
        np.testing.assert_allclose(system.b_L(y), [1.0])
        np.testing.assert_allclose(system.b_R(y), [-2.0])
    assert noise.alpha == 1.0
    np.testing.assert_allclose(noise.beta, [0.0])
    np.testing.assert_allclose(noise.gamma, [[0.01]])
    np.testing.assert_allclose(noise.D_tilde, [[0.1]])


@pytest.mark.parametrize("y,stable", [(-1.5, False), (-0.99, True), (2.0, True), (3.0, False), (3.5, False)])
def test_sliding_region(example, y, stable):
    system, _ = example
    assert system.is_stable_sliding(y) is stable
    if not stable:
        with pytest.raises(NotStableSliding):
            system.require_stable_sliding(y)


def test_drift_branches(example):
    system, _ = example
    z = np.array([[-1e-12, 2.0], [0.0, 2.0], [1e-12, 2.0]])
    out = system.drift(z)
    np.testing.assert_allclose(out[0], [3.0, 1.0], atol=1e-11)
    np.testing.assert_allclose(out[1], [-1.0, -2.0], atol=1e-11)
    np.testing.assert_allclose(out[2], [-1.0, -2.0], atol=1e-11)


def test_coefficient_overrides_and_consistency():
    fl = lambda z: np.stack([1 + z[..., 1], np.ones_like(z[..., 1])], axis=-1)
    fr = lambda z: np.stack([-(3 - z[..., 1]), -2 * np.ones_like(z[..., 1])], axis=-1)
    good = FilippovSystem(fl, fr, 2, a_L_fn=lambda y: 1 + y[0])
    good.check_consistency(np.array([0.5]))
    bad = FilippovSystem(fl, fr, 2, a_L_fn=lambda y: 2 + y[0])
    assert bad.a_L(np.array([0.5])) == 2.5
    with pytest.raises(DomainError):
        bad.check_consistency(np.array([0.5]))


def test_validation():
    with pytest.raises(DomainError):
        FilippovSystem(lambda z: z, lambda z: z, 1)
    with pytest.raises(DomainError):
        PiecewiseAffineSystem.from_matrices(np.eye(2), [0, 0, 0], np.eye(2), [0, 0])
    with pytest.raises(DomainError):
        NoiseSpec(0.0, np.eye(2))
    with pytest.raises(DomainError):
        NoiseSpec(0.1, np.ones((2, 3)))
    with pytest.raises(DomainError):
        NoiseSpec(0.1, np.diag([0.0, 1.0]))


def test_noise_blocks_identity():
    n = NoiseSpec(0.2, np.eye(3))
    assert n.alpha == 1.0
    np.testing.assert_array_equal(n.beta, np.zeros(2))
    np.testing.assert_array_equal(n.gamma, np.eye(2))
