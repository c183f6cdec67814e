"""scikit-learn style wrappers around the analytic densities.

The densities have no data to learn from, so ``fit`` only validates the
parameters and precomputes whatever the density needs (occupation atoms,
frozen drifts, the sliding trajectory).  ``score_samples`` returns log
densities in the manner of :class:`sklearn.neighbors.KernelDensity`.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_array, check_is_fitted

from .occupation import TwoValuedDriftSpec, occupation_density
from .sliding_long import covariance, longtime_pdf
from .sliding_short import frozen_params_from_system, orthogonal_pdf, parallel_pdf
from .systems import example_noise, example_system

__all__ = ["OccupationTimeDensity", "SlidingShortTimeDensity", "SlidingLongTimeDensity"]


def _log(values):
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(values, dtype=float))


class OccupationTimeDensity(BaseEstimator):
    """Law of the time Brownian motion with two-valued drift spends in ``[0, inf)``.

    Parameters
    ----------
    a_L, a_R : float
        Drift ``a_L`` below 0 and ``-a_R`` above 0.
    x0 : float
        Starting point.
    t : float
        Horizon.
    n_grid : int
        Number of CDF nodes used by :meth:`sample` for inverse-transform draws.
    """

    def __init__(self, a_L=0.0, a_R=0.0, x0=0.0, t=1.0, n_grid=2001):
        self.a_L = a_L
        self.a_R = a_R
        self.x0 = x0
        self.t = t
        self.n_grid = n_grid

    def fit(self, X=None, y=None):
        self.spec_ = TwoValuedDriftSpec(self.a_L, self.a_R, self.x0, self.t)
        self.density_ = occupation_density(self.spec_)
        self.atoms_ = (self.density_.atom_at_zero, self.density_.atom_at_t)
        return self

    def pdf(self, X):
        """Continuous part of the density at occupation times ``X`` (n, 1)."""
        check_is_fitted(self, "density_")
        tau = check_array(X, ensure_2d=False, dtype=float).ravel()
        return self.density_.pdf(tau)

    def score_samples(self, X):
        return _log(self.pdf(X))

    def cdf(self, X):
        check_is_fitted(self, "density_")
        tau = check_array(X, ensure_2d=False, dtype=float).ravel()
        return self.density_.cdf(tau)

    def sample(self, n_samples=1, random_state=None):
        """Inverse-transform draws, including the atoms at ``0`` and ``t``."""
        check_is_fitted(self, "density_")
        rng = check_random_state(random_state)
        t = self.spec_.t
        if not hasattr(self, "_cdf_table"):
            # nodes crowd towards both ends where the density blows up
            theta = np.linspace(0.0, math.pi / 2, self.n_grid)
            grid = t * np.sin(theta) ** 2
            F = self.density_.cdf_table()(grid)
            self._cdf_table = (grid, np.maximum.accumulate(F))
        grid, F = self._cdf_table
        u = rng.uniform(size=n_samples)
        a0, at = self.atoms_
        out = np.interp(u, F, grid)
        out[u < a0] = 0.0
        out[u >= 1.0 - at] = t
        return out.reshape(-1, 1)


class _SlidingBase(BaseEstimator):
    def _setup(self):
        self.system_ = self.system if self.system is not None else example_system()
        self.noise_ = self.noise if self.noise is not None else example_noise(0.1)
        self.y0_ = np.atleast_1d(np.asarray(self.y0, dtype=float))


class SlidingShortTimeDensity(_SlidingBase):
    """Short-time marginal of ``x(t)`` or ``y(t)`` with drifts frozen at ``y0``.

    Parameters
    ----------
    system : FilippovSystem, optional
        Defaults to the planar example system.
    noise : NoiseSpec, optional
        Defaults to the example noise with ``epsilon = 0.1``.
    y0 : array-like
    t : float
    component : {"parallel", "orthogonal"}
    """

    def __init__(self, system=None, noise=None, y0=(2.0,), t=0.1, component="parallel"):
        self.system = system
        self.noise = noise
        self.y0 = y0
        self.t = t
        self.component = component

    def fit(self, X=None, y=None):
        if self.component not in ("parallel", "orthogonal"):
            raise ValueError("component must be 'parallel' or 'orthogonal'")
        self._setup()
        self.params_ = frozen_params_from_system(self.system_, self.noise_, self.y0_)
        return self

    def pdf(self, X):
        check_is_fitted(self, "params_")
        if self.component == "orthogonal":
            x = check_array(X, ensure_2d=False, dtype=float).ravel()
            return orthogonal_pdf(x, self.t, self.params_)
        Y = check_array(X, dtype=float)
        return parallel_pdf(Y, self.t, self.params_)

    def score_samples(self, X):
        return _log(self.pdf(X))


class SlidingLongTimeDensity(_SlidingBase):
    """Long-time joint density of ``(x, y)`` around the sliding solution.

    ``X`` rows are ``[x, y_1, ..., y_{N-1}]``.
    """

    def __init__(self, system=None, noise=None, y0=(2.0,), t=2.0, step=None):
        self.system = system
        self.noise = noise
        self.y0 = y0
        self.t = t
        self.step = step

    def fit(self, X=None, y=None):
        self._setup()
        self.trajectory_ = covariance(self.system_, self.noise_, self.y0_, self.t, self.step)
        self.state_ = self.trajectory_(self.t)
        return self

    def pdf(self, X):
        check_is_fitted(self, "trajectory_")
        Z = check_array(X, dtype=float)
        return longtime_pdf(Z[:, 0], Z[:, 1:], self.t, self.system_, self.noise_, self.y0_,
                            trajectory=self.trajectory_)

    def score_samples(self, X):
        return _log(self.pdf(X))

    def sample(self, n_samples=1, random_state=None):
        """Exact draws: two-sided exponential in ``x``, Gaussian in ``y``."""
        check_is_fitted(self, "trajectory_")
        rng = check_random_state(random_state)
        st = self.state_
        aL, aR = self.system_.a_L(st.y_S), self.system_.a_R(st.y_S)
        eps, alpha = self.noise_.epsilon, self.noise_.alpha
        right = rng.uniform(size=n_samples) < aL / (aL + aR)
        e = rng.exponential(size=n_samples)
        x = np.where(right, e * alpha * eps / (2 * aR), -e * alpha * eps / (2 * aL))
        ys = rng.multivariate_normal(st.y_S, eps * st.Theta, size=n_samples)
        return np.column_stack([x, ys])
