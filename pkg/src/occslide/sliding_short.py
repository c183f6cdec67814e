"""Short-time transitional densities of perturbed sliding motion.

Over short times the drifts are frozen at their values at ``(0, y0)``.  The
orthogonal coordinate ``x`` is then Brownian motion with two-valued drift and
variance rate ``eps * alpha``, and the parallel coordinates move with ``b_L``
or ``b_R`` depending on the side, so that

    y(t) = y0 + b_L t + (b_R - b_L) tau + sqrt(eps) D~ W~(t)

where ``tau`` is the occupation time of ``x >= 0``.  With independent noise
in ``x`` and ``y`` the density of ``y(t)`` is the occupation-time law pushed
along the line ``tau -> y0 + b_L t + (b_R - b_L) tau`` and smeared by a
Gaussian of covariance ``eps t gamma``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateDirection, DomainError, IndependenceViolated, SingularCovariance
from .numerics import QuadratureSpec, exp_erfc, integrate_batch, integrate_semi_infinite
from .occupation import CONV_QUAD, TwoValuedDriftSpec, occupation_pdf_zero
from .systems import FilippovSystem, NoiseSpec

__all__ = [
    "FrozenDriftParams", "frozen_params_from_system", "scaled_occupation_pdf",
    "orthogonal_pdf", "orthogonal_mass_right", "parallel_pdf", "PARALLEL_QUAD",
]

_SQRT_HALF_PI = math.sqrt(math.pi / 2)
_ASYMPTOTIC_ZETA = 100.0

# near tau = t the occupation density is only good to a few ulps of t - tau,
# which puts a floor of about 1e-8 on the relative error of the tau-integral
PARALLEL_QUAD = QuadratureSpec(abs_tol=1e-10, rel_tol=1e-7, max_subdivisions=200)


@dataclass(frozen=True)
class FrozenDriftParams:
    """Boundary drifts frozen at ``y0`` together with the noise blocks.

    ``b_L``, ``b_R``, ``y0`` and ``beta`` have length ``N - 1``; ``gamma`` is
    ``(N-1, N-1)``.
    """

    a_L: float
    a_R: float
    b_L: np.ndarray
    b_R: np.ndarray
    y0: np.ndarray
    epsilon: float
    alpha: float
    gamma: np.ndarray
    beta: np.ndarray = field(default=None)

    def __post_init__(self):
        vec = lambda v: np.atleast_1d(np.asarray(v, dtype=float)).copy()
        b_L, b_R, y0 = vec(self.b_L), vec(self.b_R), vec(self.y0)
        m = y0.size
        gamma = np.asarray(self.gamma, dtype=float).reshape(m, m)
        beta = np.zeros(m) if self.beta is None else vec(self.beta)
        if b_L.size != m or b_R.size != m or beta.size != m:
            raise DomainError("b_L, b_R, beta and y0 must have the same length")
        if not self.epsilon > 0:
            raise DomainError("epsilon must be positive")
        if not self.alpha > 0:
            raise DomainError("alpha must be positive")
        if np.max(np.abs(gamma - gamma.T), initial=0.0) > 1e-12 * max(1.0, np.abs(gamma).max()):
            raise DomainError("gamma must be symmetric")
        if np.linalg.eigvalsh(gamma).min() < -1e-12 * max(1.0, np.trace(gamma)):
            raise DomainError("gamma must be positive semi-definite")
        for name, v in (("b_L", b_L), ("b_R", b_R), ("y0", y0), ("gamma", gamma), ("beta", beta)):
            object.__setattr__(self, name, v)

    @property
    def scale(self) -> float:
        """Variance rate ``eps * alpha`` of the orthogonal coordinate."""
        return self.epsilon * self.alpha

    @property
    def dim(self) -> int:
        return self.y0.size


def frozen_params_from_system(system: FilippovSystem, noise: NoiseSpec, y0) -> FrozenDriftParams:
    """Evaluate boundary drifts at ``(0, y0)`` and split ``D D^T`` into blocks.

    Raises
    ------
    NotStableSliding
        If ``a_L(y0) <= 0`` or ``a_R(y0) <= 0``.
    """
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    if y0.size != system.dim - 1 or noise.dim != system.dim:
        raise DomainError("dimension mismatch between system, noise and y0")
    system.require_stable_sliding(y0)
    return FrozenDriftParams(
        a_L=system.a_L(y0), a_R=system.a_R(y0), b_L=system.b_L(y0), b_R=system.b_R(y0),
        y0=y0, epsilon=noise.epsilon, alpha=noise.alpha, gamma=noise.gamma, beta=noise.beta)


def scaled_occupation_pdf(tau_tilde, t: float, params: FrozenDriftParams,
                          quad: Optional[QuadratureSpec] = None):
    """Density of the occupation time when ``x`` has variance rate ``eps*alpha``.

    ``p_scaled(tau) = p(tau / c; t / c; 0, a_L, a_R) / c`` with ``c = eps*alpha``.
    """
    c = params.scale
    spec = TwoValuedDriftSpec(params.a_L, params.a_R, 0.0, t / c)
    tau = np.asarray(tau_tilde, dtype=float)
    return occupation_pdf_zero(tau / c, spec, quad) / c


# ---------------------------------------------------------------------------
# orthogonal density

def _truncated_moments(zeta, L):
    """Return ``(A, G, M1, M2)`` for the half-line Gaussian integrals.

    With ``R(z) = int_0^inf exp(-z v - v^2/2) dv`` and ``G = exp(L)``:
    ``A = G R``, ``M1 = G (1 - z R)``, ``M2 = G ((1 + z^2) R - z)``.
    Large ``z`` uses the asymptotic series to avoid cancellation.
    """
    A = _SQRT_HALF_PI * exp_erfc(L + 0.5 * zeta * zeta, zeta / math.sqrt(2.0))
    with np.errstate(under="ignore"):
        G = np.exp(L)
    big = zeta > _ASYMPTOTIC_ZETA
    zs = np.where(big, zeta, 1.0)
    iz2 = 1.0 / (zs * zs)
    m1_series = G * iz2 * (1 - iz2 * (3 - iz2 * (15 - 105 * iz2)))
    m2_series = G * iz2 / zs * (2 - iz2 * (12 - iz2 * (90 - 840 * iz2)))
    M1 = np.where(big, m1_series, G - zeta * A)
    M2 = np.where(big, m2_series, (1 + zeta * zeta) * A - zeta * G)
    return A, G, M1, M2


def _kernel_left(S, T, d, aL, aR):
    """Inner integral over the level ``b`` for the branch ``X = -d <= 0``.

    Returns ``2 exp(-2 a_L d) int_0^inf h(T-S; b, -a_R) h(S; b+d, -a_L) db`` in
    closed form.  Both first passages run from a positive level down to 0, so
    the drift that pushes toward 0 enters with a minus sign.  The exponential
    prefactor is folded into the Gaussian exponent.
    """
    u = T - S
    sig2 = u * S / T
    sig = np.sqrt(sig2)
    k = d / S - aR - aL
    zeta = k * sig
    L = -0.5 * aR * aR * u - (d + aL * S) ** 2 / (2 * S)
    _, _, M1, M2 = _truncated_moments(zeta, L)
    val = sig2 * (sig * M2 + d * M1)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = val / (math.pi * (u * S) ** 1.5)
    return np.where((S > 0) & (u > 0), out, 0.0)


def _orthogonal_unit(X, T, aL, aR, quad):
    """Density of ``X(T)`` for ``dX = drift dt + dW`` started at 0."""
    X = np.asarray(X, dtype=float).ravel()
    left = X <= 0
    d = np.abs(X)
    a1 = np.where(left, aL, aR)
    a2 = np.where(left, aR, aL)

    def f(S, idx):
        return _kernel_left(S, T, d[idx], a1[idx], a2[idx])

    # first passage from depth d peaks near S ~ d^2/3
    pts = [[p for p in (v * v / 3, 3 * v * v) if 0 < p < T] for v in d]
    n = X.size
    return integrate_batch(f, np.zeros(n), np.full(n, T), quad, singularity="inv_sqrt_both",
                           points=pts, where="orthogonal density s-integral")


def orthogonal_pdf(x, t: float, params: FrozenDriftParams,
                   quad: Optional[QuadratureSpec] = None):
    """Density of ``x(t)`` under the frozen two-valued drift, started at 0.

    The first-passage convolution over the level ``b`` is integrated in
    closed form, which leaves one adaptive integral over the switching time.
    Both branches share one formula at ``x = 0`` so the density is
    continuous there by construction.
    """
    if not t > 0:
        raise DomainError("t must be positive")
    c = params.scale
    xa = np.asarray(x, dtype=float)
    vals = _orthogonal_unit(xa / c, t / c, params.a_L, params.a_R, quad or CONV_QUAD) / c
    vals = vals.reshape(xa.shape)
    return float(vals) if np.ndim(x) == 0 else vals


def orthogonal_mass_right(t: float, params: FrozenDriftParams,
                          quad: Optional[QuadratureSpec] = None) -> float:
    """Probability that ``x(t) > 0``, integrating :func:`orthogonal_pdf` over ``(0, inf)``."""
    c = params.scale
    T = t / c
    f = lambda X: _orthogonal_unit(X, T, params.a_L, params.a_R, quad or CONV_QUAD)
    return integrate_semi_infinite(f, 0.0, quad or CONV_QUAD, where="orthogonal mass x > 0")


# ---------------------------------------------------------------------------
# parallel density

def parallel_pdf(y, t: float, params: FrozenDriftParams,
                 quad: Optional[QuadratureSpec] = None, occ_quad: Optional[QuadratureSpec] = None):
    """Density of ``y(t)`` at points ``y`` of shape ``(N-1,)`` or ``(n, N-1)``.

    Evaluated as ``int_0^t p_scaled(s) N(y; y0 + b_L t + (b_R - b_L) s, eps t gamma) ds``.
    The default tolerance is :data:`PARALLEL_QUAD` (relative 1e-7).

    Raises
    ------
    IndependenceViolated
        If ``beta`` is not zero (to 1e-12).
    DegenerateDirection
        If ``b_L == b_R``; the density is then a plain Gaussian.
    """
    if not t > 0:
        raise DomainError("t must be positive")
    p = params
    if np.max(np.abs(p.beta), initial=0.0) > 1e-12:
        raise IndependenceViolated("x and y noise must be independent (beta = 0)")
    v = p.b_R - p.b_L
    if not np.any(v != 0):
        raise DegenerateDirection("b_L == b_R: y(t) is Gaussian with mean y0 + b t")
    m = p.dim
    ya = np.asarray(y, dtype=float)
    if m == 1:
        out_shape = ya.shape[:-1] if ya.ndim == 2 and ya.shape[-1] == 1 else ya.shape
    else:
        if ya.shape[-1:] != (m,):
            raise DomainError(f"points must have trailing dimension {m}")
        out_shape = ya.shape[:-1]
    Y = ya.reshape(-1, m)
    cov = p.epsilon * t * p.gamma
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise SingularCovariance("eps * t * gamma is not positive definite") from None
    # work in whitened coordinates: the Gaussian factor becomes exp(-|w - s u|^2 / 2)
    W = np.linalg.solve(chol, (Y - p.y0 - p.b_L * t).T).T
    u = np.linalg.solve(chol, v)
    uu = float(u @ u)
    log_norm = -0.5 * m * math.log(2 * math.pi) - np.log(np.diag(chol)).sum()
    s_star = W @ u / uu
    perp = np.maximum((W * W).sum(axis=1) - s_star * s_star * uu, 0.0)
    sig_s = 1.0 / math.sqrt(uu)
    n = Y.shape[0]

    def f(s, idx):
        g = log_norm - 0.5 * perp[idx] - 0.5 * uu * (s - s_star[idx]) ** 2
        with np.errstate(under="ignore"):
            return scaled_occupation_pdf(s, t, p, occ_quad) * np.exp(g)

    pts = []
    for c in s_star:
        cand = c + sig_s * np.array([-5.0, -2.0, 0.0, 2.0, 5.0])
        pts.append(cand[(cand > 0) & (cand < t)])
    vals = integrate_batch(f, np.zeros(n), np.full(n, t), quad or PARALLEL_QUAD,
                           singularity="inv_sqrt_both", points=pts,
                           where="parallel density tau-integral")
    if out_shape == ():
        return float(vals[0])
    return vals.reshape(out_shape)
