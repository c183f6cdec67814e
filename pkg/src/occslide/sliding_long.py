"""Long-time, small-noise transitional density of perturbed sliding motion.

To leading order the state stays within ``O(eps)`` of the switching manifold
in ``x`` and within ``O(sqrt(eps))`` of the deterministic sliding solution
``y_S(t)`` in ``y``.  In the scaled coordinates ``X = x / eps`` and
``Y = (y - y_S(t)) / sqrt(eps)`` the density factorises into a Gaussian in
``Y`` with covariance ``Theta(t)`` and a two-sided exponential in ``X``.
``Theta`` solves the differential Lyapunov equation

    Theta' = A Theta + Theta A^T + M M^T,   Theta(0) = 0,

with ``A = D_y Omega(y_S(t))`` and ``M = [-(b_L - b_R)/(a_L + a_R) | I] D``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError, LeftSlidingRegion, NotStableSliding
from .numerics import GaussianSpec, Trajectory, gaussian_pdf, rk4_solve
from .systems import FilippovSystem, NoiseSpec

__all__ = [
    "sliding_vector_field", "sliding_solution", "sliding_jacobian", "noise_matrix",
    "covariance", "SlidingState", "SlidingTrajectory", "longtime_pdf",
    "longtime_marginal_x", "longtime_marginal_y", "DEFAULT_STEPS",
]

DEFAULT_STEPS = 2000


def _coeffs(system: FilippovSystem, y):
    aL, aR = system.a_L(y), system.a_R(y)
    if not (aL > 0 and aR > 0):
        raise NotStableSliding(
            f"y={np.atleast_1d(y).tolist()} is not in a stable sliding region "
            f"(a_L={aL:g}, a_R={aR:g})")
    return aL, aR, system.b_L(y), system.b_R(y)


def sliding_vector_field(system: FilippovSystem, y) -> np.ndarray:
    """``Omega(y) = (a_L b_R + a_R b_L) / (a_L + a_R)``.

    Raises
    ------
    NotStableSliding
        Unless ``a_L(y) > 0`` and ``a_R(y) > 0``.
    """
    aL, aR, bL, bR = _coeffs(system, y)
    kappa = aL / (aL + aR)
    return kappa * bR + (1 - kappa) * bL


def sliding_jacobian(system: FilippovSystem, y) -> np.ndarray:
    """``D_y Omega`` by central differences, or the system's analytic Jacobian.

    The step for coordinate ``i`` is ``1e-6 * max(1, |y_i|)``; if a probe
    leaves the sliding region the step is cut tenfold once before giving up.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if system.omega_jacobian is not None:
        return np.atleast_2d(np.asarray(system.omega_jacobian(y), dtype=float))
    _coeffs(system, y)
    m = y.size
    J = np.empty((m, m))
    for i in range(m):
        h = 1e-6 * max(1.0, abs(y[i]))
        for attempt in range(2):
            e = np.zeros(m)
            e[i] = h
            try:
                J[:, i] = (sliding_vector_field(system, y + e)
                           - sliding_vector_field(system, y - e)) / (2 * h)
                break
            except NotStableSliding:
                if attempt == 1:
                    raise
                h /= 10
    return J


def noise_matrix(system: FilippovSystem, noise: NoiseSpec, y) -> np.ndarray:
    """``M(y) = [-(b_L - b_R)/(a_L + a_R) | I] D``, shape ``(N-1, N)``."""
    aL, aR, bL, bR = _coeffs(system, y)
    m = noise.dim - 1
    left = np.hstack([(-(bL - bR) / (aL + aR)).reshape(m, 1), np.eye(m)])
    return left @ noise.D


@dataclass(frozen=True)
class SlidingState:
    """Deterministic sliding position and scaled covariance at time ``t``."""

    t: float
    y_S: np.ndarray
    Theta: np.ndarray


class _Exit(Exception):
    def __init__(self, t, y):
        self.t, self.y = t, y


def _margin(system, y) -> float:
    return min(system.a_L(y), system.a_R(y))


def _guarded(system, rhs, m):
    """Wrap ``rhs`` so that leaving the sliding region aborts the RK4 loop."""

    def f(t, state):
        y = state[:m]
        if not _margin(system, y) > 0:
            raise _Exit(t, y.copy())
        return rhs(t, state)

    return f


def _exit_time(system, t0, state0, exit_t, exit_y, m) -> float:
    """Interpolate the stability margin linearly between the last good node and the failing stage."""
    y0 = state0[:m]
    g0 = _margin(system, y0)
    g1 = _margin(system, exit_y)
    if g0 <= 0 or g0 == g1:
        return float(t0)
    return float(t0 + (exit_t - t0) * g0 / (g0 - g1))


def _run(system, rhs, state0, m, t, step):
    if not t >= 0:
        raise DomainError("t must be non-negative")
    state0 = np.asarray(state0, dtype=float)
    if not _margin(system, state0[:m]) > 0:
        raise LeftSlidingRegion(
            f"y0={state0[:m].tolist()} is not in a stable sliding region", exit_time=0.0)
    if step is None:
        step = t / DEFAULT_STEPS if t > 0 else 1.0
    project = _symmetrise_factory(m)
    try:
        return rk4_solve(_guarded(system, rhs, m), state0, 0.0, t, step, project=project)
    except _Exit as ex:
        # replay up to the last node completed before the failing stage
        t_ok = min(max(math.floor(ex.t / step - 1e-9), 0) * step, t)
        y_ok = rk4_solve(rhs, state0, 0.0, t_ok, step, project=project).final if t_ok > 0 else state0
        te = _exit_time(system, t_ok, y_ok, ex.t, ex.y, m)
        raise LeftSlidingRegion(
            f"sliding solution leaves the stable sliding region near t={te:.6g}",
            exit_time=te) from None


def _symmetrise_factory(m):
    def project(state):
        if state.size == m:
            return state
        th = state[m:].reshape(m, m)
        return np.concatenate([state[:m], (0.5 * (th + th.T)).ravel()])
    return project


def sliding_solution(system: FilippovSystem, y0, t: float,
                     step: Optional[float] = None) -> Trajectory:
    """RK4 integration of ``y' = Omega(y)`` on ``[0, t]`` with dense output.

    The default step is ``t / 2000``.

    Raises
    ------
    LeftSlidingRegion
        If the solution exits the stable sliding region; ``exit_time``
        estimates when.
    """
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    rhs = lambda _t, y: sliding_vector_field(system, y)
    return _run(system, rhs, y0, y0.size, t, step)


class SlidingTrajectory:
    """Co-integrated ``y_S`` and ``Theta`` with dense output."""

    def __init__(self, traj: Trajectory, m: int, system: FilippovSystem, noise: NoiseSpec):
        self._traj = traj
        self.m = m
        self.system = system
        self.noise = noise

    @property
    def t_final(self) -> float:
        return float(self._traj.t[-1])

    @property
    def times(self) -> np.ndarray:
        return self._traj.t

    def __call__(self, t: float) -> SlidingState:
        s = np.asarray(self._traj(float(t)))
        th = s[self.m:].reshape(self.m, self.m)
        return SlidingState(float(t), s[:self.m].copy(), 0.5 * (th + th.T))

    def y_S(self, t: float) -> np.ndarray:
        return self(t).y_S

    def Theta(self, t: float) -> np.ndarray:
        return self(t).Theta

    @property
    def final(self) -> SlidingState:
        return self(self.t_final)


def covariance(system: FilippovSystem, noise: NoiseSpec, y0, t: float,
               step: Optional[float] = None) -> SlidingTrajectory:
    """Integrate ``y_S`` and the Lyapunov equation for ``Theta`` together by RK4.

    ``Theta`` is re-symmetrised after every step.
    """
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    m = y0.size
    if system.dim != m + 1 or noise.dim != m + 1:
        raise DomainError("dimension mismatch between system, noise and y0")

    def rhs(_t, state):
        y = state[:m]
        th = state[m:].reshape(m, m)
        A = sliding_jacobian(system, y)
        M = noise_matrix(system, noise, y)
        dth = A @ th + th @ A.T + M @ M.T
        return np.concatenate([sliding_vector_field(system, y), dth.ravel()])

    state0 = np.concatenate([y0, np.zeros(m * m)])
    traj = _run(system, rhs, state0, m, t, step)
    return SlidingTrajectory(traj, m, system, noise)


# ---------------------------------------------------------------------------
# density

def _x_factor(x, eps, alpha, aL, aR):
    x = np.asarray(x, dtype=float)
    peak = 2 * aL * aR / (alpha * eps * (aL + aR))
    X = x / eps
    with np.errstate(under="ignore"):
        return peak * np.where(x < 0, np.exp(2 * aL * X / alpha), np.exp(-2 * aR * X / alpha))


def _state_at(system, noise, y0, t, step, trajectory):
    if not t > 0:
        raise DomainError("t must be positive")
    if trajectory is None or trajectory.t_final < t:
        trajectory = covariance(system, noise, y0, t, step)
    return trajectory(t)


def longtime_marginal_x(x, t: float, system: FilippovSystem, noise: NoiseSpec, y0,
                        step: Optional[float] = None,
                        trajectory: Optional[SlidingTrajectory] = None):
    """Two-sided exponential density of ``x`` with coefficients at ``y_S(t)``."""
    st = _state_at(system, noise, y0, t, step, trajectory)
    aL, aR, _, _ = _coeffs(system, st.y_S)
    out = _x_factor(x, noise.epsilon, noise.alpha, aL, aR)
    return float(out) if np.ndim(x) == 0 else out


def longtime_marginal_y(y, t: float, system: FilippovSystem, noise: NoiseSpec, y0,
                        step: Optional[float] = None,
                        trajectory: Optional[SlidingTrajectory] = None):
    """Gaussian density of ``y`` with mean ``y_S(t)`` and covariance ``eps Theta(t)``.

    ``y`` has shape ``(N-1,)`` or ``(n, N-1)``; for ``N = 2`` any array of
    scalars is accepted.
    """
    st = _state_at(system, noise, y0, t, step, trajectory)
    m = st.y_S.size
    g = GaussianSpec(st.y_S, noise.epsilon * st.Theta)
    ya = np.asarray(y, dtype=float)
    if m == 1:
        return _reshape(gaussian_pdf(ya.reshape(-1, 1), g), ya.shape if ya.shape[-1:] != (1,) or ya.ndim < 2 else ya.shape[:-1])
    return _reshape(gaussian_pdf(ya.reshape(-1, m), g), ya.shape[:-1])


def _reshape(vals, shape):
    vals = np.asarray(vals)
    if shape == ():
        return float(vals.ravel()[0])
    return vals.reshape(shape)


def longtime_pdf(x, y, t: float, system: FilippovSystem, noise: NoiseSpec, y0,
                 step: Optional[float] = None,
                 trajectory: Optional[SlidingTrajectory] = None):
    """Joint long-time density of ``(x, y)`` at time ``t``.

    Product of :func:`longtime_marginal_x` and :func:`longtime_marginal_y`,
    with every coefficient frozen at ``y_S(t)``.  ``x`` broadcasts against the
    leading shape of ``y``.
    """
    if trajectory is None:
        trajectory = covariance(system, noise, y0, t, step)
    fx = longtime_marginal_x(x, t, system, noise, y0, trajectory=trajectory)
    fy = longtime_marginal_y(y, t, system, noise, y0, trajectory=trajectory)
    out = np.asarray(fx) * np.asarray(fy)
    return float(out) if out.ndim == 0 else out
