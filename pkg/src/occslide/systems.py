"""Filippov systems with additive noise.

The switching manifold is ``x = 0`` where ``x`` is the first state
coordinate; ``y`` collects the remaining ``N - 1`` coordinates.  Drifts take a
state array of shape ``(..., N)`` and return the same shape.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, NotStableSliding

__all__ = ["FilippovSystem", "PiecewiseAffineSystem", "NoiseSpec", "example_system", "example_noise"]


def _state(y):
    y = np.atleast_1d(np.asarray(y, dtype=float))
    return np.concatenate([[0.0], y])


@dataclass
class FilippovSystem:
    """Piecewise-smooth drift: ``drift_left`` for x <= 0, ``drift_right`` for x >= 0.

    The optional callables override the boundary coefficients that are
    otherwise read off the drifts at ``x = 0``:
    ``a_L(y) = drift_left(0, y)[0]``, ``a_R(y) = -drift_right(0, y)[0]``,
    ``b_L(y) = drift_left(0, y)[1:]``, ``b_R(y) = drift_right(0, y)[1:]``.
    """

    drift_left: Callable
    drift_right: Callable
    dim: int
    a_L_fn: Optional[Callable] = None
    a_R_fn: Optional[Callable] = None
    b_L_fn: Optional[Callable] = None
    b_R_fn: Optional[Callable] = None
    omega_jacobian: Optional[Callable] = None

    def __post_init__(self):
        if self.dim < 2:
            raise DomainError("a Filippov system here needs N >= 2")

    def drift(self, z):
        """Drift at states ``z`` (..., N); ``x = 0`` takes the right branch."""
        z = np.asarray(z, dtype=float)
        left = z[..., 0] < 0
        return np.where(left[..., None], self.drift_left(z), self.drift_right(z))

    def a_L(self, y) -> float:
        if self.a_L_fn is not None:
            return float(self.a_L_fn(y))
        return float(self.drift_left(_state(y))[0])

    def a_R(self, y) -> float:
        if self.a_R_fn is not None:
            return float(self.a_R_fn(y))
        return float(-self.drift_right(_state(y))[0])

    def b_L(self, y) -> np.ndarray:
        if self.b_L_fn is not None:
            return np.atleast_1d(np.asarray(self.b_L_fn(y), dtype=float))
        return np.asarray(self.drift_left(_state(y))[1:], dtype=float)

    def b_R(self, y) -> np.ndarray:
        if self.b_R_fn is not None:
            return np.atleast_1d(np.asarray(self.b_R_fn(y), dtype=float))
        return np.asarray(self.drift_right(_state(y))[1:], dtype=float)

    def check_consistency(self, y, tol: float = 1e-10) -> None:
        """Raise if supplied coefficient functions disagree with the drifts."""
        zl = self.drift_left(_state(y))
        zr = self.drift_right(_state(y))
        pairs = [
            (self.a_L_fn, zl[0]), (self.a_R_fn, -zr[0]),
            (self.b_L_fn, zl[1:]), (self.b_R_fn, zr[1:]),
        ]
        for fn, ref in pairs:
            if fn is not None and np.max(np.abs(np.asarray(fn(y)) - ref)) > tol:
                raise DomainError("boundary coefficient function disagrees with drift")

    def is_stable_sliding(self, y) -> bool:
        return self.a_L(y) > 0 and self.a_R(y) > 0

    def require_stable_sliding(self, y) -> None:
        aL, aR = self.a_L(y), self.a_R(y)
        if not (aL > 0 and aR > 0):
            raise NotStableSliding(
                f"y={np.atleast_1d(y).tolist()} is not in a stable sliding region "
                f"(a_L={aL:g}, a_R={aR:g})")


@dataclass
class PiecewiseAffineSystem(FilippovSystem):
    """Drift ``A z + c`` on each side of ``x = 0``."""

    A_L: np.ndarray = None
    c_L: np.ndarray = None
    A_R: np.ndarray = None
    c_R: np.ndarray = None

    @classmethod
    def from_matrices(cls, A_L, c_L, A_R, c_R, **kwargs) -> "PiecewiseAffineSystem":
        A_L = np.asarray(A_L, dtype=float)
        A_R = np.asarray(A_R, dtype=float)
        c_L = np.asarray(c_L, dtype=float)
        c_R = np.asarray(c_R, dtype=float)
        n = c_L.size
        if A_L.shape != (n, n) or A_R.shape != (n, n) or c_R.shape != (n,):
            raise DomainError("inconsistent piecewise-affine dimensions")
        return cls(
            drift_left=lambda z: np.asarray(z) @ A_L.T + c_L,
            drift_right=lambda z: np.asarray(z) @ A_R.T + c_R,
            dim=n, A_L=A_L, c_L=c_L, A_R=A_R, c_R=c_R, **kwargs,
        )


@dataclass(frozen=True)
class NoiseSpec:
    """Noise ``sqrt(epsilon) D dW`` with ``D D^T = [[alpha, beta^T], [beta, gamma]]``."""

    epsilon: float
    D: np.ndarray
    DDt: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        if D.shape[0] != D.shape[1]:
            raise DomainError("D must be square")
        if not self.epsilon > 0:
            raise DomainError("epsilon must be positive")
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "DDt", D @ D.T)
        if not self.alpha > 0:
            raise DomainError("(D D^T)_11 must be positive")

    @property
    def dim(self) -> int:
        return self.D.shape[0]

    @property
    def alpha(self) -> float:
        return float(self.DDt[0, 0])

    @property
    def beta(self) -> np.ndarray:
        return self.DDt[1:, 0].copy()

    @property
    def gamma(self) -> np.ndarray:
        return self.DDt[1:, 1:].copy()

    @property
    def D_tilde(self) -> np.ndarray:
        """Lower-right (N-1) x (N-1) block of D."""
        return self.D[1:, 1:].copy()


EXAMPLE_A = np.array([[-1.0, 1.0], [-1.0, 0.0]])


def example_system() -> PiecewiseAffineSystem:
    """The planar example: a_L(y) = 1 + y, a_R(y) = 3 - y, b_L = 1, b_R = -2.

    Stable sliding on -1 < y < 3, sliding field (1 - 3y)/4.
    """
    return PiecewiseAffineSystem.from_matrices(
        EXAMPLE_A, [1.0, 1.0], EXAMPLE_A, [-3.0, -2.0])


def example_noise(epsilon: float = 0.1) -> NoiseSpec:
    return NoiseSpec(epsilon, np.diag([1.0, 0.1]))
