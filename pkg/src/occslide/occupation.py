"""Positive occupation time of Brownian motion with two-valued drift.

The process is ``dx = a_L dt + dW`` for ``x < 0`` and ``dx = -a_R dt + dW`` for
``x > 0``; the occupation time is the time spent in ``[0, inf)`` up to ``t``.
All density functions accept NumPy arrays for ``tau`` and return arrays of
the same shape (floats for scalar input).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy import special
from scipy.interpolate import PchipInterpolator

from .errors import DomainError, NegativeDensityWarning
from .numerics import QuadratureSpec, exp_erfc, integrate, integrate_batch

__all__ = [
    "TwoValuedDriftSpec",
    "OccupationDensity",
    "OccupationValue",
    "arcsine_pdf",
    "constant_drift_pdf",
    "fcal",
    "first_passage_pdf",
    "first_passage_survival",
    "gcal",
    "occupation_density",
    "occupation_pdf_general",
    "occupation_pdf_longtime",
    "occupation_pdf_zero",
]

SQRT2 = math.sqrt(2.0)
SQRTPI = math.sqrt(math.pi)
CLAMP_SLACK = 1e-10

# inner integrals feed differences of O(1) terms, so they run tighter than
# the package default
FCAL_QUAD = QuadratureSpec(abs_tol=1e-12, rel_tol=1e-10, max_subdivisions=200)
CONV_QUAD = QuadratureSpec(abs_tol=1e-10, rel_tol=1e-8, max_subdivisions=200)


@dataclass(frozen=True)
class TwoValuedDriftSpec:
    a_L: float
    a_R: float
    x0: float = 0.0
    t: float = 1.0
    diffusion_scale: float = 1.0

    def __post_init__(self):
        for name in ("a_L", "a_R", "x0", "t", "diffusion_scale"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise DomainError(f"{name} must be finite")
            object.__setattr__(self, name, float(v))
        if self.t <= 0:
            raise DomainError("t must be positive")
        if self.diffusion_scale <= 0:
            raise DomainError("diffusion_scale must be positive")

    def swapped(self) -> "TwoValuedDriftSpec":
        """The mirror image under x -> -x."""
        return TwoValuedDriftSpec(self.a_R, self.a_L, -self.x0, self.t, self.diffusion_scale)


def _out(values, like):
    return float(values) if np.ndim(like) == 0 else values


def _check_open(tau, t):
    tau = np.asarray(tau, dtype=float)
    if np.any(~((tau > 0) & (tau < t))):
        raise DomainError(f"tau must lie in (0, {t:g})")
    return tau


# ---------------------------------------------------------------------------
# closed forms


def arcsine_pdf(tau, t):
    """Occupation-time density of driftless Brownian motion."""
    tau_a = _check_open(tau, t)
    return _out(1.0 / (math.pi * np.sqrt(tau_a * (t - tau_a))), tau)


def constant_drift_pdf(tau, t, a):
    """Occupation-time density for constant drift ``a`` (the case a_L = -a_R = -a)."""
    tau_a = _check_open(tau, t)
    v = t - tau_a
    left = np.exp(-a * a * tau_a / 2) / np.sqrt(math.pi * tau_a) \
        - a / SQRT2 * special.erfc(a * np.sqrt(tau_a) / SQRT2)
    right = np.exp(-a * a * v / 2) / np.sqrt(math.pi * v) \
        + a / SQRT2 * special.erfc(-a * np.sqrt(v) / SQRT2)
    return _out(left * right, tau)


# ---------------------------------------------------------------------------
# exact density from the origin


def _fcal_arrays(tau, t, a_L, a_R, quad):
    """F(tau; t; a_L, a_R) for flat arrays ``tau``, ``t`` (0 < tau < t)."""
    pref = a_L * (2 * a_L + a_R) / (2 * SQRTPI)
    if pref == 0 or tau.size == 0:
        return np.zeros(tau.shape)
    s = a_L + a_R

    def integrand(z, i):
        tz = tau[i]
        zt = z + tz
        first = -np.sqrt(tz) * np.exp(-a_R * a_R * tz / 2 - a_L * a_L * z / 2) \
            / (SQRTPI * np.sqrt(z) * zt)
        d = a_L * z - a_R * tz
        second = d / (SQRT2 * zt ** 1.5) * exp_erfc(
            -d * d / (2 * zt), -s * np.sqrt(z * tz) / np.sqrt(2 * zt))
        return first + second

    val = integrate_batch(integrand, np.zeros_like(tau), t - tau, quad,
                          singularity="inv_sqrt_left", where="fcal z-integral")
    return pref * val


def fcal(tau, t, a_L, a_R, quad: Optional[QuadratureSpec] = None):
    """The integral term F(tau; t; a_L, a_R) of the exact occupation density.

    The ``1/sqrt(z)`` endpoint behaviour is removed by ``z = w**2``; the
    exponential-erfc product in the second piece is evaluated in erfcx form
    when its erfc argument is positive.
    """
    tau_a = _check_open(tau, t)
    flat = tau_a.ravel()
    vals = _fcal_arrays(flat, np.full(flat.shape, float(t)), float(a_L), float(a_R),
                        quad or FCAL_QUAD)
    return _out(vals.reshape(tau_a.shape), tau)


def _p_zero_arrays(tau, t, a_L, a_R, quad):
    """Exact density at x0 = 0 for flat arrays; zero outside [0, t], inf at endpoints."""
    tau, t = np.broadcast_arrays(np.asarray(tau, float), np.asarray(t, float))
    tau = tau.ravel()
    t = t.ravel()
    out = np.zeros(tau.shape)
    inside = (tau > 0) & (tau < t)
    out[((tau == 0) | (tau == t)) & (t > 0)] = np.inf
    if not inside.any():
        return out
    ta = tau[inside]
    tt = t[inside]
    v = tt - ta
    s = a_L + a_R
    with np.errstate(under="ignore"):
        t1 = np.exp(-a_L * a_L * v / 2 - a_R * a_R * ta / 2) / (math.pi * np.sqrt(ta * v))
        t2 = -a_R * exp_erfc(-a_L * a_L * v / 2, a_R * np.sqrt(ta) / SQRT2) \
            / np.sqrt(2 * math.pi * v)
        t3 = -a_L * exp_erfc(-a_R * a_R * ta / 2, a_L * np.sqrt(v) / SQRT2) \
            / np.sqrt(2 * math.pi * ta)
        t4 = SQRT2 * s / np.sqrt(math.pi * tt) * exp_erfc(
            -(s * ta - a_L * tt) ** 2 / (2 * tt), -s * np.sqrt(ta * v) / np.sqrt(2 * tt))
    f1 = _fcal_arrays(ta, tt, a_L, a_R, quad)
    f2 = _fcal_arrays(v, tt, a_R, a_L, quad)
    p = t1 + t2 + t3 + t4 + f1 + f2
    neg = p < -CLAMP_SLACK
    if neg.any():
        warnings.warn(
            f"occupation density {p[neg].min():.3e} below the clamp slack; "
            "tighten the quadrature tolerance", NegativeDensityWarning, stacklevel=3)
    out[inside] = np.maximum(p, 0.0)
    return out


def occupation_pdf_zero(tau, spec: TwoValuedDriftSpec, quad: Optional[QuadratureSpec] = None):
    """Exact density of the positive occupation time for a path started at 0.

    Parameters
    ----------
    tau : float or array
        Occupation times in ``(0, spec.t)``.  Exact endpoints return ``inf``.
    spec : TwoValuedDriftSpec
        Must have ``x0 == 0`` and unit ``diffusion_scale``; use
        :func:`occupation_pdf_general` or the scaled form otherwise.
    quad : QuadratureSpec, optional
        Tolerances of the inner F-integrals.
    """
    if spec.x0 != 0:
        raise DomainError("occupation_pdf_zero needs x0 == 0")
    if spec.diffusion_scale != 1:
        raise DomainError("rescale to unit diffusion before calling occupation_pdf_zero")
    tau_a = np.asarray(tau, dtype=float)
    if np.any((tau_a < 0) | (tau_a > spec.t)):
        raise DomainError(f"tau must lie in (0, {spec.t:g})")
    vals = _p_zero_arrays(tau_a, spec.t, spec.a_L, spec.a_R, quad or FCAL_QUAD)
    return _out(vals.reshape(tau_a.shape), tau)


# ---------------------------------------------------------------------------
# first passage and general starting points


def _h(s, x0, a):
    with np.errstate(divide="ignore", invalid="ignore", under="ignore"):
        expo = -(x0 + a * s) ** 2 / (2 * s)
        val = abs(x0) / np.sqrt(2 * math.pi * s ** 3) * np.exp(np.maximum(expo, -745.0))
    return np.where((expo < -700) | (s <= 0), 0.0, val)


def first_passage_pdf(s, x0, a):
    """Density of the first time ``dx = a dt + dW`` started at ``x0`` hits 0.

    Defective (integrates to less than one) when the drift points away from 0.
    """
    if x0 == 0:
        raise DomainError("first passage from x0 = 0 is immediate")
    s_a = np.asarray(s, dtype=float)
    if np.any(s_a <= 0):
        raise DomainError("s must be positive")
    return _out(_h(s_a, float(x0), float(a)), s)


def first_passage_survival(t, x0, a):
    """Probability that the first passage to 0 has not happened by time ``t``.

    Closed form of ``1 - int_0^t h(s; x0, a) ds`` (inverse Gaussian CDF,
    including the mass that never reaches 0).
    """
    if x0 == 0:
        raise DomainError("first passage from x0 = 0 is immediate")
    d = abs(x0)
    mu = a if x0 < 0 else -a
    t = np.asarray(t, dtype=float)
    rt = np.sqrt(2 * t)
    hit = 0.5 * special.erfc((d - mu * t) / rt) + 0.5 * exp_erfc(2 * mu * d, (mu * t + d) / rt)
    return _out(np.clip(1.0 - hit, 0.0, 1.0), t)


class OccupationValue(NamedTuple):
    density: object
    atom_at_zero: float
    atom_at_t: float


def _atoms(spec: TwoValuedDriftSpec):
    if spec.x0 < 0:
        return float(first_passage_survival(spec.t, spec.x0, spec.a_L)), 0.0
    if spec.x0 > 0:
        return 0.0, float(first_passage_survival(spec.t, spec.x0, -spec.a_R))
    return 0.0, 0.0


def _general_unit(tau, spec: TwoValuedDriftSpec, quad, conv_quad):
    """Continuous part for unit diffusion; ``tau`` flat array inside (0, t)."""
    t, x0, a_L, a_R = spec.t, spec.x0, spec.a_L, spec.a_R
    if x0 == 0:
        return _p_zero_arrays(tau, t, a_L, a_R, quad)
    out = np.zeros(tau.shape)
    inside = (tau > 0) & (tau < t)
    ta = tau[inside]
    if ta.size == 0:
        return out
    # break points where the first-passage density has its bulk
    scale = x0 * x0
    pts = [np.array([0.1 * scale, scale, 10 * scale])] * ta.size
    if x0 < 0:
        def integrand(s, i):
            return _h(s, x0, a_L) * _p_zero_arrays(ta[i], t - s, a_L, a_R, quad)
        upper = t - ta
    else:
        def integrand(s, i):
            return _h(s, x0, -a_R) * _p_zero_arrays(ta[i] - s, t - s, a_L, a_R, quad)
        upper = ta
    out[inside] = integrate_batch(integrand, np.zeros_like(ta), upper, conv_quad,
                                  singularity="inv_sqrt_right", points=pts,
                                  where="first-passage convolution")
    return out


@dataclass(frozen=True)
class OccupationDensity:
    """Occupation-time law: continuous density on (0, t) plus endpoint atoms."""

    spec: TwoValuedDriftSpec
    atom_at_zero: float
    atom_at_t: float
    quad: QuadratureSpec = field(default=FCAL_QUAD, repr=False)
    conv_quad: QuadratureSpec = field(default=CONV_QUAD, repr=False)

    def pdf(self, tau):
        """Continuous part of the density; zero outside ``(0, t)``."""
        sp = self.spec
        tau_a = np.asarray(tau, dtype=float)
        flat = tau_a.ravel()
        if sp.diffusion_scale != 1:
            c = sp.diffusion_scale
            unit = TwoValuedDriftSpec(sp.a_L, sp.a_R, sp.x0 / c, sp.t / c)
            vals = _general_unit(flat / c, unit, self.quad, self.conv_quad) / c
        else:
            vals = _general_unit(flat, sp, self.quad, self.conv_quad)
        return _out(vals.reshape(tau_a.shape), tau)

    __call__ = pdf

    def continuous_mass(self) -> float:
        return integrate(self.pdf, 0.0, self.spec.t, self.conv_quad,
                         singularity="inv_sqrt_both", where="occupation mass")

    def mass(self) -> float:
        """Atoms plus the integral of the continuous part (ideally 1)."""
        return self.atom_at_zero + self.atom_at_t + self.continuous_mass()

    def moment(self, k: int) -> float:
        t = self.spec.t
        cont = integrate(lambda x: x ** k * self.pdf(x), 0.0, t, self.conv_quad,
                         singularity="inv_sqrt_both")
        return cont + self.atom_at_t * t ** k + (self.atom_at_zero if k == 0 else 0.0)

    def mean(self) -> float:
        return self.moment(1)

    def std(self) -> float:
        m = self.mean()
        return math.sqrt(max(self.moment(2) - m * m, 0.0))

    def cdf(self, tau):
        """P(occupation time <= tau), evaluated on sorted pieces in one batch."""
        t = self.spec.t
        tau_a = np.asarray(tau, dtype=float)
        flat = np.clip(tau_a.ravel(), 0.0, t)
        grid = np.unique(np.r_[0.0, flat, t])
        pieces = integrate_batch(lambda x, _i: self.pdf(x), grid[:-1], grid[1:],
                                 self.conv_quad, singularity="inv_sqrt_both",
                                 where="occupation cdf")
        cum = np.r_[0.0, np.cumsum(pieces)] + self.atom_at_zero
        vals = cum[np.searchsorted(grid, flat)]
        vals = np.where(flat >= t, vals + self.atom_at_t, vals)
        vals = np.where(tau_a.ravel() < 0, 0.0, vals)
        return _out(np.clip(vals, 0.0, 1.0).reshape(tau_a.shape), tau)


    def cdf_table(self, n_panels: int = 128, order: int = 6):
        """Fast CDF interpolant for many evaluation points.

        With ``tau = t sin(theta)^2`` the integrand ``p(tau) dtau/dtheta`` is
        bounded, so Gauss-Legendre panels in ``theta`` give accurate
        cumulative sums at the panel edges; a monotone cubic interpolates in
        between.  Returns a vectorised callable.
        """
        t = self.spec.t
        edges = np.linspace(0.0, math.pi / 2, n_panels + 1)
        u, w = np.polynomial.legendre.leggauss(order)
        half = 0.5 * np.diff(edges)
        theta = (0.5 * (edges[1:] + edges[:-1]))[:, None] + half[:, None] * u
        jac = 2 * t * np.sin(theta) * np.cos(theta)
        vals = self.pdf(t * np.sin(theta) ** 2) * jac
        panel = (vals * w).sum(axis=1) * half
        cum = np.r_[0.0, np.cumsum(panel)] + self.atom_at_zero
        interp = PchipInterpolator(edges, np.maximum.accumulate(cum))
        a_t = self.atom_at_t

        def cdf(tau):
            tau_a = np.asarray(tau, dtype=float)
            th = np.arcsin(np.sqrt(np.clip(tau_a / t, 0.0, 1.0)))
            out = interp(th) + np.where(tau_a >= t, a_t, 0.0)
            out = np.where(tau_a < 0, 0.0, np.clip(out, 0.0, 1.0))
            return float(out) if out.ndim == 0 else out

        return cdf


def occupation_density(spec: TwoValuedDriftSpec, quad: Optional[QuadratureSpec] = None,
                       conv_quad: Optional[QuadratureSpec] = None) -> OccupationDensity:
    """Occupation-time law for any starting point (atoms in closed form)."""
    if spec.diffusion_scale != 1:
        c = spec.diffusion_scale
        a0, at = _atoms(TwoValuedDriftSpec(spec.a_L, spec.a_R, spec.x0 / c, spec.t / c))
    else:
        a0, at = _atoms(spec)
    return OccupationDensity(spec, a0, at, quad or FCAL_QUAD, conv_quad or CONV_QUAD)


def occupation_pdf_general(tau, spec: TwoValuedDriftSpec,
                           quad: Optional[QuadratureSpec] = None) -> OccupationValue:
    """Density at ``tau`` for any ``x0``, plus the atoms at 0 and t.

    A path started below 0 that never reaches 0 by time t contributes an atom
    at 0; one started above 0 contributes an atom at t.
    """
    tau_a = np.asarray(tau, dtype=float)
    if np.any((tau_a < 0) | (tau_a > spec.t)):
        raise DomainError(f"tau must lie in [0, {spec.t:g}]")
    dens = occupation_density(spec, quad)
    return OccupationValue(dens.pdf(tau), dens.atom_at_zero, dens.atom_at_t)


# ---------------------------------------------------------------------------
# long-time asymptotics


def gcal(tau, a_L, a_R):
    """Long-time limit G(tau; a_L, a_R) of the density near tau = 0 (a_L < 0)."""
    if not a_L < 0:
        raise DomainError("G is defined for a_L < 0")
    tau_a = np.asarray(tau, dtype=float)
    if np.any(tau_a <= 0):
        raise DomainError("tau must be positive")
    with np.errstate(under="ignore"):
        first = -SQRT2 * a_L / np.sqrt(math.pi * tau_a) * np.exp(-a_R * a_R * tau_a / 2)
        second = -a_L * (2 * a_L + a_R) * exp_erfc(
            2 * a_L * (a_L + a_R) * tau_a, -(2 * a_L + a_R) * np.sqrt(tau_a) / SQRT2)
    return _out(first + second, tau)


def occupation_pdf_longtime(tau, t, a_L, a_R):
    """Large-t approximation of the x0 = 0 density, by the signs of the drifts."""
    if a_L == 0 or a_R == 0:
        raise DomainError("long-time form needs a_L != 0 and a_R != 0")
    if not t > 0:
        raise DomainError("t must be positive")
    tau_a = _check_open(tau, t)
    if a_L > 0 and a_R > 0:
        s = a_L + a_R
        vals = s / math.sqrt(2 * math.pi * t) * np.exp(-(s * tau_a - a_L * t) ** 2 / (2 * t))
    elif a_L < 0 < a_R:
        vals = gcal(tau_a, a_L, a_R)
    elif a_R < 0 < a_L:
        vals = gcal(t - tau_a, a_R, a_L)
    else:
        vals = gcal(tau_a, a_L, a_R) + gcal(t - tau_a, a_R, a_L)
    return _out(np.asarray(vals), tau)
