"""Special functions, adaptive quadrature, fixed-step RK4 and Gaussian kernels.

The quadrature core is a vectorised adaptive 15-point Gauss-Kronrod scheme
that advances many independent integrals at once.  Each integral is split into
pieces; every piece carries a change of variables (``u**2`` substitutions for
inverse-square-root endpoints, a rational map for half-lines) so that the
integrand seen by the rule is bounded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import special

from .errors import NonConvergence, NonFinite, Overflow, SingularCovariance

__all__ = [
    "QuadratureSpec",
    "GaussianSpec",
    "Trajectory",
    "erfc",
    "erfcx",
    "integrate",
    "integrate_batch",
    "integrate_semi_infinite",
    "rk4_solve",
    "gaussian_pdf",
    "gaussian_logpdf",
]

SINGULARITIES = ("none", "inv_sqrt_left", "inv_sqrt_right", "inv_sqrt_both")


@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    max_subdivisions: int = 200

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("abs_tol and rel_tol must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")


DEFAULT_QUAD = QuadratureSpec()


# ---------------------------------------------------------------------------
# special functions


def erfc(x):
    """Complementary error function (scalar in, scalar out)."""
    out = special.erfc(x)
    return float(out) if np.ndim(out) == 0 else out


def erfcx(x):
    """Scaled complementary error function ``exp(x**2) * erfc(x)``.

    Finite for every ``x >= 0``.  Raises :class:`Overflow` when the value
    exceeds the double range, which happens for ``x`` below about -26.6.
    """
    out = special.erfcx(x)
    if np.any(np.isinf(out)) and np.all(np.isfinite(x)):
        raise Overflow("erfcx overflows for arguments below about -26.6")
    return float(out) if np.ndim(out) == 0 else out


def exp_erfc(log_prefactor, arg):
    """``exp(log_prefactor) * erfc(arg)`` without overflow or spurious underflow.

    For ``arg > 0`` the product is rewritten as
    ``erfcx(arg) * exp(log_prefactor - arg**2)``.
    """
    log_prefactor = np.asarray(log_prefactor, dtype=float)
    arg = np.asarray(arg, dtype=float)
    pos = arg > 0
    safe_pos = np.where(pos, arg, 0.0)
    with np.errstate(over="ignore", under="ignore"):
        out = np.where(
            pos,
            special.erfcx(safe_pos) * np.exp(log_prefactor - safe_pos * safe_pos),
            np.exp(log_prefactor) * special.erfc(np.where(pos, 0.0, arg)),
        )
    return out


# ---------------------------------------------------------------------------
# Gauss-Kronrod 15 / Gauss 7 rule (QUADPACK qk15 constants)

_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

NODES = np.concatenate([-_XGK[:-1], [0.0], _XGK[-2::-1]])
KRONROD_WEIGHTS = np.concatenate([_WGK[:-1], [_WGK[-1]], _WGK[-2::-1]])
_gauss_half = np.zeros(8)
_gauss_half[1:7:2] = _WG[:3]
_gauss_half[7] = _WG[3]
GAUSS_WEIGHTS = np.concatenate([_gauss_half[:-1], [_gauss_half[-1]], _gauss_half[-2::-1]])

_EPS = np.finfo(float).eps
_TINY = np.finfo(float).tiny

# change-of-variable kinds for quadrature pieces
_LINEAR, _SQRT_LEFT, _SQRT_RIGHT, _SEMI, _SEMI_SQRT = range(5)


def _map_nodes(u, kind, p0, p1):
    """Map rule abscissae ``u`` to integrand abscissae; return (x, jacobian)."""
    x = np.empty_like(u)
    jac = np.empty_like(u)
    m = kind == _LINEAR
    if m.any():
        x[m] = u[m]
        jac[m] = 1.0
    m = kind == _SQRT_LEFT
    if m.any():
        xs = p0[m] + u[m] * u[m]
        # keep nodes with u > 0 off the singular endpoint after rounding
        x[m] = np.where((xs == p0[m]) & (u[m] != 0), np.nextafter(p0[m], np.inf), xs)
        jac[m] = 2.0 * u[m]
    m = kind == _SQRT_RIGHT
    if m.any():
        xs = p1[m] - u[m] * u[m]
        x[m] = np.where((xs == p1[m]) & (u[m] != 0), np.nextafter(p1[m], -np.inf), xs)
        jac[m] = 2.0 * u[m]
    m = kind == _SEMI
    if m.any():
        v = 1.0 - u[m]
        x[m] = p0[m] + p1[m] * u[m] / v
        jac[m] = p1[m] / (v * v)
    m = kind == _SEMI_SQRT
    if m.any():
        v = 1.0 - u[m]
        r = u[m] / v
        x[m] = p0[m] + p1[m] * r * r
        jac[m] = 2.0 * p1[m] * u[m] / (v * v * v)
    return x, jac


@dataclass
class _Pieces:
    lo: np.ndarray
    hi: np.ndarray
    kind: np.ndarray
    p0: np.ndarray
    p1: np.ndarray
    owner: np.ndarray


def _gk15(func, pieces: _Pieces, idx, lo, hi, chunk_nodes):
    """Apply the GK15 rule on [lo, hi] (rule space) for pieces ``idx``."""
    n = lo.size
    res = np.empty(n)
    err = np.empty(n)
    per = max(1, chunk_nodes // 15)
    for s in range(0, n, per):
        sl = slice(s, min(n, s + per))
        c = 0.5 * (lo[sl] + hi[sl])
        h = 0.5 * (hi[sl] - lo[sl])
        u = c[:, None] + h[:, None] * NODES
        pid = np.repeat(idx[sl], 15)
        x, jac = _map_nodes(u.ravel(), pieces.kind[pid], pieces.p0[pid], pieces.p1[pid])
        fx = np.asarray(func(x, pieces.owner[pid]), dtype=float)
        fv = (fx * jac).reshape(-1, 15)
        # jac vanishes where a u**2 map meets its singular endpoint; 0*inf guard
        fv[~np.isfinite(fv) & (jac.reshape(-1, 15) == 0)] = 0.0
        resk = fv @ KRONROD_WEIGHTS
        resg = fv @ GAUSS_WEIGHTS
        resabs = np.abs(fv) @ KRONROD_WEIGHTS
        resasc = np.abs(fv - 0.5 * resk[:, None]) @ KRONROD_WEIGHTS
        ah = np.abs(h)
        r = resk * h
        e = np.abs((resk - resg) * h)
        resabs *= ah
        resasc *= ah
        with np.errstate(divide="ignore", invalid="ignore"):
            scaled = resasc * np.minimum(1.0, (200.0 * e / resasc) ** 1.5)
        e = np.where((resasc != 0) & (e != 0), scaled, e)
        floor = 50.0 * _EPS * resabs
        e = np.where(resabs > _TINY / (50.0 * _EPS), np.maximum(floor, e), e)
        bad = ~np.isfinite(r) | ~np.isfinite(e)
        e[bad] = np.inf
        res[sl] = r
        err[sl] = e
    return res, err


def _adapt(func, pieces: _Pieces, n_owner, spec: QuadratureSpec, where=None,
           chunk_nodes=1_500_000):
    """Advance all pieces until every owner meets its tolerance."""
    npc = pieces.lo.size
    if npc == 0:
        z = np.zeros(n_owner)
        return z, z.copy()
    pid = np.arange(npc)
    lo = pieces.lo.copy()
    hi = pieces.hi.copy()
    res, err = _gk15(func, pieces, pid, lo, hi, chunk_nodes)
    own = pieces.owner[pid]
    nsub = np.zeros(n_owner, dtype=np.int64)
    failed = np.zeros(n_owner, dtype=bool)
    while True:
        total = np.bincount(own, weights=res, minlength=n_owner)
        etot = np.bincount(own, weights=err, minlength=n_owner)
        tol = np.maximum(spec.abs_tol, spec.rel_tol * np.abs(total))
        active = (etot > tol) & ~failed
        failed |= active & (nsub >= spec.max_subdivisions)
        active &= ~failed
        if not active.any():
            break
        cnt = np.bincount(own, minlength=n_owner)
        emax = np.zeros(n_owner)
        np.maximum.at(emax, own, err)
        share = tol / np.maximum(cnt, 1)
        width_ok = (hi - lo) > 8.0 * _EPS * np.maximum(np.abs(lo), np.abs(hi)) + 1e3 * _TINY
        split = active[own] & width_ok & (err >= np.minimum(emax, share)[own]) & (err > 0)
        stuck = active & (np.bincount(own, weights=split.astype(float), minlength=n_owner) == 0)
        failed |= stuck
        if not split.any():
            continue
        nsub += np.bincount(own[split], minlength=n_owner)
        mid = 0.5 * (lo[split] + hi[split])
        cp = np.concatenate([pid[split], pid[split]])
        clo = np.concatenate([lo[split], mid])
        chi = np.concatenate([mid, hi[split]])
        cres, cerr = _gk15(func, pieces, cp, clo, chi, chunk_nodes)
        keep = ~split
        pid = np.concatenate([pid[keep], cp])
        lo = np.concatenate([lo[keep], clo])
        hi = np.concatenate([hi[keep], chi])
        res = np.concatenate([res[keep], cres])
        err = np.concatenate([err[keep], cerr])
        own = pieces.owner[pid]
    total = np.bincount(own, weights=res, minlength=n_owner)
    etot = np.bincount(own, weights=err, minlength=n_owner)
    if failed.any():
        bad = np.flatnonzero(failed)
        raise NonConvergence(
            f"{bad.size} of {n_owner} integrals exceeded {spec.max_subdivisions} "
            f"subdivisions (worst error {etot[bad].max():.3g})",
            estimate=total, error=etot, where=where,
        )
    return total, etot


def _finite_pieces(a, b, singularity, points=None):
    """Split [a_i, b_i] into pieces with the endpoint substitution attached."""
    if singularity not in SINGULARITIES:
        raise ValueError(f"unknown singularity mode {singularity!r}")
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    a, b = np.broadcast_arrays(a, b)
    n = a.size
    if points is None:
        seg_a, seg_b, seg_o = [a], [b], [np.arange(n)]
        first = np.ones(n, bool)
        last = np.ones(n, bool)
        if singularity == "inv_sqrt_both":
            m = 0.5 * (a + b)
            seg_a, seg_b = [a, m], [m, b]
            seg_o = [np.arange(n), np.arange(n)]
            first = np.r_[np.ones(n, bool), np.zeros(n, bool)]
            last = ~first
        sa = np.concatenate(seg_a)
        sb = np.concatenate(seg_b)
        so = np.concatenate(seg_o)
    else:
        sa_l, sb_l, so_l, fl, ll = [], [], [], [], []
        for i in range(n):
            pts = np.asarray(points[i], dtype=float).ravel()
            pts = np.unique(pts[(pts > a[i]) & (pts < b[i])])
            edges = np.r_[a[i], pts, b[i]]
            if singularity == "inv_sqrt_both" and edges.size == 2:
                edges = np.r_[a[i], 0.5 * (a[i] + b[i]), b[i]]
            k = edges.size - 1
            sa_l.append(edges[:-1])
            sb_l.append(edges[1:])
            so_l.append(np.full(k, i))
            f = np.zeros(k, bool)
            f[0] = True
            l_ = np.zeros(k, bool)
            l_[-1] = True
            fl.append(f)
            ll.append(l_)
        sa, sb, so = np.concatenate(sa_l), np.concatenate(sb_l), np.concatenate(so_l)
        first, last = np.concatenate(fl), np.concatenate(ll)
    keep = sb > sa
    sa, sb, so, first, last = sa[keep], sb[keep], so[keep], first[keep], last[keep]
    kind = np.full(sa.size, _LINEAR)
    lo = sa.copy()
    hi = sb.copy()
    if singularity in ("inv_sqrt_left", "inv_sqrt_both"):
        m = first
        kind[m] = _SQRT_LEFT
        lo[m] = 0.0
        hi[m] = np.sqrt(sb[m] - sa[m])
    if singularity in ("inv_sqrt_right", "inv_sqrt_both"):
        m = last & (kind == _LINEAR)
        kind[m] = _SQRT_RIGHT
        lo[m] = 0.0
        hi[m] = np.sqrt(sb[m] - sa[m])
        # a lone piece with both endpoints singular is split by the caller
    return _Pieces(lo, hi, kind, sa, sb, so), n


def integrate_batch(f, a, b, spec: Optional[QuadratureSpec] = None,
                    singularity: str = "none", points=None, where=None,
                    return_error=False):
    """Integrate many functions at once.

    ``f(x, idx)`` receives flat arrays of abscissae and of the index of the
    integral each abscissa belongs to.  ``points`` optionally gives, per
    integral, interior break points (places where the integrand has a narrow
    feature).  Zero-length intervals integrate to zero.
    """
    spec = spec or DEFAULT_QUAD
    pieces, n = _finite_pieces(a, b, singularity, points)
    total, err = _adapt(f, pieces, n, spec, where=where)
    return (total, err) if return_error else total


def integrate(f: Callable, a: float, b: float, spec: Optional[QuadratureSpec] = None,
              singularity: str = "none", points: Optional[Sequence[float]] = None,
              where=None) -> float:
    """Adaptive GK15 integral of a vectorised ``f`` over ``[a, b]``.

    ``singularity`` declares ``1/sqrt`` behaviour at an endpoint; the
    substitution ``x = a + u**2`` (or ``x = b - u**2``) is applied there before
    adaptation.
    """
    if not a < b:
        raise ValueError("integrate requires a < b")
    pts = None if points is None else [list(points)]
    try:
        out = integrate_batch(lambda x, _i: f(x), [a], [b], spec, singularity, pts, where)
    except NonConvergence as exc:
        raise NonConvergence(str(exc), estimate=float(exc.estimate[0]),
                             error=float(exc.error[0])) from None
    return float(out[0])


def _decay_scale(f, a):
    xs = np.ldexp(1.0, np.arange(-30, 41))
    with np.errstate(all="ignore"):
        v = np.abs(np.asarray(f(a + xs), dtype=float)) * xs
    v[~np.isfinite(v)] = 0.0
    if not v.any():
        return None
    return float(xs[int(np.argmax(v))])


def integrate_semi_infinite(f: Callable, a: float, spec: Optional[QuadratureSpec] = None,
                            singularity: str = "none", scale: Optional[float] = None,
                            where=None) -> float:
    """Integral of a vectorised ``f`` over ``(a, inf)``.

    The half-line is mapped onto ``(0, 1)`` by ``x = a + L u/(1-u)`` (or
    ``x = a + L (u/(1-u))**2`` when ``f`` has a ``1/sqrt`` singularity at
    ``a``).  The scale ``L`` comes from a geometric pre-scan of ``|f|`` unless
    given.
    """
    if singularity not in ("none", "inv_sqrt_left"):
        raise ValueError("semi-infinite integrals support 'none' or 'inv_sqrt_left'")
    spec = spec or DEFAULT_QUAD
    if scale is None:
        scale = _decay_scale(f, a)
        if scale is None:
            return 0.0
    kind = _SEMI if singularity == "none" else _SEMI_SQRT
    # rule space (0, 1); break at the decay scale (u = 1/2)
    pieces = _Pieces(
        lo=np.array([0.0, 0.5]), hi=np.array([0.5, 1.0]),
        kind=np.array([kind, kind]), p0=np.array([a, a]),
        p1=np.array([scale, scale]), owner=np.array([0, 0]),
    )
    try:
        total, _ = _adapt(lambda x, _i: f(x), pieces, 1, spec, where=where)
    except NonConvergence as exc:
        raise NonConvergence(str(exc), estimate=float(exc.estimate[0]),
                             error=float(exc.error[0])) from None
    return float(total[0])


# ---------------------------------------------------------------------------
# fixed-step RK4 with Hermite dense output


@dataclass
class Trajectory:
    """RK4 nodes with cubic Hermite interpolation between them."""

    t: np.ndarray
    y: np.ndarray
    dy: np.ndarray

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        tq = np.atleast_1d(t)
        if np.any(tq < self.t[0] - 1e-12) or np.any(tq > self.t[-1] + 1e-12):
            raise ValueError("query time outside the integrated interval")
        if self.t.size == 1:
            out = np.repeat(self.y[:1], tq.size, axis=0)
            return out[0] if scalar else out
        i = np.clip(np.searchsorted(self.t, tq, side="right") - 1, 0, self.t.size - 2)
        h = self.t[i + 1] - self.t[i]
        s = ((tq - self.t[i]) / h)[:, None]
        h = h[:, None]
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        out = (h00 * self.y[i] + h10 * h * self.dy[i]
               + h01 * self.y[i + 1] + h11 * h * self.dy[i + 1])
        return out[0] if scalar else out

    @property
    def final(self):
        return self.y[-1]


def rk4_solve(f: Callable, state0, t0: float, t1: float, step: float,
              project: Optional[Callable] = None) -> Trajectory:
    """Classical RK4 from ``t0`` to ``t1`` with a fixed step.

    The last step is shortened to land exactly on ``t1``.  ``project`` is
    applied to the state after every step (used to re-symmetrise matrices).
    """
    if not step > 0:
        raise ValueError("step must be positive")
    if t1 < t0:
        raise ValueError("t1 must not precede t0")
    y = np.atleast_1d(np.asarray(state0, dtype=float)).copy()
    n = int(math.ceil((t1 - t0) / step - 1e-9)) if t1 > t0 else 0
    ts = np.empty(n + 1)
    ys = np.empty((n + 1,) + y.shape)
    dys = np.empty_like(ys)
    t = t0
    ts[0], ys[0] = t, y
    k1 = np.asarray(f(t, y), dtype=float)
    dys[0] = k1
    for k in range(1, n + 1):
        tn = t1 if k == n else t0 + k * step
        h = tn - t
        k2 = np.asarray(f(t + h / 2, y + h / 2 * k1), dtype=float)
        k3 = np.asarray(f(t + h / 2, y + h / 2 * k2), dtype=float)
        k4 = np.asarray(f(tn, y + h * k3), dtype=float)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if project is not None:
            y = project(y)
        if not np.all(np.isfinite(y)):
            raise NonFinite(f"state left the floating range at t={tn:g}")
        t = tn
        k1 = np.asarray(f(t, y), dtype=float)
        ts[k], ys[k], dys[k] = t, y, k1
    return Trajectory(ts, ys, dys)


# ---------------------------------------------------------------------------
# Gaussian kernels


@dataclass(frozen=True)
class GaussianSpec:
    mean: np.ndarray
    covariance: np.ndarray
    _chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError("covariance shape does not match mean")
        scale = max(np.abs(cov).max(), _TINY)
        if np.abs(cov - cov.T).max() > 1e-12 * scale:
            raise ValueError("covariance is not symmetric")
        tr = np.trace(cov)
        if np.linalg.eigvalsh(cov).min() < -1e-12 * abs(tr):
            raise ValueError("covariance is not positive semidefinite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            chol = None
        object.__setattr__(self, "_chol", chol)

    @property
    def dim(self) -> int:
        return self.mean.size


def gaussian_logpdf(point, spec: GaussianSpec):
    """Log multivariate normal density; ``point`` is (m,) or (n, m)."""
    if spec._chol is None:
        raise SingularCovariance("covariance is not positive definite")
    x = np.asarray(point, dtype=float)
    single = x.ndim <= 1
    x = x.reshape(-1, spec.dim) - spec.mean
    z = np.linalg.solve(spec._chol, x.T)
    logdet = 2.0 * np.log(np.diag(spec._chol)).sum()
    out = -0.5 * (z * z).sum(axis=0) - 0.5 * (spec.dim * math.log(2 * math.pi) + logdet)
    return float(out[0]) if single else out


def gaussian_pdf(point, spec: GaussianSpec):
    """Multivariate normal density at ``point``."""
    return np.exp(gaussian_logpdf(point, spec))
