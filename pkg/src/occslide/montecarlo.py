"""Seeded Euler-Maruyama simulation and the distance metrics used to compare
simulated and analytic densities.

Random numbers come from a counter-based generator: normal number ``j`` of
path ``i`` is a pure function of ``(seed, i, j)``.  Paths can therefore be
run in any order, on any number of threads, and still give identical bits.
"""

from __future__ import annotations

import enum
import math
import os
from dataclasses import dataclass
from typing import Callable, Optional

import numba
import numpy as np

from .errors import DomainError, MismatchedGrids, NonFinite
from .grids import DensityGrid, Histogram, build_histogram
from .occupation import TwoValuedDriftSpec
from .systems import FilippovSystem, NoiseSpec, PiecewiseAffineSystem

__all__ = [
    "Record", "SimConfig", "SimResult", "simulate_two_valued", "simulate_filippov",
    "standard_normals", "build_histogram", "Histogram", "l1_distance", "ks_distance",
    "set_num_threads",
]

# The bundled TBB is often too old for numba; try OpenMP first unless the
# user picked a layer explicitly.
if "NUMBA_THREADING_LAYER" not in os.environ and "NUMBA_THREADING_LAYER_PRIORITY" not in os.environ:
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

# ---------------------------------------------------------------------------
# counter-based RNG (splitmix64 finaliser)

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO_PI = 2.0 * math.pi
_INV_2_53 = 1.0 / 9007199254740992.0


@numba.njit(inline="always")
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@numba.njit(inline="always")
def _path_key(seed, path):
    return _mix(seed ^ _mix((np.uint64(path) + np.uint64(1)) * _GOLDEN))


@numba.njit(inline="always")
def _normal_pair(key, pair):
    """Box-Muller pair from two counter-indexed uniforms."""
    c = np.uint64(2) * np.uint64(pair)
    z1 = _mix(key + (c + np.uint64(1)) * _GOLDEN)
    z2 = _mix(key + (c + np.uint64(2)) * _GOLDEN)
    u1 = (float(z1 >> np.uint64(11)) + 1.0) * _INV_2_53  # (0, 1]
    u2 = float(z2 >> np.uint64(11)) * _INV_2_53
    r = math.sqrt(-2.0 * math.log(u1))
    return r * math.cos(_TWO_PI * u2), r * math.sin(_TWO_PI * u2)


@numba.njit(parallel=True, cache=True)
def _normals_block(seed, path0, n_paths, j0, count):
    out = np.empty((n_paths, count))
    for p in numba.prange(n_paths):
        key = _path_key(seed, path0 + p)
        for k in range(count):
            j = j0 + k
            g0, g1 = _normal_pair(key, j // 2)
            out[p, k] = g0 if j % 2 == 0 else g1
    return out


def standard_normals(seed: int, paths, start: int, count: int) -> np.ndarray:
    """Normals ``start .. start+count-1`` of each path in ``paths`` (a range).

    Exposed so that tests and pure-numpy integrators draw the exact numbers
    the compiled kernels use.
    """
    paths = range(paths) if isinstance(paths, int) else paths
    if paths.step != 1:
        raise ValueError("paths must be a contiguous range")
    return _normals_block(_seed64(seed), paths.start, len(paths), start, count)


def _seed64(seed: int) -> np.uint64:
    return np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)


def set_num_threads(n: Optional[int] = None) -> int:
    """Set numba's worker count (default: ``OCCSLIDE_NUM_THREADS`` if set)."""
    if n is None:
        env = os.environ.get("OCCSLIDE_NUM_THREADS")
        if not env:
            return numba.get_num_threads()
        n = int(env)
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n


# ---------------------------------------------------------------------------
# configuration

class Record(str, enum.Enum):
    FINAL_STATE = "final_state"
    FINAL_STATE_AND_OCCUPATION = "final_state_and_occupation"
    FULL_PATH = "full_path"


@dataclass(frozen=True)
class SimConfig:
    """Euler-Maruyama run parameters.

    The step count is ``ceil(t_final / dt)``; the final step is shortened so
    that paths end exactly at ``t_final``.
    """

    n_paths: int
    dt: float
    t_final: float
    seed: int = 0
    record: Record = Record.FINAL_STATE_AND_OCCUPATION

    def __post_init__(self):
        object.__setattr__(self, "record", Record(self.record))
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise DomainError("n_paths must be a positive integer")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise DomainError("dt must be positive")
        if not self.dt <= self.t_final:
            raise DomainError("dt must not exceed t_final")
        object.__setattr__(self, "n_paths", int(self.n_paths))

    @property
    def n_steps(self) -> int:
        n = math.ceil(self.t_final / self.dt - 1e-9)
        return max(n, 1)

    @property
    def last_step(self) -> float:
        return self.t_final - (self.n_steps - 1) * self.dt

    @property
    def times(self) -> np.ndarray:
        t = np.arange(self.n_steps + 1) * self.dt
        t[-1] = self.t_final
        return t


@dataclass
class SimResult:
    """Simulated samples.

    ``x`` has shape ``(n_paths,)``; ``y`` is ``(n_paths, N-1)`` for Filippov
    runs; ``tau`` is the occupation time of ``[0, inf)``; ``paths`` holds the
    full state history ``(n_paths, n_steps+1[, N])`` when requested.
    """

    config: SimConfig
    x: np.ndarray
    tau: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None
    paths: Optional[np.ndarray] = None

    @property
    def times(self) -> np.ndarray:
        return self.config.times


# ---------------------------------------------------------------------------
# two-valued drift

@numba.njit(inline="always")
def _occupation(n_pos, last_pos, n_steps, dt, last):
    """Occupation time from integer step counts, so that 0 and t are exact."""
    if last_pos and n_pos == n_steps - 1:
        return (n_steps - 1) * dt + last if n_steps > 1 else last
    return n_pos * dt + (last if last_pos else 0.0)


@numba.njit(parallel=True, cache=True)
def _two_valued_kernel(seed, n_paths, n_steps, dt, last, x0, aL, aR, sigma, full):
    xs = np.empty(n_paths)
    taus = np.empty(n_paths)
    hist = np.empty((n_paths if full else 0, n_steps + 1))
    for p in numba.prange(n_paths):
        key = _path_key(seed, p)
        x = x0
        n_pos = 0
        last_pos = False
        g1 = 0.0
        if full:
            hist[p, 0] = x
        for k in range(n_steps):
            h = dt if k < n_steps - 1 else last
            if k % 2 == 0:
                g, g1 = _normal_pair(key, k // 2)
            else:
                g = g1
            if x >= 0.0:
                if k < n_steps - 1:
                    n_pos += 1
                else:
                    last_pos = True
                x += -aR * h + sigma * math.sqrt(h) * g
            else:
                x += aL * h + sigma * math.sqrt(h) * g
            if full:
                hist[p, k + 1] = x
        xs[p] = x
        taus[p] = _occupation(n_pos, last_pos, n_steps, dt, last)
    return xs, taus, hist


def simulate_two_valued(spec: TwoValuedDriftSpec, cfg: SimConfig) -> SimResult:
    """Euler-Maruyama for ``dx = drift(x) dt + sqrt(c) dW`` with the two-valued drift.

    ``drift = a_L`` for ``x < 0`` and ``-a_R`` for ``x >= 0``; the occupation
    time accumulates ``h`` whenever the pre-step state is ``>= 0``.  The time
    horizon is ``cfg.t_final``.
    """
    set_num_threads()
    full = cfg.record is Record.FULL_PATH
    xs, taus, hist = _two_valued_kernel(
        _seed64(cfg.seed), cfg.n_paths, cfg.n_steps, float(cfg.dt), float(cfg.last_step),
        float(spec.x0), float(spec.a_L), float(spec.a_R), math.sqrt(spec.diffusion_scale), full)
    np.clip(taus, 0.0, cfg.t_final, out=taus)
    return SimResult(
        cfg, xs,
        tau=None if cfg.record is Record.FINAL_STATE else taus,
        paths=hist if full else None)


# ---------------------------------------------------------------------------
# Filippov systems

@numba.njit(parallel=True, cache=True)
def _affine_kernel(seed, n_paths, n_steps, dt, last, z0, AL, cL, AR, cR, S, full):
    n = z0.size
    out = np.empty((n_paths, n))
    taus = np.empty(n_paths)
    hist = np.empty((n_paths if full else 0, n_steps + 1, n))
    for p in numba.prange(n_paths):
        key = _path_key(seed, p)
        z = z0.copy()
        g = np.empty(n)
        dz = np.empty(n)
        n_pos = 0
        last_pos = False
        if full:
            hist[p, 0, :] = z
        for k in range(n_steps):
            h = dt if k < n_steps - 1 else last
            base = k * n
            j = base
            while j < base + n:
                g0, g1 = _normal_pair(key, j // 2)
                if j % 2 == 0:
                    g[j - base] = g0
                    if j + 1 < base + n:
                        g[j + 1 - base] = g1
                    j += 2
                else:
                    g[j - base] = g1
                    j += 1
            right = z[0] >= 0.0
            if right:
                if k < n_steps - 1:
                    n_pos += 1
                else:
                    last_pos = True
            sq = math.sqrt(h)
            for i in range(n):
                acc = 0.0
                if right:
                    for m in range(n):
                        acc += AR[i, m] * z[m]
                    acc += cR[i]
                else:
                    for m in range(n):
                        acc += AL[i, m] * z[m]
                    acc += cL[i]
                noise = 0.0
                for m in range(n):
                    noise += S[i, m] * g[m]
                dz[i] = acc * h + sq * noise
            finite = True
            for i in range(n):
                z[i] += dz[i]
                if not math.isfinite(z[i]):
                    finite = False
            if full:
                hist[p, k + 1, :] = z
            if not finite:
                break
        out[p, :] = z
        taus[p] = _occupation(n_pos, last_pos, n_steps, dt, last)
    return out, taus, hist


def _first_bad(z: np.ndarray) -> Optional[int]:
    bad = ~np.isfinite(z).reshape(z.shape[0], -1).all(axis=1)
    return int(np.argmax(bad)) if bad.any() else None


def simulate_filippov(system: FilippovSystem, noise: NoiseSpec, y0, cfg: SimConfig,
                      x0: float = 0.0) -> SimResult:
    """Euler-Maruyama for ``dz = f(z) dt + sqrt(eps) D dW`` from ``(x0, y0)``.

    Piecewise-affine systems run in a compiled kernel; other systems run a
    vectorised numpy loop over paths that draws the same normal numbers, so
    the two paths agree to rounding for the same affine system.

    Raises
    ------
    NonFinite
        If any path overflows; ``index`` is the first offending path.
    """
    if not noise.epsilon > 0:
        raise DomainError("epsilon = 0 is not supported by the simulator")
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    n = system.dim
    if y0.size != n - 1 or noise.dim != n:
        raise DomainError(f"dimension mismatch: system N={n}, y0 has {y0.size}, D is {noise.dim}")
    z0 = np.concatenate([[float(x0)], y0])
    S = math.sqrt(noise.epsilon) * noise.D
    full = cfg.record is Record.FULL_PATH
    set_num_threads()
    if isinstance(system, PiecewiseAffineSystem) and system.A_L is not None:
        z, taus, hist = _affine_kernel(
            _seed64(cfg.seed), cfg.n_paths, cfg.n_steps, float(cfg.dt), float(cfg.last_step),
            z0, system.A_L, system.c_L, system.A_R, system.c_R, S, full)
    else:
        z, taus, hist = _generic_filippov(system, S, z0, cfg, full)
    bad = _first_bad(z)
    if bad is not None:
        raise NonFinite(f"simulated path {bad} diverged", index=bad)
    return SimResult(
        cfg, z[:, 0].copy(), y=z[:, 1:].copy(),
        tau=None if cfg.record is Record.FINAL_STATE else taus,
        paths=hist if full else None)


def _generic_filippov(system, S, z0, cfg, full, chunk: int = 64):
    n = z0.size
    npaths = cfg.n_paths
    z = np.tile(z0, (npaths, 1))
    n_pos = np.zeros(npaths, dtype=np.int64)
    last_pos = np.zeros(npaths, dtype=bool)
    hist = np.empty((npaths, cfg.n_steps + 1, n)) if full else None
    if full:
        hist[:, 0] = z
    seed = _seed64(cfg.seed)
    for k0 in range(0, cfg.n_steps, chunk):
        kk = min(chunk, cfg.n_steps - k0)
        g = _normals_block(seed, 0, npaths, k0 * n, kk * n).reshape(npaths, kk, n)
        for i in range(kk):
            k = k0 + i
            h = cfg.dt if k < cfg.n_steps - 1 else cfg.last_step
            right = z[:, 0] >= 0
            if k < cfg.n_steps - 1:
                n_pos += right
            else:
                last_pos = right
            with np.errstate(all="ignore"):
                z = z + system.drift(z) * h + math.sqrt(h) * g[:, i] @ S.T
            if full:
                hist[:, k + 1] = z
        if not np.isfinite(z).all():
            break
    steps, dt, last = cfg.n_steps, cfg.dt, cfg.last_step
    tau = n_pos * dt + np.where(last_pos, last, 0.0)
    tau[last_pos & (n_pos == steps - 1)] = (steps - 1) * dt + last
    return z, tau, hist


# ---------------------------------------------------------------------------
# distances

def _interp_zero(x, xp, fp):
    return np.interp(x, xp, fp, left=0.0, right=0.0)


def l1_distance(a: DensityGrid, b: DensityGrid) -> float:
    """Trapezoid integral of ``|a - b|``.

    Grids on different abscissae are resampled by linear interpolation onto
    the union of both grids; each density counts as zero outside its own
    support.
    """
    xa, xb = a.abscissae, b.abscissae
    if xa.shape == xb.shape and np.array_equal(xa, xb):
        return float(np.trapezoid(np.abs(a.values - b.values), xa))
    if xa[-1] < xb[0] or xb[-1] < xa[0]:
        raise MismatchedGrids(
            f"disjoint supports [{xa[0]:g}, {xa[-1]:g}] and [{xb[0]:g}, {xb[-1]:g}]")
    x = np.union1d(xa, xb)
    va = _interp_zero(x, xa, a.values)
    vb = _interp_zero(x, xb, b.values)
    return float(np.trapezoid(np.abs(va - vb), x))


def ks_distance(samples, cdf: Callable) -> float:
    """Two-sided Kolmogorov-Smirnov statistic of ``samples`` against ``cdf``.

    Ties are handled by comparing at each distinct sample value both the
    right limits and the left limits ``F(u-)``, taken as ``cdf`` at the next
    float below ``u``; this keeps the statistic meaningful for laws with
    atoms.
    """
    s = np.asarray(samples, dtype=float).ravel()
    n = s.size
    if n == 0:
        raise DomainError("no samples")
    u, counts = np.unique(s, return_counts=True)
    right = np.cumsum(counts) / n
    left = right - counts / n
    f_right = np.asarray(cdf(u), dtype=float)
    f_left = np.asarray(cdf(np.nextafter(u, -np.inf)), dtype=float)
    return float(max(np.max(right - f_right), np.max(f_left - left), 0.0))
