"""Sampled densities, histograms and their CSV form.

CSV files have a header row, comma separators, LF line endings and values
written with 17 significant digits so that a write/read round trip is exact.
"""

from __future__ import annotations

import csv
import io
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmptyRange

__all__ = ["DensityGrid", "Histogram", "read_csv", "write_csv", "atomic_write"]


def _fmt(v) -> str:
    return format(float(v), ".17g")


def atomic_write(path, data: bytes | str) -> Path:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": "", "encoding": "utf-8"})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_csv(path, header: Sequence[str], columns: Sequence[np.ndarray]) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in zip(*columns):
        w.writerow([_fmt(v) for v in row])
    return atomic_write(path, buf.getvalue())


def read_csv(path):
    """Return (header, dict of float columns)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = rows[0]
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(header))
    return header, {h: data[:, i] for i, h in enumerate(header)}


@dataclass
class DensityGrid:
    """A density sampled on a sorted 1-D grid."""

    axis: str
    abscissae: np.ndarray
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.abscissae = np.asarray(self.abscissae, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.abscissae.shape != self.values.shape or self.abscissae.ndim != 1:
            raise ValueError("abscissae and values must be 1-D arrays of equal length")
        if np.any(np.diff(self.abscissae) <= 0):
            raise ValueError("abscissae must be strictly increasing")

    def mass(self) -> float:
        return float(np.trapezoid(self.values, self.abscissae))

    def mean(self) -> float:
        return float(np.trapezoid(self.abscissae * self.values, self.abscissae) / self.mass())

    def std(self) -> float:
        m = self.mean()
        var = np.trapezoid((self.abscissae - m) ** 2 * self.values, self.abscissae) / self.mass()
        return float(np.sqrt(var))

    def to_csv(self, path) -> Path:
        return write_csv(path, [self.axis, "density"], [self.abscissae, self.values])

    @classmethod
    def from_csv(cls, path) -> "DensityGrid":
        header, cols = read_csv(path)
        if "left" in header:
            return Histogram.from_csv(path).as_grid()
        if len(header) != 2 or header[1] != "density":
            raise ValueError(f"{path}: expected columns '<axis>,density'")
        return cls(header[0], cols[header[0]], cols["density"])


@dataclass
class Histogram:
    """Uniform-bin histogram normalised to unit area over the in-range samples."""

    edges: np.ndarray
    counts: np.ndarray
    n_total: int
    axis: str = "value"

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def n_in_range(self) -> int:
        return int(self.counts.sum())

    @property
    def in_range_fraction(self) -> float:
        return self.n_in_range / self.n_total if self.n_total else 0.0

    @property
    def normalized_density(self) -> np.ndarray:
        n = self.n_in_range
        if n == 0:
            return np.zeros(self.counts.shape)
        return self.counts / (n * self.widths)

    def standard_error(self) -> np.ndarray:
        """Binomial standard error of each bin's density."""
        n = max(self.n_in_range, 1)
        p = self.counts / n
        return np.sqrt(p * (1 - p) / n) / self.widths

    def as_grid(self) -> DensityGrid:
        return DensityGrid(self.axis, self.centers, self.normalized_density)

    def to_csv(self, path) -> Path:
        return write_csv(
            path, ["left", "right", "center", "count", "density"],
            [self.edges[:-1], self.edges[1:], self.centers, self.counts, self.normalized_density],
        )

    @classmethod
    def from_csv(cls, path) -> "Histogram":
        header, cols = read_csv(path)
        if header[:2] != ["left", "right"]:
            raise ValueError(f"{path}: not a histogram file")
        edges = np.r_[cols["left"], cols["right"][-1:]]
        counts = cols["count"].astype(np.int64)
        return cls(edges, counts, int(counts.sum()))


def build_histogram(samples, n_bins: int, range_=None, axis: str = "value") -> Histogram:
    """Uniform bins over ``range_`` (defaults to the sample span)."""
    samples = np.asarray(samples, dtype=float).ravel()
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    if range_ is None:
        if samples.size == 0:
            raise EmptyRange("no samples and no range")
        lo, hi = float(samples.min()), float(samples.max())
        if lo == hi:
            lo, hi = lo - 0.5, hi + 0.5
    else:
        lo, hi = map(float, range_)
    if not hi > lo:
        raise EmptyRange(f"degenerate histogram range [{lo}, {hi}]")
    counts, edges = np.histogram(samples, bins=n_bins, range=(lo, hi))
    return Histogram(edges, counts.astype(np.int64), samples.size, axis)
