"""Scattering intensities on the reciprocal lattice and their Monte-Carlo diagnostics."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from ._backend import kernels
from .core import PointPattern, WaveGrid, WaveVector


class EmptyPatternError(ValueError):
    """The scattering intensity of a pattern without points is undefined."""


@dataclass(frozen=True)
class SpectralSample:
    """Scattering intensities ``x`` at squared wave numbers ``kappa``, in grid order."""

    kappa: np.ndarray
    x: np.ndarray
    dim: int | None = None
    box_length: float | None = None
    cutoff: float | None = None
    source: str = field(default="", compare=False)

    def __post_init__(self):
        kappa = np.array(self.kappa, dtype=float).ravel()
        x = np.array(self.x, dtype=float).ravel()
        if kappa.shape != x.shape:
            raise ValueError("kappa and x must have equal length")
        if not np.all(np.isfinite(kappa) & (kappa > 0)):
            raise ValueError("kappa must be positive and finite")
        if not np.all(np.isfinite(x) & (x >= 0)):
            raise ValueError("x must be non-negative and finite")
        kappa.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "x", x)

    def __len__(self) -> int:
        return self.kappa.size

    def scaled(self, r: float) -> "SpectralSample":
        return SpectralSample(self.kappa, r * self.x, self.dim, self.box_length,
                              self.cutoff, self.source)

    def subset(self, mask) -> "SpectralSample":
        mask = np.asarray(mask)
        return SpectralSample(self.kappa[mask], self.x[mask], self.dim, self.box_length,
                              self.cutoff, self.source)


def _meta_lines(sample: SpectralSample) -> list[str]:
    out = []
    for key in ("dim", "box_length", "cutoff", "source"):
        val = getattr(sample, key)
        if val not in (None, ""):
            out.append(f"{key}={val}")
    return out


def write_sample(path, sample: SpectralSample, header: Iterable[str] = ()) -> None:
    """Write the ``kappa,x`` CSV to a path or an open text stream.

    ``header`` lines and the sample metadata become '#' comments.
    """
    if hasattr(path, "write"):
        _write_sample(path, sample, header)
        return
    with open(Path(path), "w") as fh:
        _write_sample(fh, sample, header)


def _write_sample(fh, sample, header):
    for h in list(header) + _meta_lines(sample):
        fh.write(f"# {h}\n")
    fh.write("kappa,x\n")
    for k, v in zip(sample.kappa, sample.x):
        fh.write(f"{float(k)!r},{float(v)!r}\n")


def read_sample(path) -> SpectralSample:
    meta: dict[str, str] = {}
    kappa, x = [], []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, sep, val = line[1:].strip().partition("=")
                if sep and key in ("dim", "box_length", "cutoff", "source"):
                    meta[key] = val
                continue
            if line.replace(" ", "") == "kappa,x":
                continue
            a, b = line.split(",")
            kappa.append(float(a))
            x.append(float(b))
    if not kappa:
        raise ValueError(f"{path}: no kappa,x rows")
    return SpectralSample(
        kappa, x,
        dim=int(meta["dim"]) if "dim" in meta else None,
        box_length=float(meta["box_length"]) if "box_length" in meta else None,
        cutoff=float(meta["cutoff"]) if "cutoff" in meta else None,
        source=meta.get("source", str(path)),
    )


def _check_vector(pattern: PointPattern, k: WaveVector) -> np.ndarray:
    idx = np.asarray(k.index, dtype=float).reshape(1, -1)
    if idx.shape[1] != pattern.dim:
        raise ValueError("wave vector dimension differs from the pattern")
    if k.box_length != pattern.box_length:
        raise ValueError("wave vector is not on the pattern's reciprocal lattice")
    if not np.any(idx):
        raise ValueError("k = 0 is not admissible")
    return idx


def _sums(pattern: PointPattern, idx: np.ndarray):
    # evaluate at the half-space representative of +-k and conjugate back, so the
    # two members of a pair see bit-identical phases
    first = idx[np.arange(idx.shape[0]), (idx != 0).argmax(axis=1)]
    flip = np.where(first < 0, -1.0, 1.0)
    re, im = kernels.structure_sums(pattern.points, idx * flip[:, None], pattern.box_length)
    return re, im * flip


def tapered_transform(pattern: PointPattern, k: WaveVector) -> complex:
    """``r^{-d/2} sum_x exp(-i <k, x>)`` for the box taper on ``[0, r)^d``."""
    idx = _check_vector(pattern, k)
    re, im = _sums(pattern, idx)
    return complex(re[0], im[0]) * pattern.box_length ** (-pattern.dim / 2)


def scattering_intensity(pattern: PointPattern, k: WaveVector) -> float:
    """``|sum_x exp(-i <k, x>)|^2 / N`` at a nonzero reciprocal-lattice vector."""
    if len(pattern) == 0:
        raise EmptyPatternError("scattering intensity of an empty pattern")
    idx = _check_vector(pattern, k)
    re, im = _sums(pattern, idx)
    return float((re[0] ** 2 + im[0] ** 2) / len(pattern))


def scattering_intensities(pattern: PointPattern, grid: WaveGrid) -> np.ndarray:
    """Vectorised :func:`scattering_intensity` over a whole grid."""
    if len(pattern) == 0:
        raise EmptyPatternError("scattering intensity of an empty pattern")
    if grid.dim != pattern.dim or grid.box_length != pattern.box_length:
        raise ValueError(
            f"grid (d={grid.dim}, L={grid.box_length}) does not match "
            f"pattern (d={pattern.dim}, L={pattern.box_length})"
        )
    re, im = _sums(pattern, grid.indices)
    return (re * re + im * im) / len(pattern)


def spectral_sample(pattern: PointPattern, grid: WaveGrid, source: str = "") -> SpectralSample:
    x = scattering_intensities(pattern, grid)
    return SpectralSample(grid.kappas, x, grid.dim, grid.box_length, grid.cutoff, source)


def scaled_ccdf(samples, z=None, points: int = 200):
    """Complementary ECDF of ``samples / mean(samples)``, returned as ``(z, ccdf)``.

    The default ``z`` grid is 0 followed by ``points`` log-spaced values from
    1e-3 up to the largest scaled sample.
    """
    v = np.asarray(samples, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("no samples")
    mean = v.mean()
    if not mean > 0:
        raise ValueError("samples must have positive mean")
    v = np.sort(v / mean)
    if z is None:
        top = max(v[-1], 1.0)
        z = np.concatenate(([0.0], np.geomspace(1e-3, top, points)))
    z = np.asarray(z, dtype=float)
    frac = 1.0 - np.searchsorted(v, z, side="right") / v.size
    return z, frac


def ks_exponential(samples, scale: float | None = None) -> float:
    """Kolmogorov-Smirnov distance between ``samples / scale`` and Exp(1).

    ``scale`` defaults to the sample mean.
    """
    v = np.sort(np.asarray(samples, dtype=float).ravel())
    if scale is None:
        scale = v.mean()
    cdf = -np.expm1(-v / scale)
    n = v.size
    upper = np.arange(1, n + 1) / n - cdf
    lower = cdf - np.arange(n) / n
    return float(max(upper.max(), lower.max()))


def cross_correlation(matrix) -> np.ndarray:
    """Pearson correlation between columns (wave vectors) across rows (replicates)."""
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[1] < 2:
        raise ValueError("need at least two columns")
    if m.shape[0] < 100:
        raise ValueError("need at least 100 replicates")
    c = m - m.mean(axis=0)
    sd = np.sqrt((c * c).sum(axis=0))
    if np.any(sd == 0):
        raise ValueError("a column has zero variance")
    c /= sd
    r = c.T @ c
    np.fill_diagonal(r, 1.0)
    return np.clip(r, -1.0, 1.0)
