"""Torus geometry, reciprocal-lattice wave vectors and the point-pattern file format."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np


class EmptyGridError(ValueError):
    """No admissible wave vector lies below the cutoff."""


@dataclass(frozen=True)
class PointPattern:
    """Finite point set on the flat torus ``[0, L)^d``.

    Coordinates are stored in ``[0, L)`` rather than in a centred cube. For
    reciprocal-lattice wave vectors the shift only multiplies the Fourier sum
    by a unit-modulus constant, so every intensity is unchanged.
    """

    box_length: float
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2 or pts.shape[1] < 1:
            raise ValueError("points must be an (N, d) array")
        if not self.box_length > 0:
            raise ValueError("box_length must be positive")
        if pts.size and (pts.min() < 0.0 or pts.max() >= self.box_length):
            raise ValueError("coordinates must lie in [0, L)")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "box_length", float(self.box_length))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    @classmethod
    def wrap(cls, box_length: float, points) -> "PointPattern":
        """Build a pattern after reducing coordinates modulo ``box_length``."""
        pts = np.mod(np.asarray(points, dtype=float), box_length)
        # mod can round up to exactly L for tiny negative inputs
        pts[pts >= box_length] = 0.0
        return cls(box_length, pts)


@dataclass(frozen=True)
class WaveVector:
    index: tuple[int, ...]
    box_length: float

    @property
    def components(self) -> np.ndarray:
        return 2.0 * np.pi * np.asarray(self.index, dtype=float) / self.box_length

    @property
    def kappa(self) -> float:
        return float((2.0 * np.pi / self.box_length) ** 2 * sum(n * n for n in self.index))


@dataclass(frozen=True)
class WaveGrid:
    """Half-space of reciprocal-lattice vectors with ``|k| < cutoff``, in lexicographic order."""

    dim: int
    box_length: float
    cutoff: float
    indices: np.ndarray = field(repr=False)

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1, self.dim)
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return self.indices.shape[0]

    @property
    def kappas(self) -> np.ndarray:
        tau2 = (2.0 * np.pi / self.box_length) ** 2
        return tau2 * (self.indices ** 2).sum(axis=1).astype(float)

    @property
    def vectors(self) -> list[WaveVector]:
        return [WaveVector(tuple(int(v) for v in row), self.box_length) for row in self.indices]


def build_wave_grid(dim: int, box_length: float, cutoff: float) -> WaveGrid:
    """Enumerate ``n != 0`` with ``|2 pi n / L| < cutoff`` and first nonzero entry positive."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if not box_length > 0 or not cutoff > 0:
        raise ValueError("box_length and cutoff must be positive")
    tau = 2.0 * math.pi / box_length
    nmax = int(math.floor(cutoff / tau))
    limit = (cutoff / tau) ** 2
    axis = np.arange(-nmax, nmax + 1)
    grids = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    norm2 = (grids ** 2).sum(axis=1)
    keep = (norm2 > 0) & (norm2 < limit)
    # keep one of each +-n pair: first nonzero component positive
    cand = grids[keep]
    nz = cand != 0
    first = cand[np.arange(cand.shape[0]), nz.argmax(axis=1)]
    cand = cand[first > 0]
    # meshgrid in ij order already enumerates lexicographically
    if cand.shape[0] == 0:
        raise EmptyGridError(
            f"no wave vector with |k| < {cutoff} for L = {box_length} (need cutoff > 2 pi / L)"
        )
    return WaveGrid(dim, float(box_length), float(cutoff), cand)


def torus_diff(a, b, box_length: float) -> np.ndarray:
    """Minimal-image difference ``a - b`` with every component in ``[-L/2, L/2)``."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return d - box_length * np.floor(d / box_length + 0.5)


# ---------------------------------------------------------------------------
# text format: first line "d L", then one point per line; '#' starts a comment


def _data_lines(lines: Iterable[str]):
    for line in lines:
        body = line.split("#", 1)[0].strip()
        if body:
            yield body


def read_pattern(path) -> PointPattern:
    with open(path) as fh:
        rows = list(_data_lines(fh))
    if not rows:
        raise ValueError(f"{path}: missing header line 'd L'")
    head = rows[0].split()
    if len(head) != 2:
        raise ValueError(f"{path}: header must be 'd L'")
    dim, box = int(head[0]), float(head[1])
    pts = np.array([[float(v) for v in r.split()] for r in rows[1:]], dtype=float)
    pts = pts.reshape(-1, dim) if pts.size else np.empty((0, dim))
    if pts.shape[1] != dim:
        raise ValueError(f"{path}: expected {dim} coordinates per line")
    return PointPattern(box, pts)


def write_pattern(path, pattern: PointPattern, header: Iterable[str] = ()) -> None:
    path = Path(path)
    with open(path, "w") as fh:
        for h in header:
            fh.write(f"# {h}\n")
        fh.write(f"{pattern.dim} {pattern.box_length!r}\n")
        for row in pattern.points:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
