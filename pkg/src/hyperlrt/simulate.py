"""Seeded point-process generators on the flat torus ``[0, L)^d``.

All generators take either an integer seed or a ``numpy.random.Generator`` and
are deterministic functions of ``(config, seed)``. Monte-Carlo loops derive one
independent stream per replicate with :func:`replicate_rng`, so results do not
depend on how replicates are scheduled over workers.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial import cKDTree

from ._backend import kernels
from .core import PointPattern

log = logging.getLogger(__name__)

MODELS = ("poisson", "thomas", "rsa", "url", "matching")

# saturation-level volume fractions used for RSA, indexed by dimension
RSA_VOLUME_FRACTION = {1: 0.747, 2: 0.547, 3: 0.384}


class SimulationError(RuntimeError):
    pass


class RSASaturationError(SimulationError):
    """The attempt budget ran out before the requested count was placed."""


@dataclass(frozen=True)
class ModelConfig:
    model: str
    dim: int = 2
    box_length: float = 35.0
    intensity: float = 1.0
    mean_cluster_size: float = 10.0
    cluster_std: float = 1.0
    count: int | None = None
    volume_fraction: float | None = None
    alpha: float = 3.0
    thin: float = 1.0
    max_restarts: int = 1000

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; choose from {MODELS}")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not self.box_length > 0:
            raise ValueError("box_length must be positive")
        if self.intensity < 0:
            raise ValueError("intensity must be non-negative")
        if not 0.0 < self.thin <= 1.0:
            raise ValueError("thin (retention probability) must lie in (0, 1]")
        if self.model == "thomas" and not self.mean_cluster_size > 0:
            raise ValueError("mean_cluster_size must be positive")
        if self.model == "matching" and not self.alpha > 1.0:
            raise ValueError("matching needs Poisson intensity alpha > 1")
        if self.model in ("url", "matching") and not float(self.box_length).is_integer():
            raise ValueError(f"{self.model} needs an integer box length")
        if self.model == "rsa":
            if self.dim > 3:
                raise ValueError("RSA is implemented for d <= 3")
            phi = self.rsa_fraction
            if not 0.0 < phi < 1.0:
                raise ValueError("volume fraction must lie in (0, 1)")

    @property
    def volume(self) -> float:
        return float(self.box_length) ** self.dim

    @property
    def rsa_count(self) -> int:
        if self.count is not None:
            return int(self.count)
        return int(round(self.intensity * self.volume))

    @property
    def rsa_fraction(self) -> float:
        if self.volume_fraction is not None:
            return float(self.volume_fraction)
        return RSA_VOLUME_FRACTION[self.dim]

    @property
    def rsa_radius(self) -> float:
        return rsa_radius(self.rsa_count, self.rsa_fraction, self.box_length, self.dim)


def replicate_rng(seed: int, rep: int, *extra: int) -> np.random.Generator:
    """Independent PCG64 stream for replicate ``rep`` of a run seeded with ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, rep, *extra])))


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _uniform(rng, n: int, dim: int, box_length: float) -> np.ndarray:
    pts = rng.random((n, dim)) * box_length
    pts[pts >= box_length] -= box_length
    return pts


def ball_volume(dim: int) -> float:
    return math.pi ** (dim / 2) / math.gamma(dim / 2 + 1)


def rsa_radius(count: int, fraction: float, box_length: float, dim: int) -> float:
    """Radius R with ``count * kappa_d * R^d = fraction * L^d``."""
    return (fraction * box_length ** dim / (count * ball_volume(dim))) ** (1.0 / dim)


def sim_poisson(config: ModelConfig, seed=None) -> PointPattern:
    rng = _rng(seed)
    n = rng.poisson(config.intensity * config.volume)
    return PointPattern(config.box_length, _uniform(rng, n, config.dim, config.box_length))


def sim_thomas(config: ModelConfig, seed=None) -> PointPattern:
    """Modified Thomas process: Gaussian clusters around Poisson parents, children only."""
    rng = _rng(seed)
    L, d = config.box_length, config.dim
    parent_rate = config.intensity / config.mean_cluster_size
    parents = _uniform(rng, rng.poisson(parent_rate * config.volume), d, L)
    sizes = rng.poisson(config.mean_cluster_size, size=parents.shape[0])
    children = np.repeat(parents, sizes, axis=0)
    children += rng.normal(scale=config.cluster_std, size=children.shape)
    return PointPattern.wrap(L, children)


def sim_rsa(config: ModelConfig, seed=None, info: dict | None = None) -> PointPattern:
    """Random sequential adsorption conditioned on a fixed number of spheres.

    A run that saturates before reaching the count is discarded and the
    pattern is resampled from the continuing stream. Raises
    :class:`RSASaturationError` when a single run exhausts its attempt budget
    of ``10**4 * count``.
    """
    rng = _rng(seed)
    n = config.rsa_count
    diameter = 2.0 * config.rsa_radius
    budget = 10_000 * max(n, 1)
    for restart in range(config.max_restarts):
        pts, attempts, status = kernels.rsa_fill(
            rng, n, diameter, float(config.box_length), config.dim, budget
        )
        if status == kernels.RSA_DONE:
            if info is not None:
                info["restarts"] = restart
                info["attempts"] = attempts
            return PointPattern(config.box_length, pts)
        if status == kernels.RSA_BUDGET:
            raise RSASaturationError(
                f"attempt budget {budget} exhausted after placing {len(pts)} of {n} spheres"
            )
    raise RSASaturationError(
        f"{config.max_restarts} consecutive runs saturated below {n} spheres"
    )


def _lattice(box_length: float, dim: int) -> np.ndarray:
    m = int(box_length)
    axes = [np.arange(m, dtype=float)] * dim
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)


def sim_url(config: ModelConfig, seed=None) -> PointPattern:
    """Uniformly randomised lattice: one uniform point per unit cell, globally shifted."""
    rng = _rng(seed)
    lattice = _lattice(config.box_length, config.dim)
    pts = lattice + rng.random(lattice.shape)
    shift = rng.random(config.dim)
    return PointPattern.wrap(config.box_length, pts + shift)


def stable_matching(lattice: np.ndarray, poisson: np.ndarray, box_length: float,
                    k0: int = 8) -> np.ndarray | None:
    """Partner index in ``poisson`` for every lattice site, or None if impossible.

    Both sides rank partners by torus distance. The deferred-acceptance result
    is the unique stable matching, i.e. the fixed point of repeatedly pairing
    mutual nearest neighbours among the unmatched points.
    """
    m, p = lattice.shape[0], poisson.shape[0]
    if p < m:
        return None
    tree = cKDTree(poisson, boxsize=box_length)
    k = min(k0, p)
    while True:
        dist, cand = tree.query(lattice, k=k)
        if k == 1:
            dist, cand = dist[:, None], cand[:, None]
        partner, complete = kernels.gale_shapley(cand, dist, p)
        if complete:
            return partner
        if k == p:
            return None
        k = min(2 * k, p)


def sim_matching(config: ModelConfig, seed=None, info: dict | None = None) -> PointPattern:
    """Matched Poisson points of a stable lattice/Poisson matching on the torus."""
    rng = _rng(seed)
    L, d = config.box_length, config.dim
    shift = rng.random(d)
    lattice = np.mod(_lattice(L, d) + shift, L)
    lattice[lattice >= L] = 0.0
    for restart in range(config.max_restarts):
        poisson = _uniform(rng, rng.poisson(config.alpha * config.volume), d, L)
        partner = stable_matching(lattice, poisson, L)
        if partner is not None:
            if info is not None:
                info["restarts"] = restart
            if restart:
                log.info("matching needed %d Poisson resamples", restart)
            return PointPattern(L, poisson[partner])
    raise SimulationError("could not match every lattice site")


def thin(pattern: PointPattern, p: float, seed=None) -> PointPattern:
    """Keep each point independently with probability ``p``.

    For a fixed seed, thinnings with smaller ``p`` are subsets of those with
    larger ``p``.
    """
    if not 0.0 < p <= 1.0:
        raise ValueError("retention probability must lie in (0, 1]")
    rng = _rng(seed)
    keep = rng.random(len(pattern)) < p
    return PointPattern(pattern.box_length, pattern.points[keep])


_GENERATORS = {
    "poisson": sim_poisson,
    "thomas": sim_thomas,
    "rsa": sim_rsa,
    "url": sim_url,
    "matching": sim_matching,
}


def simulate(config: ModelConfig, seed=None) -> PointPattern:
    """Draw one pattern of ``config.model``, thinned when ``config.thin < 1``."""
    rng = _rng(seed)
    pattern = _GENERATORS[config.model](config, rng)
    if config.thin < 1.0:
        pattern = thin(pattern, config.thin, rng)
    return pattern


def with_thinning(config: ModelConfig, s: float) -> ModelConfig:
    """Config whose thinning shifts the structure factor at the origin by ``s``."""
    return replace(config, thin=1.0 - s)
