"""Monte-Carlo calibration of the null law of T, p-values, and the power harness.

Under the null the statistic has an atom at zero plus a continuous part that
is modelled as Gamma(shape dof/2, rate 1/2), a chi-square law with a
fractional number of degrees of freedom. The law of T does not depend on the
scale t, so calibration draws exponentials with means ``kappa_j``.
"""
from __future__ import annotations

import json
import logging
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .core import PointPattern, build_wave_grid
from .inference import (ATOM_THRESHOLD, FitResult, lr_statistic, lr_statistics,
                        regularized_gamma_upper)
from .simulate import ModelConfig, replicate_rng, sim_matching
from .spectral import spectral_sample

log = logging.getLogger(__name__)

MAX_FAILURE_RATE = 1e-3


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class NullModel:
    """Atom mass ``p0`` at T = 0 and fractional degrees of freedom ``dof``."""

    p0: float
    dof: float
    provenance: dict = field(default_factory=dict, compare=False)
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not 0.0 <= self.p0 < 1.0:
            raise ValueError("p0 must lie in [0, 1)")
        if not self.dof > 0:
            raise ValueError("dof must be positive")

    @property
    def id(self) -> str:
        p = self.provenance
        keys = ("dim", "box_length", "cutoff", "n", "reps", "seed")
        parts = [f"{k}={p[k]}" for k in keys if k in p]
        if not parts:
            parts = [f"{p.get('source', 'null')}(p0={self.p0:g},dof={self.dof:g})"]
        return ",".join(parts)

    def to_dict(self) -> dict:
        out = {"p0": self.p0, "dof": self.dof}
        out.update({f"provenance.{k}": v for k, v in self.provenance.items()})
        out.update({f"diagnostics.{k}": v for k, v in self.diagnostics.items()})
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "NullModel":
        prov = {k.split(".", 1)[1]: v for k, v in d.items() if k.startswith("provenance.")}
        diag = {k.split(".", 1)[1]: v for k, v in d.items() if k.startswith("diagnostics.")}
        return cls(float(d["p0"]), float(d["dof"]), prov, diag)

    def write(self, path) -> None:
        _atomic_write(Path(path), json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def read(cls, path) -> "NullModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


REFERENCE_NULL = NullModel(0.559, 0.944, {"source": "reference"})


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# null simulation


def _null_chunk(args) -> tuple[np.ndarray, int]:
    kappa, seed, start, stop, t = args
    xs = np.empty((stop - start, kappa.size))
    for i, rep in enumerate(range(start, stop)):
        xs[i] = replicate_rng(seed, rep).exponential(t * kappa)
    return lr_statistics(kappa, xs)


def _chunks(reps: int, size: int):
    return [(a, min(a + size, reps)) for a in range(0, reps, size)]


def simulate_null_T(kappas, reps: int, seed: int, t: float = 1.0, workers: int = 1,
                    chunk: int = 2000, min_reps: int = 1000) -> np.ndarray:
    """Draw ``reps`` values of T for exponential data with means ``t * kappa``.

    Replicate ``i`` uses its own stream, so the output does not depend on
    ``workers`` or ``chunk``. Failed fits are dropped and counted; more than
    0.1% failures raise :class:`CalibrationError`.
    """
    kappa = np.ascontiguousarray(kappas, dtype=float)
    if reps < min_reps:
        raise ValueError(f"need at least {min_reps} replicates")
    jobs = [(kappa, seed, a, b, t) for a, b in _chunks(reps, chunk)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_null_chunk, jobs))
    else:
        parts = [_null_chunk(j) for j in jobs]
    T = np.concatenate([p[0] for p in parts])
    failures = sum(p[1] for p in parts)
    if failures > MAX_FAILURE_RATE * reps:
        raise CalibrationError(f"{failures} of {reps} fits failed")
    if failures:
        log.warning("%d of %d null fits failed and were dropped", failures, reps)
    return T[np.isfinite(T)]


def fit_null_mixture(Ts, provenance: dict | None = None) -> NullModel:
    """Atom fraction and mean-matched dof; a free two-parameter gamma is a diagnostic."""
    T = np.asarray(Ts, dtype=float)
    if T.size < 1000:
        raise ValueError("need at least 1000 values")
    pos = T[T > ATOM_THRESHOLD]
    if pos.size < 100 or pos.size == T.size:
        raise ValueError("degenerate sample: need at least 100 positive values and some atoms")
    mean, var = pos.mean(), pos.var(ddof=1)
    diag = {
        "positive": int(pos.size),
        "dof_se": float(math.sqrt(var / pos.size)),
        "p0_se": float(math.sqrt((1 - pos.size / T.size) * pos.size / T.size / T.size)),
        "gamma_shape": float(mean * mean / var),
        "gamma_rate": float(mean / var),
    }
    return NullModel(1.0 - pos.size / T.size, float(mean), dict(provenance or {}), diag)


def calibrate(dim: int, box_length: float, cutoff: float, reps: int, seed: int,
              t: float = 1.0, workers: int = 1, cache_dir=None) -> NullModel:
    """Calibrate the null for one wave grid, reusing a cached result when present."""
    grid = build_wave_grid(dim, box_length, cutoff)
    prov = {"dim": dim, "box_length": float(box_length), "cutoff": float(cutoff),
            "n": len(grid), "reps": int(reps), "seed": int(seed)}
    if t != 1.0:
        prov["t"] = float(t)
    path = None
    if cache_dir is not None:
        key = "_".join(f"{k}{prov[k]}" for k in ("dim", "box_length", "cutoff", "n", "reps", "seed"))
        if t != 1.0:
            key += f"_t{t}"
        path = Path(cache_dir) / f"null_{key}.json"
        if path.exists():
            return NullModel.read(path)
    T = simulate_null_T(grid.kappas, reps, seed, t=t, workers=workers)
    prov["version"] = __version__
    null = fit_null_mixture(T, prov)
    if path is not None:
        null.write(path)
    return null


# ---------------------------------------------------------------------------
# p-values and the test


def p_value(T: float, null: NullModel) -> float:
    """Null probability of a statistic at least as large as ``T``."""
    if T < 0:
        raise ValueError("T must be non-negative")
    if T == 0:
        return 1.0
    return (1.0 - null.p0) * regularized_gamma_upper(0.5 * null.dof, 0.5 * T)


def critical_value(null: NullModel, level: float, tol: float = 1e-10) -> float:
    """The ``T`` at which :func:`p_value` equals ``level``, by bisection.

    Bisection stops once the bracket is narrower than ``tol`` and the
    p-values at its ends differ by less than 1e-12; near T = 0 the density of
    a fractional chi-square diverges, so the second condition matters there.
    """
    if not 0.0 < level < 1.0 - null.p0:
        raise ValueError(f"level must lie in (0, 1 - p0) = (0, {1.0 - null.p0})")
    lo, hi = 0.0, 1.0
    while p_value(hi, null) > level:
        lo, hi = hi, 2.0 * hi
    plo = 1.0 - null.p0 if lo == 0.0 else p_value(lo, null)
    phi = p_value(hi, null)
    while hi - lo > tol or plo - phi > 1e-12:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        pm = p_value(mid, null)
        if pm > level:
            lo, plo = mid, pm
        else:
            hi, phi = mid, pm
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class TestReport:
    __test__ = False  # keep pytest from collecting this class

    fit: FitResult
    p_value: float
    level: float
    reject: bool
    null_id: str

    @property
    def T(self) -> float:
        return self.fit.T

    def lines(self) -> list[str]:
        f = self.fit
        return [
            f"t0_hat={f.t0_hat!r}",
            f"s_hat={f.s_hat!r}",
            f"t1_hat={f.t1_hat!r}",
            f"T={f.T!r}",
            f"p_value={self.p_value!r}",
            f"reject={str(self.reject).lower()}",
        ]


def test_sample(sample, null: NullModel = REFERENCE_NULL, level: float = 0.05) -> TestReport:
    """Likelihood-ratio test of ``s = 0`` for one spectral sample."""
    fit = lr_statistic(sample)
    p = p_value(fit.T, null)
    return TestReport(fit, p, level, p < level, null.id)


test_sample.__test__ = False


# ---------------------------------------------------------------------------
# power


@dataclass
class PowerTable:
    s_values: list
    lengths: list
    rejections: np.ndarray
    trials: np.ndarray
    failures: np.ndarray

    @property
    def rates(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.rejections / self.trials

    @property
    def std_errors(self) -> np.ndarray:
        r = self.rates
        return np.sqrt(r * (1 - r) / self.trials)

    def rate(self, s: float, length: float) -> float:
        return float(self.rates[self.s_values.index(s), self.lengths.index(length)])

    def to_csv(self, path, header=()) -> None:
        with open(path, "w") as fh:
            for h in header:
                fh.write(f"# {h}\n")
            fh.write("s," + ",".join(f"L={L:g}" for L in self.lengths) + "\n")
            for i, s in enumerate(self.s_values):
                fh.write(f"{s!r}," + ",".join(f"{r:.6g}" for r in self.rates[i]) + "\n")


def _power_chunk(args):
    config, s_values, cutoff, seed, start, stop, nulls_level = args
    nulls, level = nulls_level
    L = config.box_length
    grid = build_wave_grid(config.dim, L, cutoff)
    null = nulls[L] if isinstance(nulls, dict) else nulls
    rej = np.zeros(len(s_values), dtype=np.int64)
    ok = np.zeros(len(s_values), dtype=np.int64)
    fail = np.zeros(len(s_values), dtype=np.int64)
    for rep in range(start, stop):
        # one base pattern and one set of uniforms per replicate; thinnings are nested in s
        rng = replicate_rng(seed, rep, int(L))
        try:
            base = sim_matching(config, rng)
        except RuntimeError:
            fail += 1
            continue
        u = rng.random(len(base))
        for i, s in enumerate(s_values):
            pts = base.points[u < 1.0 - s]
            try:
                rep_ = test_sample(spectral_sample(PointPattern(L, pts), grid), null, level)
            except (ValueError, RuntimeError):
                fail[i] += 1
                continue
            ok[i] += 1
            rej[i] += rep_.reject
    return rej, ok, fail


def run_power(config: ModelConfig, s_values, lengths, reps: int, level: float = 0.05,
              null=REFERENCE_NULL, cutoff: float = 0.75, seed: int = 0,
              workers: int = 1, chunk: int = 50) -> PowerTable:
    """Rejection rates of the test on thinned matching patterns, rows s and columns L.

    ``null`` is one :class:`NullModel` shared by all lengths or a mapping
    from length to model.
    """
    s_values = [float(s) for s in s_values]
    lengths = [float(L) for L in lengths]
    if any(not 0.0 <= s < 1.0 for s in s_values):
        raise ValueError("s must lie in [0, 1)")
    shape = (len(s_values), len(lengths))
    rej = np.zeros(shape, dtype=np.int64)
    ok = np.zeros(shape, dtype=np.int64)
    fail = np.zeros(shape, dtype=np.int64)
    jobs, where = [], []
    for j, L in enumerate(lengths):
        cfg = ModelConfig(**{**asdict(config), "model": "matching", "box_length": L, "thin": 1.0})
        for a, b in _chunks(reps, chunk):
            jobs.append((cfg, s_values, cutoff, seed, a, b, (null, level)))
            where.append(j)
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_power_chunk, jobs))
    else:
        parts = [_power_chunk(job) for job in jobs]
    for j, (r, o, f) in zip(where, parts):
        rej[:, j] += r
        ok[:, j] += o
        fail[:, j] += f
    if fail.any():
        log.warning("power run: %d failed replicates", int(fail.sum()))
    return PowerTable(s_values, lengths, rej, ok, fail)
