"""Maximum-likelihood fits of the parabolic structure-factor model and the LR statistic.

Observations ``x_j`` are independent exponentials with means ``s + t * kappa_j``.
The parameter space is the cone ``s >= 0, s + t * kappa_j > 0``; the null
hypothesis is ``s = 0``. The full-model fit profiles out the scale exactly and
solves a one-dimensional problem in the ratio ``y = s / t``, which is done by
the backend kernel (see :mod:`hyperlrt._pykernels` for the algorithm).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .spectral import SpectralSample

ATOM_THRESHOLD = 1e-8

BRANCH_NAMES = {kernels.BOUNDARY: "boundary", kernels.POSITIVE: "positive",
                kernels.NEGATIVE: "negative"}


class FitError(RuntimeError):
    """The one-dimensional optimiser failed to converge."""


class ParameterError(ValueError):
    """Parameters outside the cone of admissible (s, t)."""


@dataclass(frozen=True)
class FitResult:
    t0_hat: float
    h0: float
    s_hat: float
    t1_hat: float
    h1: float
    T: float
    atom: bool
    branch: str = "boundary"


def _arrays(sample) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(sample, SpectralSample):
        return sample.kappa, sample.x
    kappa, x = sample
    return np.asarray(kappa, dtype=float), np.asarray(x, dtype=float)


def _check_positive(x: np.ndarray) -> None:
    if np.any(~(x > 0)):
        raise ValueError("observations must be strictly positive")


def loglike(sample, s: float, t: float) -> float:
    """Exponential log-likelihood ``sum[-log(s + t kappa) - x / (s + t kappa)]``."""
    kappa, x = _arrays(sample)
    mean = s + t * kappa
    if s < 0 or np.any(~(mean > 0)):
        raise ParameterError(f"(s, t) = ({s}, {t}) lies outside the cone")
    return float(-np.log(mean).sum() - (x / mean).sum())


def mle_h0(sample) -> tuple[float, float]:
    """Closed-form fit under ``s = 0``: returns ``(t0_hat, h0)``."""
    kappa, x = _arrays(sample)
    _check_positive(x)
    t0 = float(np.mean(x / kappa))
    h0 = float(-np.log(t0 * kappa).sum() - kappa.size)
    return t0, h0


def profile_loglike(sample, y: float) -> float:
    """Log-likelihood with the scale profiled out, as a function of ``y = s / t``.

    Defined for ``y >= 0`` (including ``inf``, the flat model ``t = 0``) and
    for ``y < -max(kappa)`` (``t < 0``). The additive constant is chosen so
    that ``profile_loglike(sample, 0) = h0 + n - 1 - n log n``; differences are
    exact log-likelihood ratios.
    """
    kappa, x = _arrays(sample)
    n = kappa.size
    if math.isinf(y) and y > 0:
        return float(-1.0 - n * math.log(x.sum()))
    if y >= 0:
        return float(-np.log(kappa + y).sum() - 1.0 - n * math.log((x / (kappa + y)).sum()))
    if y < -kappa.max():
        w = -(kappa + y)
        return float(-np.log(w).sum() - 1.0 - n * math.log((x / w).sum()))
    raise ParameterError(f"y = {y} is outside the admissible set")


def profile_derivative_at_zero(sample) -> float:
    """Right derivative of :func:`profile_loglike` at ``y = 0``.

    A non-positive value means the null fit ``s = 0`` is the maximiser.
    """
    kappa, x = _arrays(sample)
    _check_positive(x)
    inv = 1.0 / kappa
    xk = x * inv
    return float(-inv.sum() + kappa.size * (xk * inv).sum() / xk.sum())


def _recover(kappa, x, branch, param) -> tuple[float, float]:
    if branch == kernels.POSITIVE:
        if math.isinf(param):
            return float(x.mean()), 0.0
        t1 = float(np.mean(x / (param + kappa)))
        return param * t1, t1
    # negative branch, param = t / s in (-1 / max kappa, 0)
    s = float(np.mean(x / (1.0 + param * kappa)))
    return s, param * s


def lr_statistic(sample) -> FitResult:
    """Fit both models and return the likelihood-ratio statistic ``T = 2 (h1 - h0)``."""
    kappa, x = _arrays(sample)
    if kappa.size < 2:
        raise ValueError("need at least two observations")
    t0, h0 = mle_h0((kappa, x))
    try:
        branch, param, stat = kernels.fit_profile(kappa, x)
    except RuntimeError as exc:
        raise FitError(str(exc)) from exc
    if branch == kernels.BOUNDARY or stat <= ATOM_THRESHOLD:
        return FitResult(t0, h0, 0.0, t0, h0, 0.0, True, "boundary")
    s, t1 = _recover(kappa, x, branch, param)
    try:
        h1 = loglike((kappa, x), s, t1)
    except ParameterError:
        # the fitted mean at max kappa underflowed; the profile gain is still exact
        h1 = h0 + 0.5 * stat
    return FitResult(t0, h0, s, t1, h1, float(stat), False, BRANCH_NAMES[branch])


def mle_full(sample) -> tuple[float, float, float]:
    """Maximiser over the whole cone: ``(s_hat, t1_hat, h1)``."""
    r = lr_statistic(sample)
    return r.s_hat, r.t1_hat, r.h1


def lr_statistics(kappa, xs) -> tuple[np.ndarray, int]:
    """``T`` for every row of ``xs``; returns ``(T, failures)``, failed rows are NaN."""
    kappa = np.ascontiguousarray(kappa, dtype=float)
    xs = np.ascontiguousarray(np.atleast_2d(xs), dtype=float)
    branch, _, stat = kernels.fit_profile_batch(kappa, xs)
    stat = np.where(stat <= ATOM_THRESHOLD, 0.0, stat)
    return stat, int(np.count_nonzero(branch < 0))


@dataclass(frozen=True)
class Verification:
    fit: FitResult
    scan_gain: float
    scan_y: float
    counterexample: bool
    atom_sign_mismatch: bool


def verify_fit(sample, points: int = 64, tol: float = 1e-9) -> Verification:
    """Check a fit against a coarse scan of both branches of the profile.

    ``counterexample`` is set when some scanned ``y`` beats the reported
    maximum by more than ``tol`` (relative to the scale of the objective),
    i.e. when the optimiser missed a better mode.
    """
    kappa, x = _arrays(sample)
    fit = lr_statistic((kappa, x))
    kmin, kmax = kappa.min(), kappa.max()
    f0 = profile_loglike((kappa, x), 0.0)
    ys = np.concatenate((
        np.geomspace(1e-4 * kmin, 1e4 * kmax, points),
        -kmax * (1.0 + np.geomspace(1e-6, 1e4, points)),
    ))
    gains = np.array([profile_loglike((kappa, x), y) - f0 for y in ys])
    i = int(np.argmax(gains))
    best = 0.5 * fit.T
    counter = gains[i] > best + tol * max(1.0, abs(f0))
    mismatch = (profile_derivative_at_zero((kappa, x)) > 0) == fit.atom
    return Verification(fit, float(gains[i]), float(ys[i]), bool(counter), bool(mismatch))


# ---------------------------------------------------------------------------
# regularized incomplete gamma


def _gamma_series(a: float, x: float) -> float:
    term = total = 1.0 / a
    ap = a
    for _ in range(10_000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * 1e-17:
            return total * math.exp(-x + a * math.log(x) - math.lgamma(a))
    raise FitError("incomplete gamma series did not converge")


def _gamma_cf(a: float, x: float) -> float:
    # modified Lentz evaluation of the continued fraction for Q(a, x)
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            return h * math.exp(-x + a * math.log(x) - math.lgamma(a))
    raise FitError("incomplete gamma continued fraction did not converge")


def _check_gamma_args(a: float, x: float) -> None:
    if not a > 0 or not x >= 0 or math.isnan(x):
        raise ValueError("need a > 0 and x >= 0")


def regularized_gamma_lower(a: float, x: float) -> float:
    """``P(a, x) = gamma(a, x) / Gamma(a)``."""
    _check_gamma_args(a, x)
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return min(1.0, _gamma_series(a, x))
    return max(0.0, 1.0 - _gamma_cf(a, x))


def regularized_gamma_upper(a: float, x: float) -> float:
    """``Q(a, x) = 1 - P(a, x)``, accurate in the far tail."""
    _check_gamma_args(a, x)
    if x == 0.0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return max(0.0, 1.0 - _gamma_series(a, x))
    return min(1.0, _gamma_cf(a, x))
