"""Brute-force reference implementations used only by the tests.

None of these share code with the package: the likelihood maximiser searches
a two-dimensional grid over the whole cone, grids are enumerated with nested loops, and the
stable matching is built from mutual-nearest-neighbour rounds.
"""
import itertools
import math

import numpy as np


def loglike_grid(kappa, x, s, t):
    """Exponential log-likelihood on broadcast (s, t) arrays, -inf outside the cone."""
    s = np.asarray(s, dtype=float)[..., None]
    t = np.asarray(t, dtype=float)[..., None]
    mean = s + t * kappa
    with np.errstate(divide="ignore", invalid="ignore"):
        val = -(np.log(mean) + x / mean).sum(axis=-1)
    bad = (mean <= 0).any(axis=-1) | (s[..., 0] < 0)
    return np.where(bad, -np.inf, val)


def _endpoint_params(kappa, u, w):
    # (u, w) -> (s, t): mean exp(u) at min kappa and exp(u) (kb / ka) exp(-w) at max
    # kappa, so w = 0 is the boundary s = 0 and w > 0 is the interior of the cone
    ka, kb = kappa[0], kappa[-1]
    ma = np.exp(u)
    mb = ma * (kb / ka) * np.exp(-w)
    t = (mb - ma) / (kb - ka)
    return ma - t * ka, t


def grid_mle(kappa, x, m=2000, refine=41, tol=1e-8, max_steps=100_000):
    """Maximise the log-likelihood over the cone by a grid search plus zooming.

    The search runs in log coordinates of the fitted means at the smallest
    and largest kappa, which map the whole cone onto ``u`` real and ``w >= 0``
    with the boundary ``s = 0`` at ``w = 0``. The coarse ``m x m`` grid covers
    ``u`` in ``[log min x - 5, log sum x + 3]`` and ``w`` in ``[0, log(kb/ka) + 30]``.
    Each refinement puts a ``refine x refine`` grid of half-width two cells
    around the incumbent; it walks without shrinking while the incumbent sits
    on the window edge and shrinks otherwise, until the cell size is below
    ``tol``. Returns ``(h1, s, t)``.
    """
    kappa = np.asarray(kappa, dtype=float)
    x = np.asarray(x, dtype=float)
    order = np.argsort(kappa, kind="stable")
    kappa, x = kappa[order], x[order]
    if kappa[0] == kappa[-1]:
        s = float(x.mean())
        return float(loglike_grid(kappa, x, s, 0.0)), s, 0.0

    def evaluate(U, W):
        S, Tt = _endpoint_params(kappa, U, W)
        return loglike_grid(kappa, x, S, Tt)

    us = np.linspace(np.log(x.min()) - 5.0, np.log(x.sum()) + 3.0, m)
    ws = np.linspace(0.0, np.log(kappa[-1] / kappa[0]) + 30.0, m)
    best, bu, bw = -np.inf, 0.0, 0.0
    for lo in range(0, m, 100):
        U, W = np.meshgrid(us[lo:lo + 100], ws, indexing="ij")
        vals = evaluate(U, W)
        i = np.unravel_index(np.argmax(vals), vals.shape)
        if vals[i] > best:
            best, bu, bw = vals[i], U[i], W[i]
    du, dw = us[1] - us[0], ws[1] - ws[0]
    half = (refine - 1) // 2
    for _ in range(max_steps):
        if du <= tol and dw <= tol:
            break
        ug = np.linspace(bu - 2 * du, bu + 2 * du, refine)
        wg = np.clip(np.linspace(bw - 2 * dw, bw + 2 * dw, refine), 0.0, None)
        U, W = np.meshgrid(ug, wg, indexing="ij")
        vals = evaluate(U, W)
        i = np.unravel_index(np.argmax(vals), vals.shape)
        on_edge = (i[0] in (0, refine - 1)) or (i[1] == refine - 1) or (i[1] == 0 and W[i] > 0)
        if vals[i] >= best:
            best, bu, bw = vals[i], U[i], W[i]
        if not on_edge or vals[i] < best:
            du, dw = 2 * du / half, 2 * dw / half
    else:
        raise RuntimeError("grid refinement did not converge")
    s, t = _endpoint_params(kappa, bu, bw)
    return float(best), float(s), float(t)


def enumerate_grid(dim, box_length, cutoff, nmax):
    """Half-space lattice vectors by nested loops, in lexicographic order."""
    tau = 2 * math.pi / box_length
    out = []
    for n in itertools.product(range(-nmax, nmax + 1), repeat=dim):
        if not any(n):
            continue
        first = next(v for v in n if v != 0)
        if first < 0:
            continue
        if math.sqrt(sum(v * v for v in n)) * tau < cutoff:
            out.append(n)
    return out


def mutual_nn_matching(a, b, box_length):
    """Match every point of ``a`` by repeatedly pairing mutual nearest neighbours."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = a[:, None, :] - b[None, :, :]
    d -= box_length * np.floor(d / box_length + 0.5)
    dist = np.sqrt((d * d).sum(axis=-1))
    partner = -np.ones(len(a), dtype=int)
    free_a = np.ones(len(a), bool)
    free_b = np.ones(len(b), bool)
    while free_a.any():
        sub = np.where(free_a[:, None] & free_b[None, :], dist, np.inf)
        na = sub.argmin(axis=1)
        nb = sub.argmin(axis=0)
        for i in np.flatnonzero(free_a):
            j = na[i]
            if nb[j] == i:
                partner[i] = j
                free_a[i] = False
                free_b[j] = False
    return partner


def url_structure_factor(kvec):
    """Structure factor of the uniformly randomised unit lattice."""
    k = np.atleast_2d(kvec)
    return 1.0 - np.prod(np.sinc(k / (2 * np.pi)) ** 2, axis=-1)


def url_small_k_slope(terms=6):
    """Coefficient of |k|^2 in the URL structure factor from its Taylor series.

    ``sinc(u)^2 = 1 - u^2/3 + ...`` with ``u = k_j / 2``, so the product over
    components is ``1 - |k|^2 / 12 + O(|k|^4)``. The series of sin(u)/u is
    squared term by term here to confirm the coefficient.
    """
    # sin(u)/u = sum (-1)^m u^(2m) / (2m+1)!
    c = [(-1) ** m / math.factorial(2 * m + 1) for m in range(terms)]
    sq = np.convolve(c, c)[:terms]
    # coefficient of u^2 in sinc^2 is sq[1]; with u = k/2 the k^2 coefficient is sq[1] / 4
    return -sq[1] / 4.0
