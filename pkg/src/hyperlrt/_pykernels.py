"""Pure-Python/NumPy implementations of the hot kernels.

Every function here has a twin with the same signature in ``_ckernels.pyx``.
The RSA and matching kernels consume random numbers in exactly the same order
as the compiled versions, so both backends produce identical patterns for the
same generator state.
"""
import math

import numpy as np

# fit branches
BOUNDARY = 0
POSITIVE = 1
NEGATIVE = 2

# rsa status codes
RSA_DONE = 0
RSA_SATURATED = 1
RSA_BUDGET = 2

_EPS = np.finfo(float).eps
_ZMAX = 700.0


def structure_sums(points, indices, box_length):
    """Return (Re, Im) of sum_x exp(-i <k, x>) for k = 2 pi n / L, n in indices."""
    points = np.ascontiguousarray(points, dtype=float)
    indices = np.ascontiguousarray(indices, dtype=float)
    if points.shape[0] == 0:
        zeros = np.zeros(indices.shape[0])
        return zeros, zeros.copy()
    # reduce the phase to one turn before scaling by 2 pi
    turns = (points @ indices.T) / box_length
    turns -= np.floor(turns)
    angle = 2.0 * np.pi * turns
    return np.cos(angle).sum(axis=0), -np.sin(angle).sum(axis=0)


# ---------------------------------------------------------------------------
# profile likelihood of the parabolic model


def _brent_root(f, a, b, fa, fb, xtol, rtol, maxiter=200):
    # Brent's zeroin; f(a) and f(b) must bracket a sign change.
    c, fc = a, fa
    d = e = b - a
    for _ in range(maxiter):
        if (fb > 0) == (fc > 0):
            c, fc = a, fa
            d = e = b - a
        if abs(fc) < abs(fb):
            a, b, c = b, c, b
            fa, fb, fc = fb, fc, fb
        tol = 2.0 * rtol * abs(b) + 0.5 * xtol
        m = 0.5 * (c - b)
        if abs(m) <= tol or fb == 0.0:
            return b
        if abs(e) < tol or abs(fa) <= abs(fb):
            d = e = m
        else:
            s = fb / fa
            if a == c:
                p = 2.0 * m * s
                q = 1.0 - s
            else:
                q = fa / fc
                r = fb / fc
                p = s * (2.0 * m * q * (q - r) - (b - a) * (r - 1.0))
                q = (q - 1.0) * (r - 1.0) * (s - 1.0)
            if p > 0:
                q = -q
            else:
                p = -p
            if 2.0 * p < min(3.0 * m * q - abs(tol * q), abs(e * q)):
                e = d
                d = p / q
            else:
                d = e = m
        a, fa = b, fb
        if abs(d) > tol:
            b += d
        else:
            b += tol if m > 0 else -tol
        fb = f(b)
    raise RuntimeError("root finder did not converge")


def _pos_slope(kappa, x, ref, z):
    # y * dF/dy at y = ref * exp(z); sign equals sign of dF/dy
    y = ref * math.exp(z)
    if y <= ref:
        w = 1.0 / (kappa + y)
        xw = x * w
        return y * (-w.sum() + kappa.size * (xw * w).sum() / xw.sum())
    u = 1.0 / y
    w = 1.0 / (1.0 + u * kappa)
    xw = x * w
    return -u * (-(kappa * w).sum() + kappa.size * (xw * kappa * w).sum() / xw.sum())


def _neg_terms(kappa, kmax, v):
    rho = kappa / kmax
    return rho * math.exp(-v) + (1.0 - rho)


def _neg_slope(kappa, x, kmax, v):
    # dH/dv up to a positive factor, u = expm1(-v) / kmax
    u = math.expm1(-v) / kmax
    w = 1.0 / _neg_terms(kappa, kmax, v)
    xw = x * w
    dh = -(kappa * w).sum() + kappa.size * (xw * kappa * w).sum() / xw.sum()
    return -dh * (1.0 + u * kmax)


_NSCAN = 32
# the scan covers y in [kmin e^-PAD, kmax e^PAD] and v in [0, log(kmax / gap) + PAD]
_PAD = 4.0


def _refine(f, a, b, fa, fb, xtol):
    if fb == 0.0:
        return b
    return _brent_root(f, a, b, fa, fb, xtol, 4.0 * _EPS)


def _pos_up(f, ref, lo, flo):
    # slope positive at lo: march towards y = inf until it turns
    step = 1.0
    while True:
        hi = lo + step
        if hi > _ZMAX:
            return math.inf
        fhi = f(hi)
        if fhi <= 0.0:
            break
        lo, flo = hi, fhi
        step *= 2.0
    return ref * math.exp(_refine(f, lo, hi, flo, fhi, 1e-14))


def _pos_down(f, ref, hi, fhi):
    # slope negative at hi but positive at y = 0+: march towards y = 0
    step = 1.0
    while True:
        lo = hi - step
        if lo < -_ZMAX:
            return ref * math.exp(lo)
        flo = f(lo)
        if flo >= 0.0:
            break
        hi, fhi = lo, flo
        step *= 2.0
    if flo == 0.0:
        return ref * math.exp(lo)
    return ref * math.exp(_refine(f, lo, hi, flo, fhi, 1e-14))


def _neg_up(f, lo, flo):
    step = 1.0
    while True:
        hi = lo + step
        if hi > _ZMAX:
            raise RuntimeError("negative-branch maximiser not bracketed")
        fhi = f(hi)
        if fhi <= 0.0:
            break
        lo, flo = hi, fhi
        step *= 2.0
    return _refine(f, lo, hi, flo, fhi, 1e-300)


def _pos_gain(kappa, x, y, a, f0, sx, ref):
    if math.isinf(y):
        return -kappa.size * math.log(sx) - f0
    if y > ref:
        # factor y out of every kappa + y to avoid cancellation at large y
        w = 1.0 + kappa / y
        return -np.log(w).sum() - kappa.size * math.log((x / w).sum()) - f0
    e = (x / (kappa * (y + kappa))).sum()
    return -np.log1p(y / kappa).sum() - kappa.size * math.log1p(-y * e / a)


def _neg_gain(kappa, x, kmax, v, f0, sx):
    if v == 0.0:
        return -kappa.size * math.log(sx) - f0
    terms = _neg_terms(kappa, kmax, v)
    return -np.log(terms).sum() - kappa.size * math.log((x / terms).sum()) - f0


def fit_profile(kappa, x):
    """Maximise the parabolic-model likelihood over the whole cone.

    Returns ``(branch, param, T)``: ``branch`` is BOUNDARY (s = 0), POSITIVE
    (``param`` = s/t, ``inf`` for t = 0) or NEGATIVE (``param`` = t/s < 0),
    and ``T`` is twice the log-likelihood gain over the s = 0 fit.

    The profile is not always unimodal, so the slope is scanned on a fixed
    grid over both branches and every local maximum is refined with a
    root finder on the slope; the best candidate wins.
    """
    kappa = np.asarray(kappa, dtype=float)
    x = np.asarray(x, dtype=float)
    n = kappa.size
    kmin, kmax = kappa.min(), kappa.max()
    if kmin == kmax:
        # flat design: s and t are not separately identifiable
        return BOUNDARY, 0.0, 0.0
    inv = 1.0 / kappa
    xk = x * inv
    a = xk.sum()
    d0 = -inv.sum() + n * (xk * inv).sum() / a
    sx = x.sum()
    g0 = -kappa.sum() + n * (x * kappa).sum() / sx
    f0 = -np.log(kappa).sum() - n * math.log(a)
    ref = math.sqrt(kmin * kmax)
    knext = kappa[kappa < kmax].max()

    def fp(z):
        return _pos_slope(kappa, x, ref, z)

    def fn(v):
        return _neg_slope(kappa, x, kmax, v)

    cands = []
    zlo = math.log(kmin / ref) - _PAD
    zhi = math.log(kmax / ref) + _PAD
    zg = [zlo + (zhi - zlo) * i / _NSCAN for i in range(_NSCAN + 1)]
    fg = [fp(z) for z in zg]
    if d0 > 0.0 and fg[0] < 0.0:
        cands.append((POSITIVE, _pos_down(fp, ref, zg[0], fg[0])))
    for i in range(_NSCAN):
        if fg[i] > 0.0 and fg[i + 1] <= 0.0:
            z = _refine(fp, zg[i], zg[i + 1], fg[i], fg[i + 1], 1e-14)
            cands.append((POSITIVE, ref * math.exp(z)))
    if fg[-1] > 0.0 and g0 >= 0.0:
        cands.append((POSITIVE, _pos_up(fp, ref, zg[-1], fg[-1])))

    vmax = math.log(kmax / (kmax - knext)) + _PAD
    vg = [vmax * i / _NSCAN for i in range(_NSCAN + 1)]
    fv = [fn(v) for v in vg]
    for i in range(_NSCAN):
        if fv[i] > 0.0 and fv[i + 1] <= 0.0:
            cands.append((NEGATIVE, _refine(fn, vg[i], vg[i + 1], fv[i], fv[i + 1], 1e-300)))
    if fv[-1] > 0.0:
        cands.append((NEGATIVE, _neg_up(fn, vg[-1], fv[-1])))

    branch, param, best = BOUNDARY, 0.0, 0.0
    for br, p in cands:
        if br == POSITIVE:
            gain = _pos_gain(kappa, x, p, a, f0, sx, ref)
        else:
            gain = _neg_gain(kappa, x, kmax, p, f0, sx)
            p = math.expm1(-p) / kmax
        if gain > best:
            branch, param, best = br, p, gain
    return branch, float(param), float(2.0 * best)


def fit_profile_batch(kappa, xs):
    """Fit every row of ``xs``; failed fits get branch -1 and NaN statistic."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    m = xs.shape[0]
    branch = np.empty(m, dtype=np.int64)
    param = np.empty(m)
    stat = np.empty(m)
    for i in range(m):
        try:
            branch[i], param[i], stat[i] = fit_profile(kappa, xs[i])
        except RuntimeError:
            branch[i], param[i], stat[i] = -1, np.nan, np.nan
    return branch, param, stat


# ---------------------------------------------------------------------------
# stable matching


def gale_shapley(cand, dist, n_receivers):
    """Distance-preference deferred acceptance with proposers = rows of ``cand``.

    ``cand[i]`` lists receiver ids in increasing distance ``dist[i]``.
    Returns ``(partner, complete)``; ``complete`` is False when some proposer
    ran out of candidates, in which case the result must be discarded.
    """
    cand = np.asarray(cand)
    dist = np.asarray(dist)
    m, k = cand.shape
    partner = [-1] * m
    holder = [-1] * n_receivers
    held = [0.0] * n_receivers
    nxt = [0] * m
    free = list(range(m - 1, -1, -1))
    cand_l = cand.tolist()
    dist_l = dist.tolist()
    while free:
        i = free.pop()
        pos = nxt[i]
        if pos >= k:
            return np.asarray(partner, dtype=np.int64), False
        j = cand_l[i][pos]
        dd = dist_l[i][pos]
        nxt[i] = pos + 1
        cur = holder[j]
        if cur < 0:
            holder[j] = i
            held[j] = dd
            partner[i] = j
        elif dd < held[j] or (dd == held[j] and i < cur):
            holder[j] = i
            held[j] = dd
            partner[i] = j
            partner[cur] = -1
            free.append(cur)
        else:
            free.append(i)
    return np.asarray(partner, dtype=np.int64), True


# ---------------------------------------------------------------------------
# random sequential adsorption


class _Cells:
    def __init__(self, box_length, diameter, dim, capacity):
        nc = int(box_length // diameter)
        self.nc = max(nc, 1)
        self.brute = self.nc < 3
        self.side = box_length / self.nc
        self.dim = dim
        self.L = box_length
        self.half = 0.5 * box_length
        self.head = [-1] * (self.nc ** dim)
        self.nxt = [-1] * capacity
        self.pts = []
        self.offsets = []
        if not self.brute:
            for flat in range(3 ** dim):
                off = []
                for k in range(dim):
                    off.append((flat // 3 ** (dim - 1 - k)) % 3 - 1)
                self.offsets.append(off)

    def cell_of(self, p):
        idx = []
        for c in p:
            ci = int(c / self.side)
            if ci >= self.nc:
                ci = self.nc - 1
            idx.append(ci)
        return idx

    def flat(self, idx):
        f = 0
        for ci in idx:
            f = f * self.nc + ci
        return f

    def add(self, p):
        i = len(self.pts)
        self.pts.append(p)
        f = self.flat(self.cell_of(p))
        self.nxt[i] = self.head[f]
        self.head[f] = i

    def neighbours(self, p):
        if self.brute:
            yield from self.pts
            return
        base = self.cell_of(p)
        nc = self.nc
        for off in self.offsets:
            f = 0
            for k in range(self.dim):
                f = f * nc + (base[k] + off[k]) % nc
            j = self.head[f]
            while j >= 0:
                yield self.pts[j]
                j = self.nxt[j]

    def _delta(self, a, b):
        d = a - b
        if d >= self.half:
            d -= self.L
        elif d < -self.half:
            d += self.L
        return d

    def conflicts(self, p, d2):
        for q in self.neighbours(p):
            s = 0.0
            for k in range(self.dim):
                dk = self._delta(p[k], q[k])
                s += dk * dk
            if s < d2:
                return True
        return False

    def covers(self, corner, h, d2):
        hh = 0.5 * h
        centre = [c + hh for c in corner]
        for q in self.neighbours(centre):
            s = 0.0
            for k in range(self.dim):
                dk = abs(self._delta(centre[k], q[k])) + hh
                s += dk * dk
            if s < d2:
                return True
        return False


def rsa_fill(rng, n_target, diameter, box_length, dim, max_attempts,
             switch_after=100, max_level=40):
    """Sequentially add hard spheres until ``n_target`` or saturation.

    Returns ``(points, attempts, status)``.
    """
    L = float(box_length)
    d2 = diameter * diameter
    cells = _Cells(L, diameter, dim, n_target)
    rand = rng.random
    attempts = 0
    fails = 0

    def draw_point():
        p = []
        for _ in range(dim):
            c = rand() * L
            if c >= L:
                c -= L
            p.append(c)
        return p

    while len(cells.pts) < n_target and fails < switch_after:
        if attempts >= max_attempts:
            return _as_array(cells.pts, dim), attempts, RSA_BUDGET
        attempts += 1
        p = draw_point()
        if cells.conflicts(p, d2):
            fails += 1
        else:
            cells.add(p)
            fails = 0
    if len(cells.pts) >= n_target:
        return _as_array(cells.pts, dim), attempts, RSA_DONE

    m = int(math.ceil(2.0 * math.sqrt(dim) * L / diameter))
    h = L / m
    vox = []
    for flat in range(m ** dim):
        corner = [((flat // m ** (dim - 1 - k)) % m) * h for k in range(dim)]
        if not cells.covers(corner, h, d2):
            vox.append(corner)

    level = 0
    at_level = 0
    level_size = len(vox)
    while len(cells.pts) < n_target:
        nv = len(vox)
        if nv == 0:
            return _as_array(cells.pts, dim), attempts, RSA_SATURATED
        if at_level >= 2 * level_size:
            level += 1
            if level > max_level:
                return _as_array(cells.pts, dim), attempts, RSA_SATURATED
            h *= 0.5
            children = []
            for corner in vox:
                for sub in range(2 ** dim):
                    child = [corner[k] + ((sub >> (dim - 1 - k)) & 1) * h
                             for k in range(dim)]
                    if not cells.covers(child, h, d2):
                        children.append(child)
            vox = children
            at_level = 0
            level_size = len(vox)
            continue
        if attempts >= max_attempts:
            return _as_array(cells.pts, dim), attempts, RSA_BUDGET
        attempts += 1
        at_level += 1
        i = int(rand() * nv)
        if i >= nv:
            i = nv - 1
        corner = vox[i]
        p = []
        for k in range(dim):
            c = corner[k] + rand() * h
            if c >= L:
                c -= L
            p.append(c)
        if cells.conflicts(p, d2):
            if cells.covers(corner, h, d2):
                vox[i] = vox[nv - 1]
                vox.pop()
        else:
            cells.add(p)
    return _as_array(cells.pts, dim), attempts, RSA_DONE


def _as_array(pts, dim):
    if not pts:
        return np.empty((0, dim))
    return np.asarray(pts, dtype=float)
