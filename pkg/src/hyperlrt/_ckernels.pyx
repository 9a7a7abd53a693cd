# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Same signatures and semantics as ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport (cos, sin, floor, exp, expm1, log, log1p, sqrt, fabs,
                        ceil, INFINITY, NAN, M_PI)
from libc.stdlib cimport malloc, realloc, free
from numpy.random cimport bitgen_t

cnp.import_array()

BOUNDARY = 0
POSITIVE = 1
NEGATIVE = 2

cdef enum:
    _DONE = 0
    _SATURATED = 1
    _BUDGET = 2

RSA_DONE = _DONE
RSA_SATURATED = _SATURATED
RSA_BUDGET = _BUDGET

cdef double _EPS = 2.220446049250313e-16
cdef double _ZMAX = 700.0


cdef inline void _neumaier(double *s, double *c, double v) noexcept nogil:
    cdef double t = s[0] + v
    if fabs(s[0]) >= fabs(v):
        c[0] += (s[0] - t) + v
    else:
        c[0] += (v - t) + s[0]
    s[0] = t


def structure_sums(points, indices, double box_length):
    cdef const double[:, ::1] P = np.ascontiguousarray(points, dtype=np.float64)
    idx = np.ascontiguousarray(indices, dtype=np.float64)
    if idx.size and not np.array_equal(idx, np.round(idx)):
        return _direct_sums(P, idx, box_length)
    cdef const long[:, ::1] K = idx.astype(np.int_)
    cdef Py_ssize_t npts = P.shape[0], nk = K.shape[0], dim = P.shape[1]
    cdef long mmax = int(np.abs(idx).max()) if idx.size else 0
    cdef Py_ssize_t width = mmax + 1
    # per-axis phasors exp(-2 pi i m x_a / L) for m = 0..mmax
    cdef double[:, ::1] PR = np.empty((dim, width)), PI = np.empty((dim, width))
    acc = np.zeros((4, nk))
    cdef double[:, ::1] A = acc
    cdef Py_ssize_t i, j, a, m
    cdef long n
    cdef double turns, br, bi, zr, zi, tr
    cdef double inv_l = 1.0 / box_length
    with nogil:
        for i in range(npts):
            for a in range(dim):
                turns = P[i, a] * inv_l
                turns = turns - floor(turns)
                br = cos(2.0 * M_PI * turns)
                bi = -sin(2.0 * M_PI * turns)
                PR[a, 0] = 1.0
                PI[a, 0] = 0.0
                for m in range(1, width):
                    if m % 16 == 0:
                        # resynchronise the recurrence from an exactly reduced phase
                        turns = m * (P[i, a] * inv_l)
                        turns = turns - floor(turns)
                        PR[a, m] = cos(2.0 * M_PI * turns)
                        PI[a, m] = -sin(2.0 * M_PI * turns)
                    else:
                        PR[a, m] = PR[a, m - 1] * br - PI[a, m - 1] * bi
                        PI[a, m] = PR[a, m - 1] * bi + PI[a, m - 1] * br
            for j in range(nk):
                zr = 1.0
                zi = 0.0
                for a in range(dim):
                    n = K[j, a]
                    if n >= 0:
                        tr = zr * PR[a, n] - zi * PI[a, n]
                        zi = zr * PI[a, n] + zi * PR[a, n]
                    else:
                        # conjugate phasor for negative indices
                        tr = zr * PR[a, -n] + zi * PI[a, -n]
                        zi = zi * PR[a, -n] - zr * PI[a, -n]
                    zr = tr
                _neumaier(&A[0, j], &A[1, j], zr)
                _neumaier(&A[2, j], &A[3, j], zi)
    return acc[0] + acc[1], acc[2] + acc[3]


def _direct_sums(const double[:, ::1] P, indices, double box_length):
    # non-integer indices: one cos/sin pair per point and vector
    cdef const double[:, ::1] K = indices
    cdef Py_ssize_t npts = P.shape[0], nk = K.shape[0], dim = P.shape[1]
    cdef Py_ssize_t i, j, a
    acc = np.zeros((4, nk))
    cdef double[:, ::1] A = acc
    cdef double turns
    cdef double inv_l = 1.0 / box_length
    with nogil:
        for j in range(nk):
            for i in range(npts):
                turns = 0.0
                for a in range(dim):
                    turns = turns + P[i, a] * K[j, a]
                turns = turns * inv_l
                turns = turns - floor(turns)
                _neumaier(&A[0, j], &A[1, j], cos(2.0 * M_PI * turns))
                _neumaier(&A[2, j], &A[3, j], -sin(2.0 * M_PI * turns))
    return acc[0] + acc[1], acc[2] + acc[3]


# ---------------------------------------------------------------------------
# profile likelihood

cdef struct Sample:
    const double *kappa
    const double *x
    Py_ssize_t n
    double ref
    double kmax


cdef double _pos_slope(Sample *S, double z) noexcept nogil:
    cdef double y = S.ref * exp(z)
    cdef double w, xw, s1 = 0.0, s2 = 0.0, s3 = 0.0, u
    cdef Py_ssize_t j
    if y <= S.ref:
        for j in range(S.n):
            w = 1.0 / (S.kappa[j] + y)
            xw = S.x[j] * w
            s1 += w
            s2 += xw * w
            s3 += xw
        return y * (-s1 + S.n * s2 / s3)
    u = 1.0 / y
    for j in range(S.n):
        w = 1.0 / (1.0 + u * S.kappa[j])
        xw = S.x[j] * w
        s1 += S.kappa[j] * w
        s2 += xw * S.kappa[j] * w
        s3 += xw
    return -u * (-s1 + S.n * s2 / s3)


cdef inline double _neg_term(Sample *S, Py_ssize_t j, double v) noexcept nogil:
    cdef double rho = S.kappa[j] / S.kmax
    return rho * exp(-v) + (1.0 - rho)


cdef double _neg_slope(Sample *S, double v) noexcept nogil:
    cdef double u = expm1(-v) / S.kmax
    cdef double w, xw, s1 = 0.0, s2 = 0.0, s3 = 0.0, dh
    cdef Py_ssize_t j
    for j in range(S.n):
        w = 1.0 / _neg_term(S, j, v)
        xw = S.x[j] * w
        s1 += S.kappa[j] * w
        s2 += xw * S.kappa[j] * w
        s3 += xw
    dh = -s1 + S.n * s2 / s3
    return -dh * (1.0 + u * S.kmax)


cdef double _eval(Sample *S, int which, double t) noexcept nogil:
    if which == 0:
        return _pos_slope(S, t)
    return _neg_slope(S, t)


cdef int _brent_root(Sample *S, int which, double a, double b, double fa, double fb,
                     double xtol, double rtol, double *root) noexcept nogil:
    cdef double c = a, fc = fa, d = b - a, e = b - a
    cdef double tol, m, s, p, q, r, tmp
    cdef int it
    for it in range(200):
        if (fb > 0) == (fc > 0):
            c = a
            fc = fa
            d = b - a
            e = d
        if fabs(fc) < fabs(fb):
            a = b
            b = c
            c = a
            fa = fb
            fb = fc
            fc = fa
        tol = 2.0 * rtol * fabs(b) + 0.5 * xtol
        m = 0.5 * (c - b)
        if fabs(m) <= tol or fb == 0.0:
            root[0] = b
            return 0
        if fabs(e) < tol or fabs(fa) <= fabs(fb):
            d = m
            e = m
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
            tmp = 3.0 * m * q - fabs(tol * q)
            if fabs(e * q) < tmp:
                tmp = fabs(e * q)
            if 2.0 * p < tmp:
                e = d
                d = p / q
            else:
                d = m
                e = m
        a = b
        fa = fb
        if fabs(d) > tol:
            b += d
        elif m > 0:
            b += tol
        else:
            b -= tol
        fb = _eval(S, which, b)
    return 1


cdef enum:
    _NSCAN = 32

# the scan covers y in [kmin e^-PAD, kmax e^PAD] and v in [0, log(kmax / gap) + PAD]
cdef double _PAD = 4.0


cdef int _refine(Sample *S, int which, double a, double b, double fa, double fb,
                 double xtol, double *root) noexcept nogil:
    if fb == 0.0:
        root[0] = b
        return 0
    return _brent_root(S, which, a, b, fa, fb, xtol, 4.0 * _EPS, root)


cdef int _pos_up(Sample *S, double lo, double flo, double *yout) noexcept nogil:
    # slope positive at lo: march towards y = inf until it turns
    cdef double hi, fhi, step = 1.0, zs
    while True:
        hi = lo + step
        if hi > _ZMAX:
            yout[0] = INFINITY
            return 0
        fhi = _pos_slope(S, hi)
        if fhi <= 0.0:
            break
        lo = hi
        flo = fhi
        step *= 2.0
    if _refine(S, 0, lo, hi, flo, fhi, 1e-14, &zs) != 0:
        return 1
    yout[0] = S.ref * exp(zs)
    return 0


cdef int _pos_down(Sample *S, double hi, double fhi, double *yout) noexcept nogil:
    # slope negative at hi but positive at y = 0+: march towards y = 0
    cdef double lo, flo, step = 1.0, zs
    while True:
        lo = hi - step
        if lo < -_ZMAX:
            yout[0] = S.ref * exp(lo)
            return 0
        flo = _pos_slope(S, lo)
        if flo >= 0.0:
            break
        hi = lo
        fhi = flo
        step *= 2.0
    if flo == 0.0:
        yout[0] = S.ref * exp(lo)
        return 0
    if _refine(S, 0, lo, hi, flo, fhi, 1e-14, &zs) != 0:
        return 1
    yout[0] = S.ref * exp(zs)
    return 0


cdef int _neg_up(Sample *S, double lo, double flo, double *vout) noexcept nogil:
    cdef double hi, fhi, step = 1.0
    while True:
        hi = lo + step
        if hi > _ZMAX:
            return 2
        fhi = _neg_slope(S, hi)
        if fhi <= 0.0:
            break
        lo = hi
        flo = fhi
        step *= 2.0
    return _refine(S, 1, lo, hi, flo, fhi, 1e-300, vout)


cdef double _pos_gain(Sample *S, double y, double a, double f0, double sx) noexcept nogil:
    cdef double e = 0.0, sl = 0.0, u
    cdef Py_ssize_t j
    if y == INFINITY:
        return -S.n * log(sx) - f0
    if y > S.ref:
        # factor y out of every kappa + y to avoid cancellation at large y
        u = 1.0 / y
        for j in range(S.n):
            sl += log1p(u * S.kappa[j])
            e += S.x[j] / (1.0 + u * S.kappa[j])
        return -sl - S.n * log(e) - f0
    for j in range(S.n):
        e += S.x[j] / (S.kappa[j] * (y + S.kappa[j]))
        sl += log1p(y / S.kappa[j])
    return -sl - S.n * log1p(-y * e / a)


cdef double _neg_gain(Sample *S, double v, double f0, double sx) noexcept nogil:
    cdef double sl = 0.0, sw = 0.0, term
    cdef Py_ssize_t j
    if v == 0.0:
        return -S.n * log(sx) - f0
    for j in range(S.n):
        term = _neg_term(S, j, v)
        sl += log(term)
        sw += S.x[j] / term
    return -sl - S.n * log(sw) - f0


cdef int _fit_one(const double *kappa, const double *x, Py_ssize_t n,
                  long *branch, double *param, double *stat) noexcept nogil:
    cdef Sample S
    cdef Py_ssize_t j
    cdef int i, err
    cdef double inv, xk, a = 0.0, b = 0.0, c = 0.0, sx = 0.0, sxk = 0.0, sk = 0.0
    cdef double slog = 0.0, kmin = kappa[0], kmax = kappa[0], knext = -1.0
    cdef double d0, g0, f0, best = 0.0, gain, y, v, zlo, zhi, vmax
    cdef double zg[_NSCAN + 1]
    cdef double fg[_NSCAN + 1]
    for j in range(n):
        inv = 1.0 / kappa[j]
        xk = x[j] * inv
        a += xk
        b += xk * inv
        c += inv
        sx += x[j]
        sxk += x[j] * kappa[j]
        sk += kappa[j]
        slog += log(kappa[j])
        if kappa[j] < kmin:
            kmin = kappa[j]
        if kappa[j] > kmax:
            kmax = kappa[j]
    branch[0] = 0
    param[0] = 0.0
    stat[0] = 0.0
    if kmin == kmax:
        # flat design: s and t are not separately identifiable
        return 0
    for j in range(n):
        if kappa[j] < kmax and kappa[j] > knext:
            knext = kappa[j]
    d0 = -c + n * b / a
    g0 = -sk + n * sxk / sx
    f0 = -slog - n * log(a)
    S.kappa = kappa
    S.x = x
    S.n = n
    S.ref = sqrt(kmin * kmax)
    S.kmax = kmax

    # positive branch, y = s / t in (0, inf), scanned in z = log(y / ref)
    zlo = log(kmin / S.ref) - _PAD
    zhi = log(kmax / S.ref) + _PAD
    for i in range(_NSCAN + 1):
        zg[i] = zlo + (zhi - zlo) * i / _NSCAN
        fg[i] = _pos_slope(&S, zg[i])
    if d0 > 0.0 and fg[0] < 0.0:
        err = _pos_down(&S, zg[0], fg[0], &y)
        if err != 0:
            return err
        gain = _pos_gain(&S, y, a, f0, sx)
        if gain > best:
            branch[0] = 1
            param[0] = y
            best = gain
    for i in range(_NSCAN):
        if fg[i] > 0.0 and fg[i + 1] <= 0.0:
            err = _refine(&S, 0, zg[i], zg[i + 1], fg[i], fg[i + 1], 1e-14, &v)
            if err != 0:
                return err
            y = S.ref * exp(v)
            gain = _pos_gain(&S, y, a, f0, sx)
            if gain > best:
                branch[0] = 1
                param[0] = y
                best = gain
    if fg[_NSCAN] > 0.0 and g0 >= 0.0:
        err = _pos_up(&S, zg[_NSCAN], fg[_NSCAN], &y)
        if err != 0:
            return err
        gain = _pos_gain(&S, y, a, f0, sx)
        if gain > best:
            branch[0] = 1
            param[0] = y
            best = gain

    # negative branch, t / s = expm1(-v) / kmax with v in (0, inf)
    vmax = log(kmax / (kmax - knext)) + _PAD
    for i in range(_NSCAN + 1):
        zg[i] = vmax * i / _NSCAN
        fg[i] = _neg_slope(&S, zg[i])
    for i in range(_NSCAN):
        if fg[i] > 0.0 and fg[i + 1] <= 0.0:
            err = _refine(&S, 1, zg[i], zg[i + 1], fg[i], fg[i + 1], 1e-300, &v)
            if err != 0:
                return err
            gain = _neg_gain(&S, v, f0, sx)
            if gain > best:
                branch[0] = 2
                param[0] = expm1(-v) / kmax
                best = gain
    if fg[_NSCAN] > 0.0:
        err = _neg_up(&S, zg[_NSCAN], fg[_NSCAN], &v)
        if err != 0:
            return err
        gain = _neg_gain(&S, v, f0, sx)
        if gain > best:
            branch[0] = 2
            param[0] = expm1(-v) / kmax
            best = gain
    stat[0] = 2.0 * best
    return 0


def fit_profile(kappa, x):
    cdef const double[::1] K = np.ascontiguousarray(kappa, dtype=np.float64)
    cdef const double[::1] X = np.ascontiguousarray(x, dtype=np.float64)
    cdef long br = 0
    cdef double par = 0.0, st = 0.0
    cdef int err
    if K.shape[0] != X.shape[0]:
        raise ValueError("kappa and x differ in length")
    with nogil:
        err = _fit_one(&K[0], &X[0], K.shape[0], &br, &par, &st)
    if err != 0:
        raise RuntimeError("profile likelihood root finder failed")
    return int(br), float(par), float(st)


def fit_profile_batch(kappa, xs):
    cdef const double[::1] K = np.ascontiguousarray(kappa, dtype=np.float64)
    cdef const double[:, ::1] X = np.ascontiguousarray(np.atleast_2d(xs), dtype=np.float64)
    cdef Py_ssize_t m = X.shape[0], n = X.shape[1], i
    branch = np.empty(m, dtype=np.int64)
    param = np.empty(m)
    stat = np.empty(m)
    cdef long[::1] B = branch
    cdef double[::1] P = param, T = stat
    cdef int err = 0
    if n != K.shape[0]:
        raise ValueError("kappa and x differ in length")
    with nogil:
        for i in range(m):
            err = _fit_one(&K[0], &X[i, 0], n, &B[i], &P[i], &T[i])
            if err != 0:
                B[i] = -1
                P[i] = NAN
                T[i] = NAN
    return branch, param, stat


# ---------------------------------------------------------------------------
# stable matching

def gale_shapley(cand, dist, Py_ssize_t n_receivers):
    cdef const long[:, ::1] C = np.ascontiguousarray(cand, dtype=np.int64)
    cdef const double[:, ::1] D = np.ascontiguousarray(dist, dtype=np.float64)
    cdef Py_ssize_t m = C.shape[0], k = C.shape[1]
    partner_arr = np.full(m, -1, dtype=np.int64)
    cdef long[::1] partner = partner_arr
    cdef long[::1] holder = np.full(max(n_receivers, 1), -1, dtype=np.int64)
    cdef double[::1] held = np.zeros(max(n_receivers, 1))
    cdef long[::1] nxt = np.zeros(max(m, 1), dtype=np.int64)
    cdef long[::1] stack = np.empty(max(m, 1), dtype=np.int64)
    cdef Py_ssize_t top = 0, i, pos, j, cur
    cdef double dd
    cdef bint complete = True
    for i in range(m - 1, -1, -1):
        stack[top] = i
        top += 1
    with nogil:
        while top > 0:
            top -= 1
            i = stack[top]
            pos = nxt[i]
            if pos >= k:
                complete = False
                break
            j = C[i, pos]
            dd = D[i, pos]
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
                stack[top] = cur
                top += 1
            else:
                stack[top] = i
                top += 1
    return partner_arr, bool(complete)


# ---------------------------------------------------------------------------
# random sequential adsorption

cdef struct Cells:
    int nc
    int brute
    double side
    int dim
    double L
    double half
    long *head
    long *nxt
    double *pts
    long npts
    int noff
    int offsets[27 * 3]


cdef inline double _rand(bitgen_t *bg) noexcept nogil:
    return bg.next_double(bg.state)


cdef inline double _delta(Cells *c, double a, double b) noexcept nogil:
    cdef double d = a - b
    if d >= c.half:
        d -= c.L
    elif d < -c.half:
        d += c.L
    return d


cdef inline long _flat_of(Cells *c, const double *p) noexcept nogil:
    cdef long f = 0
    cdef int k, ci
    for k in range(c.dim):
        ci = <int>(p[k] / c.side)
        if ci >= c.nc:
            ci = c.nc - 1
        f = f * c.nc + ci
    return f


cdef void _add(Cells *c, const double *p) noexcept nogil:
    cdef long i = c.npts
    cdef int k
    for k in range(c.dim):
        c.pts[i * c.dim + k] = p[k]
    cdef long f = _flat_of(c, p)
    c.nxt[i] = c.head[f]
    c.head[f] = i
    c.npts += 1


# mode 0: point conflict test; mode 1: voxel fully covered by one exclusion ball
cdef bint _scan(Cells *c, const double *p, double hh, double d2, int mode) noexcept nogil:
    cdef int o, k, ci
    cdef long f, j
    cdef double s, dk
    cdef int base[3]
    if c.brute:
        for j in range(c.npts):
            s = 0.0
            for k in range(c.dim):
                dk = _delta(c, p[k], c.pts[j * c.dim + k])
                if mode == 1:
                    dk = fabs(dk) + hh
                s += dk * dk
            if s < d2:
                return True
        return False
    for k in range(c.dim):
        ci = <int>(p[k] / c.side)
        if ci >= c.nc:
            ci = c.nc - 1
        base[k] = ci
    for o in range(c.noff):
        f = 0
        for k in range(c.dim):
            f = f * c.nc + (base[k] + c.offsets[o * 3 + k] + c.nc) % c.nc
        j = c.head[f]
        while j >= 0:
            s = 0.0
            for k in range(c.dim):
                dk = _delta(c, p[k], c.pts[j * c.dim + k])
                if mode == 1:
                    dk = fabs(dk) + hh
                s += dk * dk
            if s < d2:
                return True
            j = c.nxt[j]
    return False


cdef bint _covers(Cells *c, const double *corner, double h, double d2) noexcept nogil:
    cdef double centre[3]
    cdef double hh = 0.5 * h
    cdef int k
    for k in range(c.dim):
        centre[k] = corner[k] + hh
    return _scan(c, centre, hh, d2, 1)


def rsa_fill(rng, long n_target, double diameter, double box_length, int dim,
             long max_attempts, long switch_after=100, int max_level=40):
    if dim < 1 or dim > 3:
        raise ValueError("compiled RSA supports dim 1..3")
    capsule = rng.bit_generator.capsule
    cdef bitgen_t *bg = <bitgen_t *> PyCapsule_GetPointer(capsule, "BitGenerator")
    cdef Cells c
    cdef double L = box_length, d2 = diameter * diameter
    cdef long ncells, i, attempts = 0, fails = 0, nv, m, flat, cap, level_size, at_level
    cdef int k, o, status = _DONE, level = 0, sub, nsub
    cdef double h, cval
    cdef double p[3]
    cdef double corner[3]
    cdef double child[3]
    cdef double *vox = NULL
    cdef double *nvox = NULL
    cdef long nchild, mpow

    c.nc = <int>(L // diameter)
    if c.nc < 1:
        c.nc = 1
    c.brute = c.nc < 3
    c.side = L / c.nc
    c.dim = dim
    c.L = L
    c.half = 0.5 * L
    ncells = 1
    for k in range(dim):
        ncells *= c.nc
    c.noff = 0
    if not c.brute:
        c.noff = 1
        for k in range(dim):
            c.noff *= 3
        for o in range(c.noff):
            mpow = 1
            for k in range(dim - 1, -1, -1):
                c.offsets[o * 3 + k] = (o // mpow) % 3 - 1
                mpow *= 3
    c.head = <long *> malloc(ncells * sizeof(long))
    c.nxt = <long *> malloc((n_target + 1) * sizeof(long))
    c.pts = <double *> malloc((n_target + 1) * dim * sizeof(double))
    c.npts = 0
    if c.head == NULL or c.nxt == NULL or c.pts == NULL:
        free(c.head); free(c.nxt); free(c.pts)
        raise MemoryError()
    for i in range(ncells):
        c.head[i] = -1

    try:
        with rng.bit_generator.lock:
            with nogil:
                while c.npts < n_target and fails < switch_after:
                    if attempts >= max_attempts:
                        status = _BUDGET
                        break
                    attempts += 1
                    for k in range(dim):
                        cval = _rand(bg) * L
                        if cval >= L:
                            cval -= L
                        p[k] = cval
                    if _scan(&c, p, 0.0, d2, 0):
                        fails += 1
                    else:
                        _add(&c, p)
                        fails = 0

                if status == _DONE and c.npts < n_target:
                    m = <long>ceil(2.0 * sqrt(<double>dim) * L / diameter)
                    h = L / m
                    mpow = 1
                    for k in range(dim):
                        mpow *= m
                    cap = mpow
                    vox = <double *> malloc(cap * dim * sizeof(double))
                    nv = 0
                    for flat in range(mpow):
                        i = 1
                        for k in range(dim - 1, -1, -1):
                            corner[k] = ((flat // i) % m) * h
                            i *= m
                        if not _covers(&c, corner, h, d2):
                            for k in range(dim):
                                vox[nv * dim + k] = corner[k]
                            nv += 1
                    at_level = 0
                    level_size = nv
                    nsub = 1 << dim
                    while c.npts < n_target:
                        if nv == 0:
                            status = _SATURATED
                            break
                        if at_level >= 2 * level_size:
                            level += 1
                            if level > max_level:
                                status = _SATURATED
                                break
                            h *= 0.5
                            nvox = <double *> malloc(nv * nsub * dim * sizeof(double))
                            nchild = 0
                            for i in range(nv):
                                for sub in range(nsub):
                                    for k in range(dim):
                                        child[k] = vox[i * dim + k] + ((sub >> (dim - 1 - k)) & 1) * h
                                    if not _covers(&c, child, h, d2):
                                        for k in range(dim):
                                            nvox[nchild * dim + k] = child[k]
                                        nchild += 1
                            free(vox)
                            vox = nvox
                            nvox = NULL
                            nv = nchild
                            at_level = 0
                            level_size = nv
                            continue
                        if attempts >= max_attempts:
                            status = _BUDGET
                            break
                        attempts += 1
                        at_level += 1
                        i = <long>(_rand(bg) * nv)
                        if i >= nv:
                            i = nv - 1
                        for k in range(dim):
                            cval = vox[i * dim + k] + _rand(bg) * h
                            if cval >= L:
                                cval -= L
                            p[k] = cval
                        if _scan(&c, p, 0.0, d2, 0):
                            if _covers(&c, &vox[i * dim], h, d2):
                                for k in range(dim):
                                    vox[i * dim + k] = vox[(nv - 1) * dim + k]
                                nv -= 1
                        else:
                            _add(&c, p)
        out = np.empty((c.npts, dim))
        for i in range(c.npts):
            for k in range(dim):
                out[i, k] = c.pts[i * dim + k]
    finally:
        free(c.head)
        free(c.nxt)
        free(c.pts)
        if vox != NULL:
            free(vox)
    return out, attempts, status
