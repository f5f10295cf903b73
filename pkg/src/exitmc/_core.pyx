# cython: language_level=3
"""Compiled Brownian path kernels.

Operation-for-operation mirror of ``exitmc._fallback``; see ``exitmc.rng``
for the stream layout.  Every routine works on a contiguous block of path
indices and releases the GIL, so blocks can run on a thread pool.
"""

from libc.math cimport sqrt, log, pow, fabs
from libc.stdint cimport uint64_t, int64_t, int32_t, uint8_t

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t PATH_MULT = 0xD1B54A32D192ED03ULL
cdef double TWO_M53 = 1.0 / 9007199254740992.0
cdef double P_LOW = 0.02425
cdef double P_HIGH = 1.0 - 0.02425

cdef enum:
    OP_BALL = 1
    OP_ANNULUS = 2
    OP_DIFF = 3
    OP_UNION = 4
    MAX_STACK = 32
    MAX_DIM = 64
    MAX_K = 64

cdef enum:
    MODE_EXIT = 0
    MODE_COUNT = 1
    MODE_FUNCTIONAL = 2

cdef enum:
    FIELD_CONST = 0
    FIELD_RADIAL = 1
    FIELD_NEAREST = 2
    FIELD_IDW = 3


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t path_key(uint64_t seed, uint64_t idx) noexcept nogil:
    cdef uint64_t base = mix64(seed + GOLDEN)
    return mix64(base ^ (idx * PATH_MULT + 1))


cdef inline double tail(double p) noexcept nogil:
    cdef double q = sqrt(-2.0 * log(p))
    cdef double num = ((((-7.784894002430293e-03 * q + -3.223964580411365e-01) * q
                         + -2.400758277161838e+00) * q + -2.549732539343734e+00) * q
                       + 4.374664141464968e+00) * q + 2.938163982698783e+00
    cdef double den = (((7.784695709041462e-03 * q + 3.224671290700398e-01) * q
                        + 2.445134137142996e+00) * q + 3.754408661907416e+00) * q + 1.0
    return num / den


cdef inline double normal(uint64_t key, double sign, uint64_t counter) noexcept nogil:
    cdef uint64_t bits = mix64(key + (counter + 1) * GOLDEN)
    cdef double p = (<double>(bits >> 11) + 0.5) * TWO_M53
    cdef double q, r, num, den, z
    if p < P_LOW:
        z = tail(p)
    elif p > P_HIGH:
        z = -tail(1.0 - p)
    else:
        q = p - 0.5
        r = q * q
        num = (((((-3.969683028665376e+01 * r + 2.209460984245205e+02) * r
                  + -2.759285104469687e+02) * r + 1.383577518672690e+02) * r
                + -3.066479806614716e+01) * r + 2.506628277459239e+00) * q
        den = ((((-5.447609879822406e+01 * r + 1.615858368580409e+02) * r
                 + -1.556989798598866e+02) * r + 6.680131188771972e+01) * r
               + -1.328068155288572e+01) * r + 1.0
        z = num / den
    return sign * z


cdef inline double radius(const double* x, const double* c, int d) noexcept nogil:
    cdef double s = 0.0, t
    cdef int k
    for k in range(d):
        t = x[k] - c[k]
        s = s + t * t
    return sqrt(s)


cdef double sdf(const int32_t* ops, int n_ops, const double* prm, int d,
                const double* x) noexcept nogil:
    cdef double stack[MAX_STACK]
    cdef int sp = 0, i, j, op, arg
    cdef double r, a, b, v
    for i in range(0, n_ops, 2):
        op = ops[i]
        arg = ops[i + 1]
        if op == OP_BALL:
            stack[sp] = radius(x, prm + arg, d) - prm[arg + d]
            sp += 1
        elif op == OP_ANNULUS:
            r = radius(x, prm + arg, d)
            a = r - prm[arg + d + 1]
            b = prm[arg + d] - r
            stack[sp] = a if a >= b else b
            sp += 1
        elif op == OP_DIFF:
            sp -= 1
            b = -stack[sp]
            a = stack[sp - 1]
            stack[sp - 1] = a if a >= b else b
        elif op == OP_UNION:
            v = stack[sp - arg]
            for j in range(sp - arg + 1, sp):
                if stack[j] < v:
                    v = stack[j]
            sp -= arg - 1
            stack[sp - 1] = v
    return stack[0]


cdef inline bint in_mask(const int32_t* iops, int n_iops, const double* iprm,
                         const int32_t* eops, int n_eops, const double* eprm,
                         int d, const double* x) noexcept nogil:
    if n_iops > 0 and not (sdf(iops, n_iops, iprm, d, x) < 0):
        return False
    if n_eops > 0 and sdf(eops, n_eops, eprm, d, x) < 0:
        return False
    return True


cdef struct FieldSpec:
    int kind
    const double* center
    const double* radii
    const double* values
    const double* nodes
    int n_nodes
    int k
    double absorb
    double power
    double scale


cdef double field_value(FieldSpec* f, int d, const double* x) noexcept nogil:
    cdef double r, slope, d2, t, num, den, w
    cdef int lo, hi, mid, i, j, m, n
    cdef double best_d2[MAX_K]
    cdef int best_i[MAX_K]
    if f.kind == FIELD_RADIAL:
        n = f.n_nodes
        r = radius(x, f.center, d)
        if r <= f.radii[0]:
            return f.values[0]
        if r >= f.radii[n - 1]:
            return f.values[n - 1]
        lo = 0
        hi = n - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if f.radii[mid] <= r:
                lo = mid
            else:
                hi = mid
        slope = (f.values[lo + 1] - f.values[lo]) / (f.radii[lo + 1] - f.radii[lo])
        return slope * (r - f.radii[lo]) + f.values[lo]
    # nearest / inverse distance: brute-force k smallest squared distances
    m = 0
    for i in range(f.n_nodes):
        d2 = 0.0
        for j in range(d):
            t = x[j] - f.nodes[i * d + j]
            d2 = d2 + t * t
        if m < f.k:
            j = m
            m += 1
        elif d2 < best_d2[m - 1]:
            j = m - 1
        else:
            continue
        while j > 0 and d2 < best_d2[j - 1]:
            best_d2[j] = best_d2[j - 1]
            best_i[j] = best_i[j - 1]
            j -= 1
        best_d2[j] = d2
        best_i[j] = i
    if f.kind == FIELD_NEAREST or best_d2[0] == 0.0:
        return f.values[best_i[0]]
    num = 0.0
    den = 0.0
    for j in range(m):
        w = 1.0 / best_d2[j]
        num = num + w * f.values[best_i[j]]
        den = den + w
    return num / den


cdef inline double integrand(FieldSpec* f, int d, const double* x, double s) noexcept nogil:
    cdef double u
    if f.kind == FIELD_CONST:
        return f.scale
    if -s < f.absorb:
        u = 0.0
    else:
        u = field_value(f, d, x)
    if not (u > 0.0):
        u = 0.0
    if f.power != 1.0:
        u = pow(u, f.power)
    return f.scale * u


def em_block(const int32_t[::1] ops, const double[::1] prm,
             const int32_t[::1] iops, const double[::1] iprm,
             const int32_t[::1] eops, const double[::1] eprm,
             int mode, int field_kind, const double[::1] fcenter,
             const double[::1] fradii, const double[::1] fvalues,
             const double[:, ::1] fnodes, int fk, double fabsorb, double fpower,
             double fscale, double cap,
             const double[::1] x0, uint64_t seed, int64_t start, int64_t n,
             double sqrt_h, int64_t max_steps, bint antithetic,
             int64_t[::1] out_steps, int64_t[::1] out_count, double[::1] out_acc,
             double[:, ::1] out_pt, uint8_t[::1] out_trunc):
    """Euler-Maruyama paths ``start .. start + n - 1`` from ``x0``.

    Returns ``None`` or ``(path_index, g_value, point)`` for the first path
    whose integrand exceeded ``cap``.
    """
    cdef int d = x0.shape[0]
    cdef int n_ops = ops.shape[0], n_iops = iops.shape[0], n_eops = eops.shape[0]
    cdef double x[MAX_DIM]
    cdef int64_t p, steps, count
    cdef uint64_t key, idx, ctr
    cdef double sign, s, g, acc
    cdef int i
    cdef bint masked = n_iops > 0 or n_eops > 0
    cdef int64_t err_path = -1
    cdef double err_g = 0.0
    cdef double err_x[MAX_DIM]
    cdef FieldSpec f
    if d > MAX_DIM:
        raise ValueError("dimension too large for the compiled kernel")
    if fk > MAX_K:
        raise ValueError("too many interpolation neighbours for the compiled kernel")
    f.kind = field_kind
    f.center = &fcenter[0]
    f.radii = &fradii[0]
    f.values = &fvalues[0]
    f.nodes = &fnodes[0, 0]
    f.n_nodes = fvalues.shape[0]
    f.k = fk
    f.absorb = fabsorb
    f.power = fpower
    f.scale = fscale
    with nogil:
        for p in range(n):
            idx = <uint64_t>(start + p)
            sign = 1.0
            if antithetic:
                if idx & 1:
                    sign = -1.0
                idx = idx >> 1
            key = path_key(seed, idx)
            for i in range(d):
                x[i] = x0[i]
            steps = 0
            count = 0
            acc = 0.0
            out_trunc[p] = 0
            while True:
                s = sdf(&ops[0], n_ops, &prm[0], d, x)
                if not (s < 0):
                    break
                if steps >= max_steps:
                    out_trunc[p] = 1
                    break
                if mode == MODE_COUNT:
                    if in_mask(&iops[0], n_iops, &iprm[0], &eops[0], n_eops, &eprm[0], d, x):
                        count += 1
                elif mode == MODE_FUNCTIONAL:
                    if masked and not in_mask(&iops[0], n_iops, &iprm[0],
                                              &eops[0], n_eops, &eprm[0], d, x):
                        g = 0.0
                    else:
                        g = integrand(&f, d, x, s)
                    if fabs(g) > cap:
                        err_path = start + p
                        err_g = g
                        for i in range(d):
                            err_x[i] = x[i]
                        break
                    acc = acc + g
                ctr = <uint64_t>steps * d
                for i in range(d):
                    x[i] = x[i] + sqrt_h * normal(key, sign, ctr + i)
                steps += 1
            if err_path >= 0:
                break
            out_steps[p] = steps
            out_count[p] = count
            out_acc[p] = acc
            for i in range(d):
                out_pt[p, i] = x[i]
    if err_path >= 0:
        return (err_path, err_g, [err_x[i] for i in range(d)])
    return None


def wos_block(const int32_t[::1] ops, const double[::1] prm,
              const double[::1] x0, uint64_t seed, int64_t start, int64_t n,
              double eps, int64_t max_steps, bint antithetic,
              int64_t[::1] out_steps, double[::1] out_time,
              double[:, ::1] out_pt, uint8_t[::1] out_trunc):
    """Walk-on-spheres paths; the time is the sum of ``r_k**2 / d`` per jump."""
    cdef int d = x0.shape[0]
    cdef int n_ops = ops.shape[0]
    cdef double x[MAX_DIM]
    cdef double z[MAX_DIM]
    cdef int64_t p, steps
    cdef uint64_t key, idx, ctr
    cdef double sign, r, t, norm2, scale
    cdef double dd = <double>d
    cdef int i
    if d > MAX_DIM:
        raise ValueError("dimension too large for the compiled kernel")
    with nogil:
        for p in range(n):
            idx = <uint64_t>(start + p)
            sign = 1.0
            if antithetic:
                if idx & 1:
                    sign = -1.0
                idx = idx >> 1
            key = path_key(seed, idx)
            for i in range(d):
                x[i] = x0[i]
            steps = 0
            t = 0.0
            out_trunc[p] = 0
            while True:
                r = -sdf(&ops[0], n_ops, &prm[0], d, x)
                if r < eps:
                    break
                if steps >= max_steps:
                    out_trunc[p] = 1
                    break
                ctr = <uint64_t>steps * d
                norm2 = 0.0
                for i in range(d):
                    z[i] = normal(key, sign, ctr + i)
                    norm2 = norm2 + z[i] * z[i]
                scale = r / sqrt(norm2)
                for i in range(d):
                    x[i] = x[i] + scale * z[i]
                t = t + r * r / dd
                steps += 1
            out_steps[p] = steps
            out_time[p] = t
            for i in range(d):
                out_pt[p, i] = x[i]


def normals_block(uint64_t seed, int64_t path_index, int64_t n, bint antithetic=False):
    """First ``n`` Gaussian draws of one stream (for cross-checking the fallback)."""
    cdef uint64_t idx = <uint64_t>path_index
    cdef double sign = 1.0
    if antithetic:
        if idx & 1:
            sign = -1.0
        idx = idx >> 1
    cdef uint64_t key = path_key(seed, idx)
    cdef int64_t i
    out = [normal(key, sign, <uint64_t>i) for i in range(n)]
    return out
