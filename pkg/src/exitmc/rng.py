"""Counter-based random streams.

Every Brownian path owns an independent stream addressed by
``(seed, path_index)``; the ``n``-th draw of that stream is a pure function of
``(seed, path_index, n)``.  Nothing is carried between paths, so results do
not depend on how paths are split among workers.

The generator is the SplitMix64 finalizer applied to a Weyl sequence.
Gaussians come from the inverse normal CDF (Acklam's rational approximation,
relative error below 1.2e-9), which needs only arithmetic in the central
region, so the compiled kernel and this module agree bit for bit there.
"""

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
PATH_MULT = np.uint64(0xD1B54A32D192ED03)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO_M53 = 1.0 / 9007199254740992.0

# inverse normal CDF coefficients
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
P_LOW = 0.02425
P_HIGH = 1.0 - P_LOW


def mix64(z):
    """SplitMix64 output function on a uint64 array (wrapping arithmetic)."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def path_keys(seed, path_index, antithetic=False):
    """Stream keys and Gaussian signs for an array of path indices.

    With antithetic sampling, paths ``2k`` and ``2k + 1`` share the stream of
    ``k`` and the odd member negates every increment.
    """
    idx = np.asarray(path_index, dtype=np.uint64)
    if antithetic:
        sign = np.where((idx & np.uint64(1)) == 1, -1.0, 1.0)
        idx = idx >> np.uint64(1)
    else:
        sign = np.ones(idx.shape)
    with np.errstate(over="ignore"):
        base = mix64(np.uint64(seed) + GOLDEN)
        keys = mix64(base ^ (idx * PATH_MULT + np.uint64(1)))
    return keys, sign


def uniforms(keys, counter):
    """Uniform draws in the open interval (0, 1) at position ``counter``."""
    keys = np.asarray(keys, dtype=np.uint64)
    with np.errstate(over="ignore"):
        bits = mix64(keys + (np.uint64(counter) + np.uint64(1)) * GOLDEN)
    return ((bits >> _S11).astype(np.float64) + 0.5) * _TWO_M53


def inverse_normal_cdf(p):
    p = np.asarray(p, dtype=np.float64)
    q = p - 0.5
    r = q * q
    num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
    den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
    out = num / den
    lo = p < P_LOW
    if lo.any():
        out[lo] = _tail(p[lo])
    hi = p > P_HIGH
    if hi.any():
        out[hi] = -_tail(1.0 - p[hi])
    return out


def _tail(p):
    q = np.sqrt(-2.0 * np.log(p))
    num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
    den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
    return num / den


def normals(keys, sign, counter):
    """Standard normal draw number ``counter`` for each stream."""
    return sign * inverse_normal_cdf(uniforms(keys, counter))
