"""Bit-reproducible random numbers and elementary functions.

The decode path and the forward-noising step are specified down to the bit:
given the same seeds and inputs they must produce identical bytes on every
platform and in every reimplementation of the kernels (the flat-buffer
bindings cross-check against this module bit-for-bit). IEEE-754 double
add/sub/mul/div/sqrt are correctly rounded everywhere, so fixing the
evaluation order fixes the result; libm exp/log are *not* bit-stable across
platforms, which is why polynomial versions live here.

Random numbers come from the Philox4x64-10 counter-based generator. Counter
mode means any element of the stream can be produced independently of the
rest, so noise for a masked subset of rows is bitwise identical to slicing a
full draw, and parallel streams never share state. The raw stream matches
``np.random.Philox(key=...).random_raw(n)`` exactly (numpy advances the
counter before each block, so block indices start at 1).
"""

from __future__ import annotations

import numpy as np

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)  # golden-ratio Weyl increment
_W1 = np.uint64(0xBB67AE8584CAA73B)
_MASK32 = np.uint64(0xFFFFFFFF)
_U64 = np.uint64


def _mulhilo(a: np.uint64, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Full 64x64 -> 128 bit product as (hi, lo), via 32-bit limbs."""
    lo = a * b  # wraps mod 2**64
    a0 = a & _MASK32
    a1 = a >> _U64(32)
    b0 = b & _MASK32
    b1 = b >> _U64(32)
    t = a1 * b0 + ((a0 * b0) >> _U64(32))
    u = a0 * b1 + (t & _MASK32)
    hi = a1 * b1 + (t >> _U64(32)) + (u >> _U64(32))
    return hi, lo


def philox_blocks(key0: int, key1: int, block_index: np.ndarray) -> np.ndarray:
    """Philox4x64-10 output blocks for 64-bit block indices (4 words each).

    Counter words 1..3 are zero; the key is (key0, key1). Returns the four
    output lanes of each block, flattened in block order.
    """
    idx = np.asarray(block_index, dtype=np.uint64)
    c0 = idx.copy()
    c1 = np.zeros_like(idx)
    c2 = np.zeros_like(idx)
    c3 = np.zeros_like(idx)
    k0 = _U64(key0 & 0xFFFFFFFFFFFFFFFF)
    k1 = _U64(key1 & 0xFFFFFFFFFFFFFFFF)
    with np.errstate(over="ignore"):
        for _ in range(10):
            hi0, lo0 = _mulhilo(_M0, c0)
            hi1, lo1 = _mulhilo(_M1, c2)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
            k0 = k0 + _W0
            k1 = k1 + _W1
    return np.stack([c0, c1, c2, c3], axis=1).reshape(-1)


def raw64(key0: int, key1: int, n: int, offset: int = 0) -> np.ndarray:
    """Elements [offset, offset+n) of the raw uint64 stream for a key.

    Element i lives in lane i % 4 of block i // 4 + 1, matching numpy's
    Philox ``random_raw`` stream for ``key = key0 + (key1 << 64)``.
    """
    if n < 0 or offset < 0:
        raise ValueError("n and offset must be nonnegative")
    if n == 0:
        return np.empty(0, dtype=np.uint64)
    first_block = offset // 4
    last_block = (offset + n - 1) // 4
    blocks = np.arange(first_block + 1, last_block + 2, dtype=np.uint64)
    out = philox_blocks(key0, key1, blocks)
    lo = offset - first_block * 4
    return out[lo : lo + n]


def uniform01(key0: int, key1: int, n: int, offset: int = 0) -> np.ndarray:
    """Uniform doubles strictly inside (0, 1), one per raw 64-bit word."""
    bits = raw64(key0, key1, n, offset)
    # top 53 bits, centered on half-steps so 0 and 1 are never produced
    return ((bits >> _U64(11)).astype(np.float64) + 0.5) * 2.0**-53


# --- portable log ----------------------------------------------------------

_SQRT_HALF = 0.7071067811865476
_LN2_HI = 6.93147180369123816490e-01  # high part of ln 2, 20 trailing zero bits
_LN2_LO = 1.90821492927058770002e-10
# odd-reciprocal series for 2*atanh(t), highest order first (t^2 <= 0.0295)
_LOG_SERIES = [1.0 / k for k in range(25, 2, -2)]


def log(x) -> np.ndarray:
    """Natural log with a fixed, platform-independent evaluation order."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(x <= 0.0) or not np.all(np.isfinite(x)):
        raise ValueError("log requires finite positive input")
    m, e = np.frexp(x)  # x = m * 2**e, m in [0.5, 1)
    small = m < _SQRT_HALF
    m = np.where(small, m + m, m)  # exact: scaling by 2
    ef = np.where(small, e - 1, e).astype(np.float64)
    t = (m - 1.0) / (m + 1.0)
    w = t * t
    s = np.full_like(t, _LOG_SERIES[0])
    for coef in _LOG_SERIES[1:]:
        s = s * w + coef
    u = t + t  # exact
    lnm = u + u * (w * s)
    return ef * _LN2_HI + (lnm + ef * _LN2_LO)


# --- portable exp ----------------------------------------------------------

_INV_LN2 = 1.4426950408889634


def _factorials(n: int) -> list[float]:
    out, f = [], 1.0
    for k in range(n + 1):
        if k > 0:
            f *= k
        out.append(1.0 / f)
    return out


# Taylor coefficients 1/k! for |r| <= ln2/2, highest order first
_EXP_COEFFS = _factorials(15)[::-1]  # [1/15!, ..., 1/1!, 1/0!]
_EXP_OVERFLOW = 709.0
_EXP_UNDERFLOW = -708.0


def exp(x) -> np.ndarray:
    """Exponential with a fixed, platform-independent evaluation order.

    Saturates to inf above 709 and to 0 below -708; both thresholds are far
    outside the post-shift softmax range this package feeds in.
    """
    x = np.asarray(x, dtype=np.float64)
    kf = np.floor(x * _INV_LN2 + 0.5)
    r = (x - kf * _LN2_HI) - kf * _LN2_LO
    p = np.full_like(r, _EXP_COEFFS[0])
    for c in _EXP_COEFFS[1:]:
        p = p * r + c
    out = np.ldexp(p, kf.astype(np.int64))  # exact power-of-two scaling
    out = np.where(x > _EXP_OVERFLOW, np.inf, out)
    out = np.where(x < _EXP_UNDERFLOW, 0.0, out)
    return out


# --- inverse normal CDF (Acklam's rational approximation) ------------------

_ICDF_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
           1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_ICDF_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
           6.680131188771972e+01, -1.328068155288572e+01)
_ICDF_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
           -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_ICDF_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
           3.754408661907416e+00)
_ICDF_PLOW = 0.02425


def _icdf_tail(p: np.ndarray) -> np.ndarray:
    q = np.sqrt(-2.0 * log(p))
    num = ((((_ICDF_C[0] * q + _ICDF_C[1]) * q + _ICDF_C[2]) * q + _ICDF_C[3]) * q + _ICDF_C[4]) * q + _ICDF_C[5]
    den = (((_ICDF_D[0] * q + _ICDF_D[1]) * q + _ICDF_D[2]) * q + _ICDF_D[3]) * q + 1.0
    return num / den


def _icdf_central(p: np.ndarray) -> np.ndarray:
    q = p - 0.5
    r = q * q
    num = ((((_ICDF_A[0] * r + _ICDF_A[1]) * r + _ICDF_A[2]) * r + _ICDF_A[3]) * r + _ICDF_A[4]) * r + _ICDF_A[5]
    den = ((((_ICDF_B[0] * r + _ICDF_B[1]) * r + _ICDF_B[2]) * r + _ICDF_B[3]) * r + _ICDF_B[4]) * r + 1.0
    return num * q / den


def inv_norm_cdf(p) -> np.ndarray:
    """Standard-normal quantile function for p strictly inside (0, 1)."""
    p = np.asarray(p, dtype=np.float64)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError("inv_norm_cdf requires p in (0, 1)")
    # Evaluate each branch on safe inputs only, then stitch.
    lower = p < _ICDF_PLOW
    upper = p > 1.0 - _ICDF_PLOW
    out = _icdf_central(np.where(lower | upper, 0.5, p))
    if np.any(lower):
        out = np.where(lower, _icdf_tail(np.where(lower, p, 0.5)), out)
    if np.any(upper):
        out = np.where(upper, -_icdf_tail(np.where(upper, 1.0 - p, 0.5)), out)
    return out


def standard_normal(seed: int, n: int, offset: int = 0, stream: int = 0) -> np.ndarray:
    """Seeded standard-normal draws by inverse-CDF over the Philox stream.

    ``(seed, stream)`` form the 128-bit key, so distinct streams are
    independent generators; ``offset`` addresses into one stream, enabling
    exact lazy evaluation of any slice.
    """
    return inv_norm_cdf(uniform01(seed, stream, n, offset))


def seq_sum(x) -> float:
    """Sum in strict left-to-right order (the boundary-exposed convention).

    ``cumsum`` materializes every prefix, which forces sequential rounding;
    a regression test pins this against an explicit loop.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        return 0.0
    return float(np.cumsum(x)[-1])
