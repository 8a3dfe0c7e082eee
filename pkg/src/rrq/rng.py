"""Deterministic random primitives for codebook generation.

Codebooks are never stored; they are regenerated from 64-bit seeds. That
only works if every implementation produces bit-identical draws, so the
whole chain is pinned down here:

* ``mix(seed, index)`` derives child seeds (layer seeds from the model
  seed, codeword seeds from a layer seed). It is the splitmix64 finalizer
  applied to ``seed XOR ((index + 1) * GOLDEN)`` in 64-bit wrapping
  arithmetic.
* ``uint64_stream(seed, count)`` is the splitmix64 output sequence: the
  i-th output (0-based) is ``finalize(seed + (i + 1) * GOLDEN)``.
* ``uniform_stream`` maps each 64-bit word z to the open unit interval via
  ``(float(z >> 11) + 0.5) * 2**-53``.
* ``normal_stream`` applies the Acklam rational approximation of the
  inverse standard-normal CDF to those uniforms (relative error below
  1.15e-9, immaterial for sampling).

The identifier for this exact chain is GENERATOR_ID; model containers
record it so a decoder can refuse streams produced under a different
contract. Changing any constant here is a format break.
"""

import numpy as np

GENERATOR_ID = "splitmix64/acklam-icdf/v1"

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4BB9D)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64 = np.uint64


def _finalize(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer, elementwise on uint64."""
    z = (z ^ (z >> _U64(30))) * _MIX1
    z = (z ^ (z >> _U64(27))) * _MIX2
    return z ^ (z >> _U64(31))


def mix(seed: int, index: int) -> int:
    """Derive a child seed from a parent seed and a non-negative index."""
    s = _U64(seed & 0xFFFFFFFFFFFFFFFF)
    i = _U64((index + 1) & 0xFFFFFFFFFFFFFFFF)
    with np.errstate(over="ignore"):
        z = _finalize(s ^ (i * GOLDEN))
    return int(z)


def uint64_stream(seed: int, count: int) -> np.ndarray:
    """First `count` outputs of splitmix64 started at `seed`."""
    s = _U64(seed & 0xFFFFFFFFFFFFFFFF)
    steps = np.arange(1, count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _finalize(s + steps * GOLDEN)


def uniform_stream(seed: int, count: int) -> np.ndarray:
    """`count` doubles in the open interval (0, 1)."""
    z = uint64_stream(seed, count)
    return ((z >> _U64(11)).astype(np.float64) + 0.5) * 2.0**-53


# Acklam's inverse normal CDF coefficients.
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


def normal_icdf(u: np.ndarray) -> np.ndarray:
    """Inverse standard-normal CDF for u in (0, 1), Acklam's approximation."""
    u = np.asarray(u, dtype=np.float64)
    x = np.empty_like(u)

    lo = u < _P_LOW
    hi = u > 1.0 - _P_LOW
    mid = ~(lo | hi)

    if np.any(mid):
        q = u[mid] - 0.5
        r = q * q
        num = ((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]
        den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        x[mid] = num * q / den
    if np.any(lo):
        q = np.sqrt(-2.0 * np.log(u[lo]))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        x[lo] = num / den
    if np.any(hi):
        q = np.sqrt(-2.0 * np.log(1.0 - u[hi]))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        x[hi] = -num / den
    return x


def normal_stream(seed: int, count: int) -> np.ndarray:
    """`count` standard-normal draws, deterministic in `seed`."""
    return normal_icdf(uniform_stream(seed, count))


def normal_matrix(seeds: np.ndarray, count: int) -> np.ndarray:
    """Row r holds normal_stream(seeds[r], count); vectorized over rows."""
    s = np.asarray(seeds, dtype=np.uint64).reshape(-1, 1)
    steps = np.arange(1, count + 1, dtype=np.uint64).reshape(1, -1)
    with np.errstate(over="ignore"):
        z = _finalize(s + steps * GOLDEN)
    u = ((z >> _U64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return normal_icdf(u)


def mix_array(seed: int, indices: np.ndarray) -> np.ndarray:
    """Vectorized mix() over an index array."""
    s = _U64(seed & 0xFFFFFFFFFFFFFFFF)
    i = (np.asarray(indices, dtype=np.uint64) + _U64(1))
    with np.errstate(over="ignore"):
        return _finalize(s ^ (i * GOLDEN))
