"""Counter-based random numbers (Philox4x64-10), vectorised over counters.

Every random quantity in the package is addressed by an explicit counter
``(a, b, c, stream)`` under a key derived from the user seed, so that a draw
never depends on how many other draws were made before it.  This is what lets
a noise path be extended in the number of coordinates without reshuffling the
coordinates that already exist, and lets parallel workers reproduce any
subset of a run.

The block function is bit-compatible with :class:`numpy.random.Philox`; the
test-suite checks this.
"""

from __future__ import annotations

import numpy as np

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_LO32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)

# stream tags (fourth counter word)
GAUSS = 1
STABLE = 2
POISSON = 3
JUMP = 4
AUX = 5


def _mulhilo(a, b):
    a_lo, a_hi = a & _LO32, a >> _S32
    b_lo, b_hi = b & _LO32, b >> _S32
    ll = a_lo * b_lo
    lh = a_lo * b_hi
    hl = a_hi * b_lo
    hh = a_hi * b_hi
    mid = (ll >> _S32) + (lh & _LO32) + (hl & _LO32)
    hi = hh + (lh >> _S32) + (hl >> _S32) + (mid >> _S32)
    return hi, a * b


def philox4x64(counter, key):
    """Apply the Philox4x64-10 bijection.

    Parameters
    ----------
    counter : sequence of four integer arrays (broadcastable)
    key : sequence of two integers

    Returns
    -------
    tuple of four ``uint64`` arrays
    """
    c0, c1, c2, c3 = np.broadcast_arrays(*[np.asarray(c, dtype=np.uint64) for c in counter])
    k0 = np.uint64(key[0])
    k1 = np.uint64(key[1])
    with np.errstate(over="ignore"):
        for r in range(10):
            if r:
                k0 = k0 + _W0
                k1 = k1 + _W1
            hi0, lo0 = _mulhilo(_M0, c0)
            hi1, lo1 = _mulhilo(_M1, c2)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


def seed_key(seed: int) -> tuple[int, int]:
    seed = int(seed)
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return seed & 0xFFFFFFFFFFFFFFFF, (seed >> 64) & 0xFFFFFFFFFFFFFFFF


def uniforms(seed: int, a, b, c, stream: int) -> np.ndarray:
    """Four uniforms in the open interval (0, 1) per counter.

    Returns an array of shape ``broadcast(a, b, c).shape + (4,)``.
    """
    words = philox4x64((a, b, c, stream), seed_key(seed))
    out = np.stack(words, axis=-1)
    return ((out >> _S11).astype(np.float64) + 0.5) * 2.0**-53


def normals(seed: int, a, b, c, stream: int) -> np.ndarray:
    """One standard normal per counter (Box-Muller on the first two uniforms)."""
    u = uniforms(seed, a, b, c, stream)
    return np.sqrt(-2.0 * np.log(u[..., 0])) * np.cos(2.0 * np.pi * u[..., 1])
