"""Counter-based random streams (Philox4x64-10) usable inside numba kernels.

Every trajectory owns an independent stream addressed by a 128-bit key
derived from ``(master_seed, ic_index, path_index)``. Block ``c`` of a stream
is ``philox4x64((c, 0, 0, 0), key)``, which matches numpy's ``Philox`` bit
generator started at counter ``c - 1``. Because a draw depends only on the
key and the counter, results do not depend on which worker simulates a
trajectory or in which order.

Normals are produced four at a time (two Box-Muller pairs per block) into a
caller-owned buffer whose length must be a multiple of four.
"""

import numpy as np
from numba import njit, uint64

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_LO32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)

_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM_C1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_C2 = np.uint64(0x94D049BB133111EB)

_TWO_PI = 2.0 * np.pi
_INV_2_53 = 1.0 / 9007199254740992.0

BUFFER_SIZE = 256


@njit(inline="always")
def _mulhilo(a, b):
    a_lo = a & _LO32
    a_hi = a >> _S32
    b_lo = b & _LO32
    b_hi = b >> _S32
    ll = a_lo * b_lo
    lh = a_lo * b_hi
    hl = a_hi * b_lo
    hh = a_hi * b_hi
    mid = (ll >> _S32) + (lh & _LO32) + (hl & _LO32)
    hi = hh + (lh >> _S32) + (hl >> _S32) + (mid >> _S32)
    return hi, a * b


@njit(nogil=True, cache=True)
def philox4x64(c0, c1, c2, c3, k0, k1):
    """Philox4x64 with 10 rounds; returns four uint64 words."""
    for r in range(10):
        hi0, lo0 = _mulhilo(_M0, c0)
        hi1, lo1 = _mulhilo(_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        if r < 9:
            k0 = k0 + _W0
            k1 = k1 + _W1
    return c0, c1, c2, c3


@njit(nogil=True, cache=True)
def splitmix64(x):
    """Bijective 64-bit mixer (one splitmix64 output step)."""
    z = x + _SM_GAMMA
    z = (z ^ (z >> np.uint64(30))) * _SM_C1
    z = (z ^ (z >> np.uint64(27))) * _SM_C2
    return z ^ (z >> np.uint64(31))


@njit(nogil=True, cache=True)
def stream_key(master_seed, ic_index, path_index):
    """Per-trajectory key; injective in (ic_index, path_index) for a fixed seed."""
    k0 = splitmix64(uint64(master_seed))
    idx = (uint64(ic_index) << _S32) | (uint64(path_index) & _LO32)
    k1 = splitmix64(idx ^ k0)
    return k0, k1


@njit(inline="always")
def _to_unit(w):
    # (0, 1]: never 0, so log() stays finite
    return (float(w >> np.uint64(11)) + 1.0) * _INV_2_53


@njit(nogil=True, cache=True)
def fill_normals(k0, k1, ctr, out):
    """Fill ``out`` with standard normals from block ``ctr`` on; return the next counter."""
    nb = out.shape[0] // 4
    for b in range(nb):
        r0, r1, r2, r3 = philox4x64(ctr, uint64(0), uint64(0), uint64(0), k0, k1)
        ctr += uint64(1)
        u1 = _to_unit(r1)
        u3 = _to_unit(r3)
        rad = np.sqrt(-2.0 * np.log(_to_unit(r0)))
        out[4 * b] = rad * np.cos(_TWO_PI * u1)
        out[4 * b + 1] = rad * np.sin(_TWO_PI * u1)
        rad = np.sqrt(-2.0 * np.log(_to_unit(r2)))
        out[4 * b + 2] = rad * np.cos(_TWO_PI * u3)
        out[4 * b + 3] = rad * np.sin(_TWO_PI * u3)
    return ctr


def trajectory_normals(master_seed: int, ic_index: int, path_index: int, count: int) -> np.ndarray:
    """First ``count`` normals of one trajectory's stream (for inspection and tests)."""
    k0, k1 = stream_key(np.uint64(master_seed), np.uint64(ic_index), np.uint64(path_index))
    out = np.empty(4 * ((count + 3) // 4))
    # keys come back as Python ints; re-wrap so numba types them as uint64
    fill_normals(np.uint64(k0), np.uint64(k1), np.uint64(0), out)
    return out[:count]
