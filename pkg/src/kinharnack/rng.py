"""Counter-based random streams (Philox4x64-10) usable from compiled kernels.

A stream is keyed by ``(seed, stream_id)``; the block counter starts at zero
and is incremented before every block, which makes a stream bitwise identical
to ``numpy.random.Philox(key=[seed, stream_id])``. One stream drives one
simulated path, so results do not depend on how paths are split across
workers.

Compiled code carries the stream as a ``uint64[8]`` state vector laid out as
``[key0, key1, counter, position, b0, b1, b2, b3]``.
"""
from __future__ import annotations

import math

import numba as nb
import numpy as np

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_TWO_M53 = 1.0 / 9007199254740992.0

STATE_SIZE = 8
UINT64_MAX = 2**64 - 1


@nb.njit(inline="always", cache=True)
def _mulhilo(a, b):
    lo = a * b
    a_lo = a & _MASK32
    a_hi = a >> _S32
    b_lo = b & _MASK32
    b_hi = b >> _S32
    t = a_hi * b_lo + ((a_lo * b_lo) >> _S32)
    w1 = (t & _MASK32) + a_lo * b_hi
    hi = a_hi * b_hi + (t >> _S32) + (w1 >> _S32)
    return hi, lo


@nb.njit(cache=True)
def philox4x64(c0, c1, c2, c3, k0, k1):
    for r in range(10):
        if r > 0:
            k0 += _W0
            k1 += _W1
        hi0, lo0 = _mulhilo(_M0, c0)
        hi1, lo1 = _mulhilo(_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


@nb.njit(inline="always", cache=True)
def stream_init(state, seed, stream_id):
    state[0] = seed
    state[1] = stream_id
    state[2] = 0
    state[3] = 4


@nb.njit(inline="always", cache=True)
def next_raw(state):
    pos = state[3]
    if pos >= 4:
        state[2] += _ONE
        b0, b1, b2, b3 = philox4x64(state[2], np.uint64(0), np.uint64(0), np.uint64(0), state[0], state[1])
        state[4] = b0
        state[5] = b1
        state[6] = b2
        state[7] = b3
        pos = np.uint64(0)
    state[3] = pos + _ONE
    return state[4 + pos]


@nb.njit(inline="always", cache=True)
def next_uniform(state):
    """Uniform on the open interval (0, 1) with 53 random bits."""
    return (float(next_raw(state) >> _S11) + 0.5) * _TWO_M53


@nb.njit(inline="always", cache=True)
def next_exponential(state):
    return -math.log(next_uniform(state))


@nb.njit(cache=True)
def _fill_raw(state, out):
    for i in range(out.shape[0]):
        out[i] = next_raw(state)


@nb.njit(cache=True)
def _fill_uniform(state, out):
    for i in range(out.shape[0]):
        out[i] = next_uniform(state)


def _check_u64(value, name):
    if isinstance(value, bool) or int(value) != value or not 0 <= int(value) <= UINT64_MAX:
        raise ValueError(f"{name} must be an unsigned 64-bit integer, got {value!r}")
    return int(value)


class RngStream:
    """One reproducible random stream identified by ``(seed, stream_id)``.

    The stream is stateful: successive draws advance it. Two streams created
    with the same pair produce the same sequence. A stream must not be shared
    between concurrent consumers.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = _check_u64(seed, "seed")
        self.stream_id = _check_u64(stream_id, "stream_id")
        self.state = np.zeros(STATE_SIZE, dtype=np.uint64)
        stream_init(self.state, np.uint64(self.seed), np.uint64(self.stream_id))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, counter={int(self.state[2])})"

    def raw(self, n: int) -> np.ndarray:
        out = np.empty(int(n), dtype=np.uint64)
        _fill_raw(self.state, out)
        return out

    def uniform(self, n: int) -> np.ndarray:
        out = np.empty(int(n), dtype=np.float64)
        _fill_uniform(self.state, out)
        return out
