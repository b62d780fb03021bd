"""Counter-based random streams for reproducible parallel Monte Carlo.

Every replicate owns a private Philox4x64-10 stream whose key is derived
from (master seed, scope labels, replicate index).  A draw is a pure
function of (key, draw index), so results never depend on how replicates
are partitioned across workers, and any prefix of a stream can be replayed
exactly by re-issuing the same draw indices.

The block function is bit-compatible with ``numpy.random.Philox``: our
block at counter ``c0 = n + 1`` equals numpy's n-th raw block (numpy
advances its counter before generating).
"""

from __future__ import annotations

import hashlib

import numpy as np

_U64 = np.uint64
_M0 = _U64(0xD2E7470EE14C6C93)
_M1 = _U64(0xCA5A826395121157)
_W0 = _U64(0x9E3779B97F4A7C15)
_W1 = _U64(0xBB67AE8584CAA73B)
_MASK32 = _U64(0xFFFFFFFF)
_SH32 = _U64(32)
_SH11 = _U64(11)
_INV53 = 1.0 / (1 << 53)


def _mulhilo(a, b):
    """Full 64x64 -> 128 bit product as (high word, low word)."""
    lo = a * b
    a_hi = a >> _SH32
    a_lo = a & _MASK32
    b_hi = b >> _SH32
    b_lo = b & _MASK32
    t = a_lo * b_lo
    t1 = a_hi * b_lo + (t >> _SH32)
    t2 = a_lo * b_hi + (t1 & _MASK32)
    hi = a_hi * b_hi + (t1 >> _SH32) + (t2 >> _SH32)
    return hi, lo


def philox_block(key0, key1, counter):
    """One Philox4x64-10 block: four uint64 words per (key, counter).

    ``key1`` may be a uint64 array (vector of streams); ``key0`` and
    ``counter`` are scalars.  All arithmetic wraps mod 2^64.
    """
    with np.errstate(over="ignore"):
        k0 = _U64(key0)
        k1 = np.asarray(key1, dtype=np.uint64)
        c0 = _U64(counter)
        c1 = c2 = c3 = _U64(0)
        for _ in range(10):
            hi0, lo0 = _mulhilo(_M0, c0)
            hi1, lo1 = _mulhilo(_M1, c2)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
            k0 = k0 + _W0
            k1 = k1 + _W1
    return c0, c1, c2, c3


def _to_unit(words):
    """Map uint64 words to doubles in [0, 1) (same mapping numpy uses)."""
    return (words >> _SH11) * _INV53


def derive_key(master_seed: int, *labels) -> tuple[int, int]:
    """Hash (seed, labels) to a 128-bit Philox key, split into two words."""
    h = hashlib.sha256()
    h.update(str(int(master_seed)).encode())
    for lab in labels:
        h.update(b"/")
        h.update(str(lab).encode())
    d = h.digest()
    return (
        int.from_bytes(d[:8], "little"),
        int.from_bytes(d[8:16], "little"),
    )


class ReplicateStreams:
    """A family of per-replicate counter-based streams.

    Replicate ``r`` uses key ``(base0, base1 ^ r)``; draw ``n`` of every
    replicate comes from Philox block ``n // 2`` (two uniform pairs per
    block).  ``uniform_pair`` returns the pair for all requested
    replicates at once, which is what the lockstep simulation loop needs.
    """

    def __init__(self, master_seed: int, *labels, n: int, offset: int = 0):
        self.base0, self.base1 = derive_key(master_seed, *labels)
        self.n = int(n)
        self.offset = int(offset)
        self._keys1 = np.arange(
            self.offset, self.offset + self.n, dtype=np.uint64
        ) ^ _U64(self.base1)

    def keys1(self, idx=None) -> np.ndarray:
        return self._keys1 if idx is None else self._keys1[idx]

    def block(self, index: int, keys1=None):
        """Philox block ``index`` (counter index+1) for the given key slice."""
        k1 = self._keys1 if keys1 is None else keys1
        return philox_block(self.base0, k1, index + 1)

    def uniform_pair(self, draw: int, keys1=None, _cache=None):
        """Uniform pair number ``draw`` for each replicate.

        ``_cache`` is an optional single-entry dict {block_index: words}
        the caller may thread through a loop so consecutive draws reuse
        one block; cached words must be sliced consistently with keys1.
        """
        bidx, half = divmod(draw, 2)
        if _cache is not None and _cache.get("index") == bidx:
            w = _cache["words"]
        else:
            w = self.block(bidx, keys1)
            if _cache is not None:
                _cache["index"] = bidx
                _cache["words"] = w
        if half == 0:
            return _to_unit(w[0]), _to_unit(w[1])
        return _to_unit(w[2]), _to_unit(w[3])

    def generator(self, replicate: int) -> np.random.Generator:
        """A numpy Generator on this replicate's stream (for ad-hoc draws)."""
        key = np.array(
            [self.base0, int(self._keys1[replicate])], dtype=np.uint64
        )
        return np.random.Generator(np.random.Philox(key=key))


def scoped_generator(master_seed: int, *labels) -> np.random.Generator:
    """A numpy Generator whose stream is fixed by (seed, labels) alone."""
    k0, k1 = derive_key(master_seed, *labels)
    return np.random.Generator(
        np.random.Philox(key=np.array([k0, k1], dtype=np.uint64))
    )
