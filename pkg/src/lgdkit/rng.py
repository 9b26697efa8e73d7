"""Deterministic counter-based Gaussian noise streams.

The Langevin chains need noise that is a pure function of
``(seed, step, coordinate)``: the meta-learner differentiates through a
chain with the noise held fixed, replicate runs must regenerate any slice
of the stream without storing it, and worker threads must be able to draw
from disjoint streams without sharing state. A stateful generator gives
none of that, so the stream is defined positionally: counter ``c`` maps to
a 64-bit word through the SplitMix64 finalizer,

    out(seed, c) = mix64((seed + (c + 1) * GOLDEN) mod 2**64)

and the normal draw for chain step ``k``, coordinate ``j`` in dimension
``d`` consumes the counter pair ``p = k*d + j`` via Box-Muller:

    u1 = ((out(seed, 2p) >> 11) + 1) * 2**-53        # in (0, 1]
    u2 = (out(seed, 2p + 1) >> 11) * 2**-53          # in [0, 1)
    z  = sqrt(-2 ln u1) * cos(2 pi u2)

This module holds the scalar reference implementation (exact integer
arithmetic on python ints) and a vectorized numpy implementation used by
the non-jitted code paths. ``lgdkit.kernels`` carries a third, inline copy
for the jitted chains; the integer streams of all three are bitwise
identical and tested as such.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "GOLDEN",
    "mix64",
    "stream_u64",
    "derive_seed",
    "normal_at",
    "normals",
]

_MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB
_INV53 = 2.0**-53


# ---------------------------------------------------------------------------
# scalar reference (exact python integers)
# ---------------------------------------------------------------------------


def mix64(state: int) -> int:
    """SplitMix64 finalizer on a 64-bit state."""
    z = state & _MASK
    z ^= z >> 30
    z = (z * _MIX_A) & _MASK
    z ^= z >> 27
    z = (z * _MIX_B) & _MASK
    z ^= z >> 31
    return z


def stream_u64(seed: int, counter: int) -> int:
    """Word ``counter`` of the stream keyed by ``seed``."""
    if counter < 0:
        raise ValueError(f"counter must be >= 0, got {counter}")
    return mix64((seed + (counter + 1) * GOLDEN) & _MASK)


def derive_seed(seed: int, index: int) -> int:
    """Child seed ``index`` of ``seed``; children are mutually independent
    streams and independent of the parent's own draws."""
    return stream_u64(seed, index)


def normal_at(seed: int, step: int, coord: int, dim: int) -> float:
    """One N(0,1) draw at chain position ``(step, coord)``.

    Scalar reference path; the vectorized twin is `normals`.
    """
    pair = step * dim + coord
    x = stream_u64(seed, 2 * pair)
    y = stream_u64(seed, 2 * pair + 1)
    u1 = ((x >> 11) + 1) * _INV53
    u2 = (y >> 11) * _INV53
    return float(np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2))


# ---------------------------------------------------------------------------
# vectorized stream
# ---------------------------------------------------------------------------


def _stream_block(seed: int, counters: np.ndarray) -> np.ndarray:
    """Vectorized `stream_u64` over a uint64 counter array."""
    with np.errstate(over="ignore"):
        z = (np.uint64(seed & _MASK) + (counters + np.uint64(1)) * np.uint64(GOLDEN)).astype(
            np.uint64
        )
        z ^= z >> np.uint64(30)
        z *= np.uint64(_MIX_A)
        z ^= z >> np.uint64(27)
        z *= np.uint64(_MIX_B)
        z ^= z >> np.uint64(31)
    return z


def normals(seed: int, step0: int, steps: int, dim: int) -> np.ndarray:
    """Block of N(0,1) draws for chain steps ``step0 .. step0+steps-1``.

    Returns shape ``(steps, dim)``; row ``i`` column ``j`` equals
    ``normal_at(seed, step0 + i, j, dim)`` up to libm rounding (the integer
    stream underneath is bitwise identical).
    """
    if steps < 0 or dim <= 0:
        raise ValueError(f"need steps >= 0 and dim > 0, got steps={steps} dim={dim}")
    pairs = (
        np.arange(step0, step0 + steps, dtype=np.uint64)[:, None] * np.uint64(dim)
        + np.arange(dim, dtype=np.uint64)[None, :]
    )
    x = _stream_block(seed, np.uint64(2) * pairs)
    y = _stream_block(seed, np.uint64(2) * pairs + np.uint64(1))
    u1 = ((x >> np.uint64(11)).astype(np.float64) + 1.0) * _INV53
    u2 = (y >> np.uint64(11)).astype(np.float64) * _INV53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
