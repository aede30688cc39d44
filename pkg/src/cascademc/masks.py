"""Bitmask helpers for component status.

A cascade state over N_c components is carried as a Python int: bit k set
means component k is tripped.  Arbitrary-precision ints keep this exact for
any component count and make states hashable cache keys.
"""

from __future__ import annotations

import numpy as np


def mask_from_ordinals(ordinals) -> int:
    m = 0
    for k in ordinals:
        m |= 1 << int(k)
    return m


def ordinals_from_mask(mask: int) -> tuple[int, ...]:
    out = []
    k = 0
    while mask:
        if mask & 1:
            out.append(k)
        mask >>= 1
        k += 1
    return tuple(out)


def tripped_bool(mask: int, n: int) -> np.ndarray:
    """Boolean array of length n, True where the component is tripped."""
    if mask < 0:
        raise ValueError("mask must be non-negative")
    nbytes = (n + 7) // 8
    raw = np.frombuffer(mask.to_bytes(nbytes, "little"), dtype=np.uint8)
    bits = np.unpackbits(raw, bitorder="little")[:n]
    return bits.astype(bool)


def in_service_bool(mask: int, n: int) -> np.ndarray:
    return ~tripped_bool(mask, n)


def popcount(mask: int) -> int:
    return mask.bit_count()
