"""Counter-based uniform random numbers for path sampling.

Every uniform consumed by the sampler is addressed by the tuple
(seed, path index, stage, lane) and computed independently of draw order.
Two consequences the rest of the package relies on:

- results are bitwise identical for any batch size or worker partition,
  because no stream position is shared between paths or stages;
- skipping a draw (for a component that cannot trip) never shifts the
  randomness seen by any other component.

The generator is the splitmix64 finalizer (Stafford mix13 constants)
applied to a chained key.  Lane expansion follows the splitmix64 stream
construction: consecutive counters spaced by the golden-ratio increment,
finalized independently.
"""

from __future__ import annotations

import numpy as np

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_U01 = 1.0 / (1 << 53)


def mix64(z: np.ndarray | np.uint64 | int) -> np.ndarray:
    """splitmix64 finalizer: a 64-bit permutation with full avalanche.

    Accepts scalars or arrays.  Overflow is the point: all arithmetic is
    mod 2**64, so the overflow warning is suppressed locally.
    """
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
        return z ^ (z >> _S31)


def path_keys(seed: int, path_indices: np.ndarray) -> np.ndarray:
    """Per-path stream keys for a campaign.

    Parameters
    ----------
    seed : campaign seed, any Python int (folded to 64 bits).
    path_indices : integer array of path ordinals.
    """
    base = mix64(np.asarray(seed & 0xFFFFFFFFFFFFFFFF, dtype=np.uint64) ^ _GOLDEN)
    idx = np.asarray(path_indices, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64(base ^ (idx * _M1 + _GOLDEN))


def stage_uniforms(keys: np.ndarray, stage: int, lanes: np.ndarray) -> np.ndarray:
    """Uniforms in [0, 1) for each (path key, lane) pair at one stage.

    Returns an array of shape (len(keys), len(lanes)).  Lane ordinals are
    component indices, so a component keeps its own counter slot whether or
    not any other component draws at this stage.
    """
    keys = np.asarray(keys, dtype=np.uint64)
    with np.errstate(over="ignore"):
        stage_word = np.asarray(stage, dtype=np.uint64) * _M2 + _GOLDEN
        h = mix64(keys ^ stage_word)
        counters = (np.asarray(lanes, dtype=np.uint64) + np.uint64(1)) * _GOLDEN
        bits = mix64(h[:, None] + counters[None, :])
    return (bits >> _S11).astype(np.float64) * _U01


def derive_seed(seed: int, *words: int) -> int:
    """Fold extra coordinates into a 63-bit campaign seed.

    Used to give each (eta, replicate) campaign its own seed from one
    experiment seed, documented and reproducible.
    """
    h = mix64(np.asarray(seed & 0xFFFFFFFFFFFFFFFF, dtype=np.uint64) ^ _M2)
    with np.errstate(over="ignore"):
        for w in words:
            wv = np.asarray(w & 0xFFFFFFFFFFFFFFFF, dtype=np.uint64)
            h = mix64(h ^ (wv * _GOLDEN + _M1))
    return int(h & np.uint64(0x7FFFFFFFFFFFFFFF))


class PathStream:
    """Single-path view of the counter-based stream.

    Thin convenience wrapper used by the one-path simulator and by tests;
    produces exactly the uniforms the batched engine would assign to this
    path index.
    """

    def __init__(self, seed: int, path_index: int):
        self.seed = seed
        self.path_index = path_index
        self._key = path_keys(seed, np.asarray([path_index], dtype=np.uint64))

    def uniforms(self, stage: int, lanes: np.ndarray) -> np.ndarray:
        return stage_uniforms(self._key, stage, lanes)[0]
