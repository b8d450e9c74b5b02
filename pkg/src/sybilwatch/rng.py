"""Portable, splittable random streams.

Every stream is numpy's PCG64 bit generator seeded through a
``SeedSequence(entropy=seed, spawn_key=key)``.  Only the raw 64-bit output
of the generator is consumed; floats are derived as ``(x >> 11) * 2**-53``,
which gives a double in ``[0, 1)``.  Distribution sampling (exponentials,
weighted choice) is done here on top of those doubles, so the streams do not
depend on numpy's ``Generator`` sampling algorithms and can be reproduced by
any implementation of PCG64 + SeedSequence.

Key layout used by the simulator:

* ``(0, i)``  per-account substream for account index ``i``
* ``(1,)``    global substream (popularity ranking)
"""

from __future__ import annotations

import numpy as np

SEED_MAX = 2**64 - 1
_INV_2_53 = 1.0 / 9007199254740992.0

ACCOUNT_KEY = 0
GLOBAL_KEY = 1


def check_seed(seed: int) -> int:
    if not isinstance(seed, (int, np.integer)) or isinstance(seed, bool):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    seed = int(seed)
    if not 0 <= seed <= SEED_MAX:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


class Stream:
    """Sequential source of uniform doubles for one (seed, key) pair."""

    __slots__ = ("seed", "key", "_bitgen")

    def __init__(self, seed: int, *key: int):
        self.seed = check_seed(seed)
        self.key = tuple(int(k) for k in key)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key)
        self._bitgen = np.random.PCG64(ss)

    def uniforms(self, n: int) -> np.ndarray:
        raw = self._bitgen.random_raw(n)
        return (raw >> np.uint64(11)).astype(np.float64) * _INV_2_53

    def uniform(self) -> float:
        return float(self.uniforms(1)[0])


def account_stream(seed: int, index: int) -> Stream:
    return Stream(seed, ACCOUNT_KEY, index)


def global_stream(seed: int) -> Stream:
    return Stream(seed, GLOBAL_KEY)


def exponential(u: np.ndarray, mean: float) -> np.ndarray:
    """Inverse-CDF exponential variates from uniforms in [0, 1)."""
    return -np.log1p(-u) * mean


def weighted_index(u: np.ndarray, cumulative: np.ndarray) -> np.ndarray:
    """Map uniforms to indices of a discrete distribution.

    ``cumulative`` is the running sum of non-negative weights; index ``i`` is
    chosen when ``cumulative[i-1] <= u * total < cumulative[i]``.
    """
    total = cumulative[-1]
    idx = np.searchsorted(cumulative, u * total, side="right")
    return np.minimum(idx, len(cumulative) - 1)


def permutation(stream: Stream, n: int) -> np.ndarray:
    """Fisher-Yates shuffle of ``range(n)`` driven by ``stream``."""
    perm = np.arange(n)
    if n < 2:
        return perm
    u = stream.uniforms(n - 1)
    for pos, i in enumerate(range(n - 1, 0, -1)):
        j = int(u[pos] * (i + 1))
        perm[i], perm[j] = perm[j], perm[i]
    return perm
