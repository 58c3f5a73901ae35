"""Seeded, counter-based randomness keyed by (seed, stream, sample index).

Draws for sample ``i`` come from block ``i // BLOCK`` of a Philox stream whose key is
derived from ``(seed, stream, block)``.  A sample's draw therefore depends only on its
id, never on ``n``, row order, or how work is partitioned.
"""

from __future__ import annotations

import hashlib
from typing import Callable

import numpy as np

from .core import ParameterError

BLOCK = 1024
ALGORITHM = "philox4x64-10+seedsequence/block1024/v1"


def _key_int(part) -> int:
    if isinstance(part, (bool, np.bool_)):
        raise ParameterError("boolean key parts are ambiguous")
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ParameterError("integer key parts must be non-negative")
        return int(part)
    if isinstance(part, str):
        return int.from_bytes(hashlib.sha256(part.encode("utf-8")).digest()[:8], "little")
    raise ParameterError(f"unsupported key part {part!r}")


class RandomSource:
    """Single-owner seeded generator factory."""

    algorithm = ALGORITHM

    def __init__(self, seed: int):
        if isinstance(seed, bool) or int(seed) != seed or not (0 <= seed < 2**64):
            raise ParameterError("seed must be an integer in [0, 2**64)")
        self.seed = int(seed)

    def __repr__(self):
        return f"RandomSource(seed={self.seed})"

    def generator(self, *key) -> np.random.Generator:
        """A fresh generator for the named sub-stream."""
        entropy = [self.seed] + [_key_int(k) for k in key]
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))

    def spawn(self, *key) -> "RandomSource":
        """Deterministic child source, e.g. for a worker partition."""
        state = np.random.SeedSequence([self.seed] + [_key_int(k) for k in key]).generate_state(1, np.uint64)
        return RandomSource(int(state[0]))

    def _blocked(self, stream: str, ids, width: int, draw: Callable) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim != 1:
            raise ParameterError("sample ids must be 1-d")
        if ids.size and ids.min() < 0:
            raise ParameterError("sample ids must be non-negative")
        out = np.empty((ids.size, width))
        blocks = ids // BLOCK
        uniq, inverse = np.unique(blocks, return_inverse=True)
        for k, b in enumerate(uniq):
            rows = np.nonzero(inverse == k)[0]
            vals = draw(self.generator(stream, int(b)), (BLOCK, width))
            out[rows] = vals[ids[rows] % BLOCK]
        return out

    def uniform(self, stream: str, ids) -> np.ndarray:
        """One U[0, 1) draw per sample id."""
        return self._blocked(stream, ids, 1, lambda g, shape: g.random(shape))[:, 0]

    def normal(self, stream: str, ids, dim: int) -> np.ndarray:
        """A standard-normal ``dim``-vector per sample id."""
        return self._blocked(stream, ids, dim, lambda g, shape: g.standard_normal(shape))
