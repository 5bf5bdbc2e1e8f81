"""Counter-based random streams.

Every stochastic consumer gets a Philox key derived from
``(master seed, consumer tag, replicate index)``.  Per-individual uniforms are
addressed by ``(key, generation n, individual j)``: generation ``n`` selects a
disjoint block of the Philox counter space and ``j`` is the offset within it,
so any two processes that ask for individual ``j`` of generation ``n`` read the
same number no matter how many individuals each of them holds.
"""
from __future__ import annotations

import zlib

import numpy as np


def _tag_code(tag: str) -> int:
    return zlib.crc32(tag.encode())


def stream_key(seed: int, tag: str, replicate: int = 0) -> np.ndarray:
    """128-bit Philox key for one consumer and replicate."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, _tag_code(tag), int(replicate)])
    return ss.generate_state(2, np.uint64)


def generator(seed: int, tag: str, replicate: int = 0) -> np.random.Generator:
    """Sequential generator for aggregate (per-generation) draws."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, tag, replicate)))


def generation_uniforms(key: np.ndarray, n: int, count: int) -> np.ndarray:
    """Uniforms ``U_{n,0}, ..., U_{n,count-1}`` on ``[0, 1)``."""
    bg = np.random.Philox(key=key, counter=[0, 0, int(n), 0])
    return np.random.Generator(bg).random(int(count))
