"""Counter-based random streams.

Every draw is a pure function of ``(seed, stream, row)``: the stream key is
``splitmix64(splitmix64(seed) ^ splitmix64(stream))`` and the row's 64-bit
word is ``splitmix64(key + row)``. The top 53 bits give a uniform double in
[0, 1). Because no generator state is carried between draws, rows can be
produced in any order (or split across workers) with identical results, and
observational and counterfactual simulations share their noise per row and
vertex.
"""
from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def splitmix64(x: np.ndarray) -> np.ndarray:
    z = np.asarray(x, dtype=np.uint64) + _GAMMA
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def stream_key(seed: int, stream: int) -> np.ndarray:
    s = splitmix64(np.array([seed & _MASK], dtype=np.uint64))
    t = splitmix64(np.array([stream & _MASK], dtype=np.uint64))
    return splitmix64(s ^ t)


def uniforms(seed: int, stream: int, rows: np.ndarray) -> np.ndarray:
    """Uniform(0, 1) draws for the given row indices of one stream."""
    key = stream_key(seed, stream)
    z = splitmix64(key + np.asarray(rows, dtype=np.uint64))
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def normals(seed: int, stream: int, rows: np.ndarray) -> np.ndarray:
    """Standard normal draws via Box-Muller on two derived streams."""
    u1 = uniforms(seed, 2 * stream + 1_000_003, rows)
    u2 = uniforms(seed, 2 * stream + 1_000_004, rows)
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)
