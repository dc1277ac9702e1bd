"""Seed derivation and counter-based Gaussian noise.

Parameter draws use numpy's PCG64. Per-variant seeds are split from a base
seed with ``SeedSequence(base_seed, spawn_key=(scene_key, index))``, where
``scene_key`` is the first 8 bytes (big-endian) of SHA-256 of the UTF-8 scene
id. The derived 64-bit seed is the first word of the sequence state.
"""

from __future__ import annotations

import hashlib

import numpy as np

SEED_MASK = (1 << 64) - 1


def scene_key(scene_id: str) -> int:
    return int.from_bytes(hashlib.sha256(scene_id.encode("utf-8")).digest()[:8], "big")


def split_seed(base_seed: int, scene_id: str, index: int) -> int:
    ss = np.random.SeedSequence(int(base_seed) & SEED_MASK, spawn_key=(scene_key(scene_id), int(index)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & SEED_MASK))


# SplitMix64 finalizer constants
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _uniform_open(bits: np.ndarray) -> np.ndarray:
    # top 53 bits -> (0, 1); the half-ulp offset keeps log() finite
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * (1.0 / (1 << 53))


def counter_normal(seed: int, shape: tuple[int, ...]) -> np.ndarray:
    """Standard normal field over an (H, W) or (H, W, C) grid.

    The value at (y, x, c) depends only on ``seed`` and those coordinates: the
    counter ``((y << 24) | x) << 2 | c`` is hashed twice with SplitMix64 and
    the two uniforms go through Box-Muller. Any tile of the field can be
    computed on its own, so chunked or threaded evaluation is bit-identical.
    """
    if len(shape) == 2:
        shape = (*shape, 1)
        squeeze = True
    else:
        squeeze = False
    h, w, c = shape
    if h >= 1 << 24 or w >= 1 << 24 or c > 4:
        raise ValueError(f"noise field shape {shape} out of range")
    y, x, ch = np.indices(shape, dtype=np.uint64)
    counter = (((y << np.uint64(24)) | x) << np.uint64(2)) | ch
    with np.errstate(over="ignore"):
        key = _mix64(np.uint64(int(seed) & SEED_MASK) + _GOLDEN)
        base = counter * np.uint64(2)
        u1 = _uniform_open(_mix64(key + (base + np.uint64(1)) * _GOLDEN))
        u2 = _uniform_open(_mix64(key + (base + np.uint64(2)) * _GOLDEN))
    z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
    return z[:, :, 0] if squeeze else z
