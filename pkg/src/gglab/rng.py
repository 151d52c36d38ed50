"""Counter-based random streams.

Disorder values are a pure function of ``(seed, stream, key)`` so that a
quenched environment does not depend on box size, site ordering or on how
work is split across threads. Dynamics use ordinary numpy generators seeded
through :class:`numpy.random.SeedSequence`.
"""
from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def splitmix64(x):
    """SplitMix64 finalizer applied elementwise to a uint64 array."""
    z = np.asarray(x, dtype=np.uint64) + _GOLDEN
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def coordinate_keys(coords, extra=None):
    """Hash integer lattice coordinates of shape (n, d) to uint64 keys.

    ``extra`` (e.g. a bond axis) is folded in after the coordinates.
    """
    coords = np.atleast_2d(np.asarray(coords, dtype=np.int64))
    key = np.full(coords.shape[0], coords.shape[1], dtype=np.uint64)
    with np.errstate(over="ignore"):
        for j in range(coords.shape[1]):
            key = splitmix64(key ^ coords[:, j].astype(np.uint64))
        if extra is not None:
            key = splitmix64(key ^ (np.asarray(extra, dtype=np.int64).astype(np.uint64) + np.uint64(0x51)))
    return key


def _stream_key(seed, stream):
    s = splitmix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
    return splitmix64(s ^ splitmix64(np.uint64(stream)))


def counter_uniform(seed, stream, keys):
    """Uniform(0, 1) values, one per key, open at both ends."""
    keys = np.asarray(keys, dtype=np.uint64)
    with np.errstate(over="ignore"):
        bits = splitmix64(keys ^ _stream_key(seed, stream))
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) / 9007199254740992.0


def counter_normal(seed, stream, keys):
    """Standard normals via Box-Muller on two independent counter uniforms."""
    u1 = counter_uniform(seed, 2 * stream, keys)
    u2 = counter_uniform(seed, 2 * stream + 1, keys)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def make_rng(seed, *keys):
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *map(int, keys)]))
