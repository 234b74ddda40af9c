"""Morton (Z-order) keys and site reordering.

Bit convention: bit i of x lands on output bit 3i, y on 3i+1, z on 3i+2,
so x is least significant.  Coordinates up to 32 bits are supported; keys
occupy up to 96 bits (Python ints, or uint64 on the vectorized path for
coordinates below 2**21).
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from lbdecomp.geometry import Geometry

_COORD_BITS = 32
_COORD_MAX = 1 << _COORD_BITS

# masks for spreading 32 bits to every third position of a 96-bit word
_M1 = 0xFFFF | (0xFFFF << 48)
_M2 = sum(0xFF << (24 * k) for k in range(4))
_M3 = sum(0xF << (12 * k) for k in range(8))
_M4 = sum(0x3 << (6 * k) for k in range(16))
_M5 = sum(0x1 << (3 * k) for k in range(32))


def _spread(v: int) -> int:
    v &= _COORD_MAX - 1
    v = (v | (v << 32)) & _M1
    v = (v | (v << 16)) & _M2
    v = (v | (v << 8)) & _M3
    v = (v | (v << 4)) & _M4
    v = (v | (v << 2)) & _M5
    return v


def _compact(v: int) -> int:
    v &= _M5
    v = (v ^ (v >> 2)) & _M4
    v = (v ^ (v >> 4)) & _M3
    v = (v ^ (v >> 8)) & _M2
    v = (v ^ (v >> 16)) & _M1
    v = (v ^ (v >> 32)) & (_COORD_MAX - 1)
    return v


def morton_encode(x: int, y: int, z: int) -> int:
    """Interleave three coordinates into one Z-order key."""
    if not (0 <= x < _COORD_MAX and 0 <= y < _COORD_MAX and 0 <= z < _COORD_MAX):
        raise ValueError("coordinates must be unsigned 32-bit")
    return _spread(x) | (_spread(y) << 1) | (_spread(z) << 2)


def morton_decode(key: int) -> tuple[int, int, int]:
    """Inverse of :func:`morton_encode`."""
    if key < 0:
        raise ValueError("key must be non-negative")
    return _compact(key), _compact(key >> 1), _compact(key >> 2)


def morton_keys(coords: np.ndarray) -> np.ndarray:
    """Keys for an (n, 3) coordinate array.

    Coordinates below 2**21 fit a uint64 fast path; larger ones fall back
    to Python integers (object array, still totally ordered).
    """
    coords = np.asarray(coords)
    if coords.size and coords.max() < (1 << 21):
        c = coords.astype(np.uint64)
        out = np.zeros(len(coords), dtype=np.uint64)
        for axis in range(3):
            v = c[:, axis]
            v = (v | (v << np.uint64(32))) & np.uint64(0x1F00000000FFFF)
            v = (v | (v << np.uint64(16))) & np.uint64(0x1F0000FF0000FF)
            v = (v | (v << np.uint64(8))) & np.uint64(0x100F00F00F00F00F)
            v = (v | (v << np.uint64(4))) & np.uint64(0x10C30C30C30C30C3)
            v = (v | (v << np.uint64(2))) & np.uint64(0x1249249249249249)
            out |= v << np.uint64(axis)
        return out
    return np.array(
        [morton_encode(int(x), int(y), int(z)) for x, y, z in coords],
        dtype=object,
    )


def sort_by_morton(g: Geometry) -> tuple[Geometry, np.ndarray]:
    """Reorder sites into ascending Morton order.

    Returns the reordered geometry and the permutation mapping old site
    index to new site index.
    """
    keys = morton_keys(g.coords)
    order = np.argsort(keys, kind="stable")
    perm = np.empty(g.n_sites, dtype=np.int64)
    perm[order] = np.arange(g.n_sites)
    sorted_g = replace(
        g,
        coords=g.coords[order],
        site_type=g.site_type[order],
        boundary_id=g.boundary_id[order],
        wall_q=g.wall_q[order],
        io_link=g.io_link[order],
    )
    return sorted_g, perm
