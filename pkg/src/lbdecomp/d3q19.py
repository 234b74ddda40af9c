"""D3Q19 stencil shared by every module.

Direction ordering convention (fixed project-wide):
  index 0          rest
  indices 1..6     axis pairs: +x, -x, +y, -y, +z, -z
  indices 7..18    the twelve face-diagonal vectors in ascending
                   lexicographic (x, y, z) order

Non-rest directions map to link-array column ``q - 1``.
"""

from __future__ import annotations

import numpy as np

_AXIS = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
_DIAG = sorted(
    (x, y, z)
    for x in (-1, 0, 1)
    for y in (-1, 0, 1)
    for z in (-1, 0, 1)
    if abs(x) + abs(y) + abs(z) == 2
)

#: (19, 3) int array of discrete velocities.
C = np.array([(0, 0, 0)] + _AXIS + _DIAG, dtype=np.int64)

#: opposite-direction lookup, OPP[q] is the index with velocity -C[q].
OPP = np.array(
    [next(j for j in range(19) if (C[j] == -C[q]).all()) for q in range(19)],
    dtype=np.int64,
)

#: lattice weights: rest 1/3, axis 1/18, diagonal 1/36.
W = np.array([1.0 / 3.0] + [1.0 / 18.0] * 6 + [1.0 / 36.0] * 12)

#: squared lattice speed of sound.
CS2 = 1.0 / 3.0

#: number of non-rest directions (link-array width).
N_LINKS = 18

#: (18, 3) velocities of the non-rest directions, row d = direction index d+1.
C_LINKS = C[1:]


def link_index(q: int) -> int:
    """Column in an (n, 18) link array for non-rest direction ``q``."""
    if not 1 <= q <= 18:
        raise ValueError(f"non-rest direction expected, got {q}")
    return q - 1
