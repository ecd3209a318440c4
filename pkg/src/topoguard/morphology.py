"""3D binary morphology: dilation, boundary extraction, exact distance fields.

Dilation is the workhorse of adjacency detection: expanding a class mask by
one structuring-element step and intersecting with another mask finds every
voxel pair of the two masks that touch.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass

import numpy as np

from .volume import BinaryMask, Dims, Spacing, _check_spacing, _frozen


class Connectivity(enum.Enum):
    """Which of a voxel's 3x3x3 neighbors count as adjacent."""

    FACE6 = 6
    EDGE18 = 18
    VERTEX26 = 26

    @property
    def offsets(self) -> tuple[tuple[int, int, int], ...]:
        """Neighbor offsets (dz, dy, dx), center excluded."""
        offs = []
        for off in itertools.product((-1, 0, 1), repeat=3):
            taxicab = sum(abs(o) for o in off)
            if taxicab == 0:
                continue
            if self is Connectivity.FACE6 and taxicab > 1:
                continue
            if self is Connectivity.EDGE18 and taxicab > 2:
                continue
            offs.append(off)
        return tuple(offs)


def _shift_slices(off, shape):
    """Destination/source slice pair realizing an out-of-bounds-safe shift."""
    dst, src = [], []
    for o, n in zip(off, shape):
        if o >= 0:
            dst.append(slice(o, n))
            src.append(slice(0, n - o))
        else:
            dst.append(slice(0, n + o))
            src.append(slice(-o, n))
    return tuple(dst), tuple(src)


def _dilate_array(mask: np.ndarray, conn: Connectivity) -> np.ndarray:
    if conn is Connectivity.VERTEX26:
        # the full 3x3x3 box separates into three 1D passes
        out = mask.copy()
        for axis in range(3):
            off_p = [0, 0, 0]
            off_p[axis] = 1
            dst, src = _shift_slices(off_p, out.shape)
            grown = out.copy()
            grown[dst] |= out[src]
            grown[src] |= out[dst]
            out = grown
        return out
    out = mask.copy()
    for off in conn.offsets:
        dst, src = _shift_slices(off, mask.shape)
        out[dst] |= mask[src]
    return out


def dilate(mask: BinaryMask, conn: Connectivity = Connectivity.VERTEX26) -> BinaryMask:
    """Morphological expansion by one step of the given connectivity.

    A voxel is set in the output iff it is set in the input or any of its
    conn-neighbors is. Equivalent to binary convolution with the
    structuring element followed by thresholding at one.
    """
    return BinaryMask(_dilate_array(mask.data, conn), mask.spacing)


def boundary(mask: BinaryMask) -> BinaryMask:
    """Voxels of the mask with at least one face neighbor outside it.

    Face (6-)connectivity defines the surface regardless of any constraint
    connectivity; voxels on the volume border count as surface.
    """
    m = mask.data
    interior = m.copy()
    for off in Connectivity.FACE6.offsets:
        dst, src = _shift_slices(off, m.shape)
        shifted = np.zeros_like(m)
        shifted[dst] = m[src]
        interior &= shifted
    return BinaryMask(m & ~interior, mask.spacing)


@dataclass(frozen=True)
class DistanceField:
    """Per-voxel Euclidean distance (mm) to the nearest set voxel of a mask.

    All +inf when the source mask is empty.
    """

    data: np.ndarray  # float64, shape (depth, height, width)
    spacing: Spacing

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen(np.asarray(self.data, dtype=np.float64)))
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))

    @property
    def dims(self) -> Dims:
        return Dims(*self.data.shape)


# Finite stand-in for "no source on this line yet". Anything the later passes
# add stays many orders of magnitude below it, so true distances always win.
_FAR = 1e30


def _envelope_pass(f: np.ndarray, step: float) -> np.ndarray:
    """Exact 1D squared-distance transform along the last axis of (rows, n).

    Lower envelope of the parabolas j -> f[r, j] + (step*(i-j))^2, computed
    for all rows simultaneously; linear time per row.
    """
    rows, n = f.shape
    if n == 1:
        return f
    s2 = step * step
    g = f + s2 * np.arange(n, dtype=np.float64) ** 2
    v = np.zeros((rows, n), dtype=np.intp)       # parabola sites on the envelope
    z = np.empty((rows, n + 1), dtype=np.float64)  # boundaries between them
    z[:, 0] = -np.inf
    z[:, 1] = np.inf
    k = np.zeros(rows, dtype=np.intp)
    ridx = np.arange(rows)
    for q in range(1, n):
        gq = g[:, q]
        while True:
            vk = v[ridx, k]
            s = (gq - g[ridx, vk]) / (2.0 * s2 * (q - vk))
            pop = s <= z[ridx, k]
            if not pop.any():
                break
            k[pop] -= 1
        k += 1
        v[ridx, k] = q
        z[ridx, k] = s
        z[ridx, k + 1] = np.inf
    out = np.empty_like(f)
    k[:] = 0
    for i in range(n):
        while True:
            adv = z[ridx, k + 1] < i
            if not adv.any():
                break
            k[adv] += 1
        vk = v[ridx, k]
        out[:, i] = s2 * (i - vk).astype(np.float64) ** 2 + f[ridx, vk]
    return out


def edt(mask: BinaryMask, spacing: Spacing | None = None) -> DistanceField:
    """Exact Euclidean distance transform, anisotropic spacing respected.

    Distances run between voxel centers. Squared distances are propagated
    axis by axis with the parabola lower-envelope transform, so the result
    is exact up to floating-point rounding.
    """
    sp = _check_spacing(spacing) if spacing is not None else mask.spacing
    m = mask.data
    if not m.any():
        return DistanceField(np.full(m.shape, np.inf), sp)
    d, h, w = m.shape
    sq = np.where(m, 0.0, _FAR)
    sq = _envelope_pass(sq.reshape(d * h, w), sp.dx).reshape(d, h, w)
    sq = np.moveaxis(sq, 1, 2).reshape(d * w, h)
    sq = _envelope_pass(sq, sp.dy).reshape(d, w, h)
    sq = np.moveaxis(sq, 1, 2)
    sq = np.moveaxis(sq, 0, 2).reshape(h * w, d)
    sq = _envelope_pass(sq, sp.dz).reshape(h, w, d)
    sq = np.moveaxis(sq, 2, 0)
    return DistanceField(np.sqrt(sq), sp)
