"""Deterministic synthetic phantoms with known topology.

Every phantom is a pure function of its spec: the noise source is a
counter-based splitmix64 stream, so outputs are bit-identical across runs
and platforms (and reproducible from other languages).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .volume import Dims, LabelTable, LabelVolume, ProbVolume, Spacing, UNIT_SPACING

_MASK64 = (1 << 64) - 1
_GOLD = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def splitmix64(seed: int, count: int, offset: int = 0) -> np.ndarray:
    """Vectorized splitmix64 stream: element i mixes seed + (i+1)*golden.

    Returns ``count`` uint64 values starting at stream position ``offset``.
    """
    idx = np.arange(offset + 1, offset + count + 1, dtype=np.uint64)
    z = np.uint64(seed & _MASK64) + idx * _GOLD
    z ^= z >> np.uint64(30)
    z *= _MIX1
    z ^= z >> np.uint64(27)
    z *= _MIX2
    z ^= z >> np.uint64(31)
    return z


def _unit_floats(seed: int, count: int, offset: int = 0) -> np.ndarray:
    """Uniform float64 values in [0, 1) from the splitmix64 stream."""
    return (splitmix64(seed, count, offset) >> np.uint64(11)).astype(np.float64) * 2.0**-53


class PhantomKind(enum.Enum):
    NESTED_SPHERES = "nested-spheres"
    PUNCHED_SHELL = "punched-shell"
    SEPARATED_BLOBS = "separated-blobs"
    RANDOM = "random"


@dataclass(frozen=True)
class PhantomSpec:
    kind: PhantomKind
    dims: Dims = Dims(32, 32, 32)
    spacing: Spacing = UNIT_SPACING
    seed: int = 0
    inner_radius: float = 6.0   # nested/punched: enclosed ball radius, voxels
    outer_radius: float = 10.0  # nested/punched: shell outer radius, voxels
    blob_radius: float = 5.0    # separated blobs: ball radius, voxels
    separation: float = 16.0    # separated blobs: center distance along width, voxels
    channel_width: int = 1      # punched shell: tunnel cross-section, voxels
    classes: int = 8            # random: number of label values

    def __post_init__(self):
        object.__setattr__(self, "dims", Dims(*(int(v) for v in self.dims)))
        object.__setattr__(self, "kind", PhantomKind(self.kind))
        if min(self.dims) < 1:
            raise ValueError(f"dims must be positive, got {tuple(self.dims)}")


_T = LabelTable()
_MYO, _LV, _RA, _AO = _T.id_of("Myo"), _T.id_of("LV"), _T.id_of("RA"), _T.id_of("AO")


def _radius_grid(dims: Dims, center) -> np.ndarray:
    zz, yy, xx = np.ogrid[: dims.depth, : dims.height, : dims.width]
    cz, cy, cx = center
    return np.sqrt((zz - cz) ** 2 + (yy - cy) ** 2 + (xx - cx) ** 2)


def _require_inside(dims: Dims, center, radius: float) -> None:
    margins = [center[i] for i in range(3)] + [dims[i] - 1 - center[i] for i in range(3)]
    if radius > min(margins):
        raise ValueError(
            f"radius {radius} does not fit inside dims {tuple(dims)} at center {center}"
        )


def generate(spec: PhantomSpec) -> LabelVolume:
    """Rasterize the phantom; voxels belong to a ball iff their center does."""
    d, h, w = spec.dims
    center = ((d - 1) / 2.0, (h - 1) / 2.0, (w - 1) / 2.0)

    if spec.kind is PhantomKind.RANDOM:
        if not 1 <= spec.classes <= 256:
            raise ValueError(f"classes must be in [1, 256], got {spec.classes}")
        u = splitmix64(spec.seed, spec.dims.voxels)
        lab = (u % np.uint64(spec.classes)).astype(np.uint8).reshape(d, h, w)
        return LabelVolume(lab, spec.spacing)

    if spec.kind is PhantomKind.SEPARATED_BLOBS:
        half = spec.separation / 2.0
        ca = (center[0], center[1], center[2] - half)
        cb = (center[0], center[1], center[2] + half)
        _require_inside(spec.dims, ca, spec.blob_radius)
        _require_inside(spec.dims, cb, spec.blob_radius)
        lab = np.zeros(spec.dims, dtype=np.uint8)
        lab[_radius_grid(spec.dims, ca) <= spec.blob_radius] = _RA
        lab[_radius_grid(spec.dims, cb) <= spec.blob_radius] = _AO
        return LabelVolume(lab, spec.spacing)

    # nested spheres, optionally punched
    if not 0 < spec.inner_radius < spec.outer_radius:
        raise ValueError("need 0 < inner_radius < outer_radius")
    _require_inside(spec.dims, center, spec.outer_radius)
    r = _radius_grid(spec.dims, center)
    lab = np.zeros(spec.dims, dtype=np.uint8)
    lab[r <= spec.outer_radius] = _MYO
    lab[r <= spec.inner_radius] = _LV
    if spec.kind is PhantomKind.PUNCHED_SHELL:
        if spec.channel_width < 1:
            raise ValueError("channel_width must be >= 1")
        z0, y0 = d // 2, h // 2
        zs = slice(z0, min(d, z0 + spec.channel_width))
        ys = slice(y0, min(h, y0 + spec.channel_width))
        tunnel = np.zeros_like(lab, dtype=bool)
        tunnel[zs, ys, int(np.ceil(center[2])):] = True
        lab[tunnel & (lab == _MYO)] = 0  # bore through the shell only
    return LabelVolume(lab, spec.spacing)


def soften(
    labels: LabelVolume,
    temperature: float = 0.25,
    seed: int = 0,
    channels: int | None = None,
) -> ProbVolume:
    """Plausible likelihood map whose argmax reproduces ``labels`` exactly.

    Per voxel, normalized exponential of one-hot scores scaled by
    1/temperature plus noise bounded to half that scale, so the true label
    always keeps the strictly largest score.
    """
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    c = int(channels) if channels is not None else int(labels.data.max()) + 1
    if c <= int(labels.data.max()):
        raise ValueError(f"{c} channels cannot represent label {int(labels.data.max())}")
    d, h, w = labels.dims
    noise = _unit_floats(seed, c * labels.dims.voxels).reshape(c, d, h, w)
    scores = 0.5 * noise
    scores[labels.data[None] == np.arange(c)[:, None, None, None]] += 1.0
    scores /= temperature
    scores -= scores.max(axis=0, keepdims=True)
    e = np.exp(scores)
    probs = (e / e.sum(axis=0, keepdims=True)).astype(np.float32)
    if not np.array_equal(np.argmax(probs, axis=0), labels.data):
        raise ValueError(
            f"temperature {temperature} too high to preserve the argmax in float32"
        )
    return ProbVolume(probs, labels.spacing)
