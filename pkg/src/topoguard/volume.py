"""Dense 3D volume types: label grids, per-class likelihood maps, binary masks.

Axis order everywhere is (depth, height, width); likelihood maps carry a
leading channel axis. All arrays are frozen after construction so values can
be shared freely across threads.
"""

from __future__ import annotations

import math
from dataclasses import InitVar, dataclass
from typing import Iterable, NamedTuple

import numpy as np


class Dims(NamedTuple):
    depth: int
    height: int
    width: int

    @property
    def voxels(self) -> int:
        return self.depth * self.height * self.width


class Spacing(NamedTuple):
    """Physical voxel edge lengths in millimetres, (dz, dy, dx)."""

    dz: float
    dy: float
    dx: float


UNIT_SPACING = Spacing(1.0, 1.0, 1.0)

# Default whole-heart vocabulary: background plus the seven substructures.
WHS_CLASS_NAMES = ("BG", "Myo", "LV", "RV", "LA", "RA", "AO", "PA")

# Hard ceiling on class count: label grids are stored as uint8.
MAX_CLASSES = 256


def _check_spacing(spacing) -> Spacing:
    s = Spacing(*(float(v) for v in spacing))
    if not all(math.isfinite(v) and v > 0 for v in s):
        raise ValueError(f"spacing must be positive and finite, got {tuple(s)}")
    return s


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    if out is arr or out.base is not None:
        out = out.copy()
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class LabelTable:
    """Ordered class vocabulary; position in ``names`` is the label id.

    Id 0 is always the background class.
    """

    names: tuple[str, ...] = WHS_CLASS_NAMES

    def __post_init__(self):
        names = tuple(str(n) for n in self.names)
        if not names:
            raise ValueError("label table must declare at least the background class")
        if len(names) > MAX_CLASSES:
            raise ValueError(f"at most {MAX_CLASSES} classes supported, got {len(names)}")
        if len(set(names)) != len(names):
            raise ValueError("label table names must be unique")
        object.__setattr__(self, "names", names)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, str]]) -> "LabelTable":
        """Build a table from (id, name) pairs; ids must be 0..C-1 contiguous."""
        entries = dict()
        for lid, name in pairs:
            if lid in entries:
                raise ValueError(f"duplicate label id {lid}")
            entries[int(lid)] = str(name)
        if sorted(entries) != list(range(len(entries))):
            raise ValueError(f"label ids must be contiguous from 0, got {sorted(entries)}")
        return cls(tuple(entries[i] for i in range(len(entries))))

    def __len__(self) -> int:
        return len(self.names)

    def id_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown class name {name!r}; table has {self.names}") from None

    def name_of(self, label_id: int) -> str:
        if not 0 <= label_id < len(self.names):
            raise KeyError(f"label id {label_id} not in table of {len(self.names)} classes")
        return self.names[label_id]

    @property
    def foreground_ids(self) -> tuple[int, ...]:
        return tuple(range(1, len(self.names)))


DEFAULT_WHS_TABLE = LabelTable()


@dataclass(frozen=True)
class LabelVolume:
    """Dense grid of discrete class labels with physical voxel spacing."""

    data: np.ndarray  # uint8, shape (depth, height, width)
    spacing: Spacing = UNIT_SPACING

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3:
            raise ValueError(f"label volume must be 3D, got shape {arr.shape}")
        if arr.size == 0:
            raise ValueError("label volume must have at least one voxel")
        if arr.dtype != np.uint8:
            if not np.issubdtype(arr.dtype, np.integer):
                raise ValueError(f"labels must be integers, got dtype {arr.dtype}")
            if arr.min() < 0 or arr.max() >= MAX_CLASSES:
                raise ValueError("label ids must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        object.__setattr__(self, "data", _frozen(arr))
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))

    @property
    def dims(self) -> Dims:
        return Dims(*self.data.shape)


@dataclass(frozen=True)
class ProbVolume:
    """Per-voxel, per-class likelihood map, channel-major.

    Values live in [0, 1] and, unless ``check_normalized`` is disabled, every
    voxel's channel sum must be within 1e-6 of one. float32 and float64 data
    are kept as-is (the on-disk format is float32); anything else is promoted
    to float64.
    """

    data: np.ndarray  # shape (channels, depth, height, width)
    spacing: Spacing = UNIT_SPACING
    check_normalized: InitVar[bool] = True

    NORM_TOL = 1e-6

    def __post_init__(self, check_normalized: bool):
        arr = np.asarray(self.data)
        if arr.ndim != 4:
            raise ValueError(f"likelihood map must be 4D (C,D,H,W), got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[0] > MAX_CLASSES:
            raise ValueError(f"channel count must be in [1, {MAX_CLASSES}], got {arr.shape[0]}")
        if 0 in arr.shape:
            raise ValueError("likelihood map must have at least one voxel")
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        if not np.isfinite(arr).all():
            raise ValueError("likelihoods must be finite")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("likelihoods must lie in [0, 1]")
        if check_normalized:
            sums = arr.sum(axis=0, dtype=np.float64)
            err = float(np.abs(sums - 1.0).max())
            if err > self.NORM_TOL:
                raise ValueError(
                    f"per-voxel channel sums deviate from 1 by {err:.3g} "
                    f"(tolerance {self.NORM_TOL:g})"
                )
        object.__setattr__(self, "data", _frozen(arr))
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def dims(self) -> Dims:
        return Dims(*self.data.shape[1:])


@dataclass(frozen=True)
class BinaryMask:
    """Per-voxel boolean mask over a 3D grid."""

    data: np.ndarray  # bool, shape (depth, height, width)
    spacing: Spacing = UNIT_SPACING

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3:
            raise ValueError(f"mask must be 3D, got shape {arr.shape}")
        if arr.size == 0:
            raise ValueError("mask must have at least one voxel")
        if arr.dtype != np.bool_:
            if not (np.issubdtype(arr.dtype, np.integer) or arr.dtype == np.bool_):
                raise ValueError(f"mask must be boolean or integer 0/1, got dtype {arr.dtype}")
            arr = arr.astype(np.bool_)
        object.__setattr__(self, "data", _frozen(arr))
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))

    @property
    def dims(self) -> Dims:
        return Dims(*self.data.shape)

    @property
    def count(self) -> int:
        return int(self.data.sum())


# A key-voxel mask is an ordinary binary mask; the alias marks intent.
KeyVoxelMask = BinaryMask


def argmax_labels(p: ProbVolume) -> LabelVolume:
    """Discrete segmentation from a likelihood map.

    Each voxel takes the index of its maximal channel; exact ties resolve to
    the lowest channel index.
    """
    lab = np.argmax(p.data, axis=0).astype(np.uint8)
    return LabelVolume(lab, p.spacing)


def class_mask(
    labels: LabelVolume,
    classes: Iterable[int],
    num_classes: int | None = None,
) -> BinaryMask:
    """Mask of voxels whose label belongs to ``classes``.

    When ``num_classes`` is given, any requested id at or above it is
    rejected.
    """
    lut = np.zeros(MAX_CLASSES, dtype=bool)
    for c in classes:
        cid = int(c)
        bound = num_classes if num_classes is not None else MAX_CLASSES
        if not 0 <= cid < bound:
            raise ValueError(f"unknown label id {cid} (table has {bound} classes)")
        lut[cid] = True
    return BinaryMask(lut[labels.data], labels.spacing)


def one_hot(labels: LabelVolume, channels: int | None = None) -> ProbVolume:
    """Exact one-hot likelihood map of a label grid."""
    c = int(channels) if channels is not None else int(labels.data.max()) + 1
    if c <= int(labels.data.max()):
        raise ValueError(f"{c} channels cannot one-hot encode label {int(labels.data.max())}")
    eye = np.eye(c, dtype=np.float32)
    data = np.moveaxis(eye[labels.data], -1, 0)
    return ProbVolume(data, labels.spacing)
