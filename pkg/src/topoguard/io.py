"""Bit-exact volume serialization.

Two formats are handled:

* TGVOL1 — this library's raw container, written and read here. Fixed
  52-byte little-endian header followed by the voxel payload::

      magic    8 bytes  b"TGVOL1\\0\\0"
      dtype    u32      0 = uint8 labels, 1 = float32 likelihoods, 2 = byte mask
      channels u32      1 for labels/masks, C for likelihoods
      depth    u32
      height   u32
      width    u32
      dz,dy,dx f64      voxel spacing, millimetres

  Payload is row-major (depth, height, width), channel-major for
  likelihoods. Identical volumes always serialize to identical bytes.

* NIfTI-1 — read-only, single-file uncompressed ``.nii`` with the standard
  348-byte header. Decompress ``.nii.gz`` externally before use.
"""

from __future__ import annotations

import os
import struct
from typing import Union

import numpy as np

from .volume import BinaryMask, LabelVolume, ProbVolume, Spacing

MAGIC = b"TGVOL1\x00\x00"

DTYPE_LABELS = 0
DTYPE_PROBS = 1
DTYPE_MASK = 2

_HEADER = struct.Struct("<8s5I3d")

Volume = Union[LabelVolume, ProbVolume, BinaryMask]


class VolumeFormatError(ValueError):
    """Raised for malformed, truncated, or unsupported volume files."""


def _header_bytes(dtype_code: int, channels: int, dims, spacing: Spacing) -> bytes:
    d, h, w = dims
    return _HEADER.pack(MAGIC, dtype_code, channels, d, h, w, *spacing)


def volume_bytes(volume: Volume) -> bytes:
    """Serialize a volume to TGVOL1 bytes."""
    if isinstance(volume, LabelVolume):
        header = _header_bytes(DTYPE_LABELS, 1, volume.dims, volume.spacing)
        payload = volume.data.tobytes()
    elif isinstance(volume, ProbVolume):
        header = _header_bytes(DTYPE_PROBS, volume.channels, volume.dims, volume.spacing)
        payload = volume.data.astype("<f4", copy=False).tobytes()
    elif isinstance(volume, BinaryMask):
        header = _header_bytes(DTYPE_MASK, 1, volume.dims, volume.spacing)
        payload = volume.data.astype(np.uint8).tobytes()
    else:
        raise TypeError(f"cannot serialize {type(volume).__name__}")
    return header + payload


def write_volume(path, volume: Volume) -> None:
    with open(path, "wb") as f:
        f.write(volume_bytes(volume))


def read_volume(path) -> Volume:
    """Read a TGVOL1 file; the result type follows the stored dtype code."""
    with open(path, "rb") as f:
        blob = f.read()
    return volume_from_bytes(blob, name=os.fspath(path))


def volume_from_bytes(blob: bytes, name: str = "<bytes>") -> Volume:
    if len(blob) < _HEADER.size:
        raise VolumeFormatError(f"{name}: too short for a TGVOL1 header")
    magic, dtype_code, channels, d, h, w, dz, dy, dx = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise VolumeFormatError(f"{name}: bad magic {magic!r}")
    if min(d, h, w, channels) < 1:
        raise VolumeFormatError(f"{name}: dims/channels must be >= 1")
    try:
        spacing = Spacing(dz, dy, dx)
        voxels = d * h * w
        payload = blob[_HEADER.size:]
        if dtype_code == DTYPE_LABELS:
            _expect_payload(name, payload, voxels)
            data = np.frombuffer(payload, dtype=np.uint8).reshape(d, h, w)
            return LabelVolume(data, spacing)
        if dtype_code == DTYPE_MASK:
            _expect_payload(name, payload, voxels)
            raw = np.frombuffer(payload, dtype=np.uint8)
            if raw.max(initial=0) > 1:
                raise VolumeFormatError(f"{name}: mask bytes must be 0 or 1")
            return BinaryMask(raw.reshape(d, h, w).astype(bool), spacing)
        if dtype_code == DTYPE_PROBS:
            _expect_payload(name, payload, channels * voxels * 4)
            data = np.frombuffer(payload, dtype="<f4").reshape(channels, d, h, w)
            if np.isnan(data).any():
                raise VolumeFormatError(f"{name}: NaN in likelihood payload")
            return ProbVolume(data, spacing)
    except VolumeFormatError:
        raise
    except ValueError as e:
        raise VolumeFormatError(f"{name}: {e}") from e
    raise VolumeFormatError(f"{name}: unknown dtype code {dtype_code}")


def _expect_payload(name: str, payload: bytes, expected: int) -> None:
    if len(payload) < expected:
        raise VolumeFormatError(
            f"{name}: truncated payload ({len(payload)} bytes, expected {expected})"
        )
    if len(payload) > expected:
        raise VolumeFormatError(
            f"{name}: {len(payload) - expected} trailing bytes after payload"
        )


def write_float_field(path, data: np.ndarray, spacing: Spacing) -> None:
    """Write an arbitrary (C, D, H, W) float field with the float32 layout.

    Gradient transport: such files use the likelihood dtype code but are not
    range-limited, so read them back with ``read_float_field`` rather than
    ``read_volume``.
    """
    arr = np.ascontiguousarray(data, dtype="<f4")
    if arr.ndim != 4:
        raise ValueError(f"float field must be 4D (C,D,H,W), got shape {arr.shape}")
    if np.isnan(arr).any():
        raise VolumeFormatError("refusing to write NaN values")
    c = arr.shape[0]
    header = _header_bytes(DTYPE_PROBS, c, arr.shape[1:], Spacing(*spacing))
    with open(path, "wb") as f:
        f.write(header + arr.tobytes())


def read_float_field(path) -> tuple[np.ndarray, Spacing]:
    """Read a float32 TGVOL1 payload without likelihood validation."""
    name = os.fspath(path)
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < _HEADER.size:
        raise VolumeFormatError(f"{name}: too short for a TGVOL1 header")
    magic, dtype_code, channels, d, h, w, dz, dy, dx = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise VolumeFormatError(f"{name}: bad magic {magic!r}")
    if dtype_code != DTYPE_PROBS:
        raise VolumeFormatError(f"{name}: expected a float32 payload, got dtype {dtype_code}")
    payload = blob[_HEADER.size:]
    _expect_payload(name, payload, channels * d * h * w * 4)
    data = np.frombuffer(payload, dtype="<f4").reshape(channels, d, h, w)
    return data, Spacing(dz, dy, dx)


def read_label_volume(path) -> LabelVolume:
    vol = read_volume(path)
    if not isinstance(vol, LabelVolume):
        raise VolumeFormatError(
            f"{os.fspath(path)}: expected a label volume, file holds {type(vol).__name__}"
        )
    return vol


def read_prob_volume(path) -> ProbVolume:
    vol = read_volume(path)
    if not isinstance(vol, ProbVolume):
        raise VolumeFormatError(
            f"{os.fspath(path)}: expected a likelihood volume, file holds {type(vol).__name__}"
        )
    return vol


def read_mask(path) -> BinaryMask:
    vol = read_volume(path)
    if not isinstance(vol, BinaryMask):
        raise VolumeFormatError(
            f"{os.fspath(path)}: expected a binary mask, file holds {type(vol).__name__}"
        )
    return vol


# --- NIfTI-1 -----------------------------------------------------------------

# datatype codes accepted by the reader
_NIFTI_DTYPES = {
    2: np.dtype("<u1"),   # uint8
    4: np.dtype("<i2"),   # int16
    8: np.dtype("<i4"),   # int32
    16: np.dtype("<f4"),  # float32
    64: np.dtype("<f8"),  # float64
    256: np.dtype("<i1"), # int8
    512: np.dtype("<u2"), # uint16
}

_NIFTI_INT_CODES = {2, 4, 8, 256, 512}


def read_nifti(path) -> Union[LabelVolume, ProbVolume]:
    """Read an uncompressed single-file NIfTI-1 volume.

    Integer data becomes a LabelVolume, float data a ProbVolume (channel
    count from dim[4] when present). pixdim[1..3] map to (dx, dy, dz) in mm;
    scl_slope/scl_inter are applied when slope is nonzero. Likelihood maps
    read from NIfTI are range-checked but not required to be normalized.
    """
    name = os.fspath(path)
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:2] == b"\x1f\x8b":
        raise VolumeFormatError(f"{name}: gzip-compressed NIfTI is unsupported; decompress first")
    if len(blob) < 348:
        raise VolumeFormatError(f"{name}: shorter than a 348-byte NIfTI-1 header")

    (sizeof_hdr,) = struct.unpack_from("<i", blob, 0)
    if sizeof_hdr != 348:
        if struct.unpack_from(">i", blob, 0)[0] == 348:
            raise VolumeFormatError(f"{name}: big-endian NIfTI is unsupported")
        raise VolumeFormatError(f"{name}: sizeof_hdr is {sizeof_hdr}, not a NIfTI-1 file")

    magic = blob[344:348]
    if magic == b"ni1\x00":
        raise VolumeFormatError(f"{name}: detached-header NIfTI variant is unsupported")
    if magic != b"n+1\x00":
        raise VolumeFormatError(f"{name}: NIfTI magic mismatch ({magic!r})")

    dim = struct.unpack_from("<8h", blob, 40)
    (datatype,) = struct.unpack_from("<h", blob, 70)
    pixdim = struct.unpack_from("<8f", blob, 76)
    (vox_offset,) = struct.unpack_from("<f", blob, 108)
    scl_slope, scl_inter = struct.unpack_from("<2f", blob, 112)

    ndim = dim[0]
    if not 1 <= ndim <= 4:
        raise VolumeFormatError(f"{name}: dim[0]={ndim} unsupported (at most 4 dims)")
    nx, ny, nz = (max(1, dim[i]) for i in (1, 2, 3))
    nt = max(1, dim[4]) if ndim == 4 else 1
    if min(dim[1:ndim + 1]) < 1:
        raise VolumeFormatError(f"{name}: nonpositive dimension in {dim[1:ndim + 1]}")

    if datatype not in _NIFTI_DTYPES:
        raise VolumeFormatError(f"{name}: unsupported NIfTI datatype code {datatype}")
    dt = _NIFTI_DTYPES[datatype]

    try:
        spacing = Spacing(dz=pixdim[3] or 1.0, dy=pixdim[2] or 1.0, dx=pixdim[1] or 1.0)
        spacing = Spacing(*(float(v) for v in spacing))
        if min(spacing) <= 0:
            raise VolumeFormatError(f"{name}: nonpositive pixdim {pixdim[1:4]}")
    except (TypeError, ValueError) as e:
        raise VolumeFormatError(f"{name}: bad pixdim ({e})") from e

    offset = max(348, int(vox_offset))
    count = nx * ny * nz * nt
    need = count * dt.itemsize
    if len(blob) < offset + need:
        raise VolumeFormatError(
            f"{name}: truncated payload ({len(blob) - offset} bytes, expected {need})"
        )
    # on-disk order is x fastest, so a C reshape gives (t, z, y, x)
    data = np.frombuffer(blob, dtype=dt, count=count, offset=offset)
    data = data.reshape(nt, nz, ny, nx)

    scaled = scl_slope != 0.0 and not (scl_slope == 1.0 and scl_inter == 0.0)
    try:
        if datatype in _NIFTI_INT_CODES:
            if nt != 1:
                raise VolumeFormatError(f"{name}: 4D integer volumes are unsupported")
            vals = data[0]
            if scaled:
                vals = vals * np.float64(scl_slope) + np.float64(scl_inter)
                if not np.equal(np.round(vals), vals).all():
                    raise VolumeFormatError(
                        f"{name}: scl scaling produces non-integral label values"
                    )
                vals = np.round(vals)
            if vals.min() < 0 or vals.max() > 255:
                raise VolumeFormatError(f"{name}: label values outside [0, 255]")
            return LabelVolume(vals.astype(np.uint8), spacing)
        vals = data.astype(np.float64)
        if scaled:
            vals = vals * np.float64(scl_slope) + np.float64(scl_inter)
        if np.isnan(vals).any():
            raise VolumeFormatError(f"{name}: NaN in likelihood payload")
        return ProbVolume(vals.astype(np.float32), spacing, check_normalized=False)
    except VolumeFormatError:
        raise
    except ValueError as e:
        raise VolumeFormatError(f"{name}: {e}") from e
