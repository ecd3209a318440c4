"""
Evaluation metrics and file formats
===================================

Score a degraded segmentation against its ground truth, then round-trip
volumes through the TGVOL1 container and read a hand-built NIfTI-1 file.
"""

import struct
import tempfile
from pathlib import Path

import numpy as np

from topoguard import (
    DEFAULT_WHS_TABLE,
    LabelVolume,
    PhantomKind,
    PhantomSpec,
    generate,
    read_nifti,
    read_volume,
    report,
    write_volume,
)

gt = generate(PhantomSpec(PhantomKind.NESTED_SPHERES, seed=6))

# Degrade the prediction: erase a chunk of the shell and dent the ventricle.
pred_data = gt.data.copy()
pred_data[10:14, 10:14, 10:14] = 0
pred = LabelVolume(pred_data, gt.spacing)

rep = report(pred, gt, DEFAULT_WHS_TABLE)
print(rep.to_csv())
print("per-class rows hold Dice, Jaccard and surface distances in mm;")
print("classes absent from both volumes read NA; ALL pools the foreground.\n")

workdir = Path(tempfile.mkdtemp())

# TGVOL1 is this library's raw container: 52-byte header + payload,
# bit-exact round trips.
path = workdir / "gt.tgvol"
write_volume(path, gt)
again = read_volume(path)
print("TGVOL1 round trip exact:", np.array_equal(again.data, gt.data),
      "| file size:", path.stat().st_size, "bytes")

# A minimal uncompressed NIfTI-1 volume built by hand: 348-byte header with
# dims, datatype, pixel spacing, and the magic "n+1\0" at offset 344.
hdr = bytearray(348)
struct.pack_into("<i", hdr, 0, 348)
struct.pack_into("<8h", hdr, 40, 3, 4, 4, 4, 1, 1, 1, 1)
struct.pack_into("<h", hdr, 70, 2)        # uint8
struct.pack_into("<h", hdr, 72, 8)
struct.pack_into("<8f", hdr, 76, 1.0, 1.5, 1.0, 2.0, 1.0, 1.0, 1.0, 1.0)
struct.pack_into("<f", hdr, 108, 352.0)
hdr[344:348] = b"n+1\x00"
payload = np.arange(64, dtype=np.uint8) % 8
nii = workdir / "labels.nii"
nii.write_bytes(bytes(hdr) + b"\x00" * 4 + payload.tobytes())

vol = read_nifti(nii)
print("NIfTI dims:", tuple(vol.dims), "| spacing (dz,dy,dx):", tuple(vol.spacing))
