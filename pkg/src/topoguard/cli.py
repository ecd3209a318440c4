"""Command-line interface.

Subcommands: ``synth`` (phantom generation), ``validate`` (topology check
with gating exit code), ``keymask`` (write the key-voxel mask), ``loss``
(loss breakdown as one JSON line), ``metrics`` (CSV metric report).

Exit codes: 0 success/valid, 1 topology violations found (validate only),
2 usage error, 3 I/O or format error. TOPOGUARD_THREADS caps internal
parallelism (0 or unset = auto).

Inputs may be TGVOL1 files or uncompressed single-file NIfTI-1 volumes;
decompress ``.nii.gz`` before use.
"""

from __future__ import annotations

import argparse
import json
import struct
import sys

from . import io as tgio
from .constraints import (
    ConstraintParseError,
    ConstraintSpec,
    default_whs_spec,
    key_voxels,
    load_constraint_spec,
    validate,
)
from .losses import DEFAULT_TP_WEIGHT, score_gradient, total_loss
from .metrics import report
from .phantoms import PhantomKind, PhantomSpec, generate, soften
from .volume import (
    DEFAULT_WHS_TABLE,
    Dims,
    LabelTable,
    LabelVolume,
    ProbVolume,
    Spacing,
)

EXIT_OK = 0
EXIT_VIOLATIONS = 1
EXIT_USAGE = 2
EXIT_IO = 3


class UsageError(ValueError):
    pass


def _load_any(path):
    with open(path, "rb") as f:
        head = f.read(8)
    if head[: len(tgio.MAGIC)] == tgio.MAGIC:
        return tgio.read_volume(path)
    if head[:2] == b"\x1f\x8b":
        return tgio.read_nifti(path)  # raises the compressed-input error
    if len(head) >= 4 and struct.unpack("<i", head[:4])[0] == 348:
        return tgio.read_nifti(path)
    return tgio.read_volume(path)  # raises a bad-magic error


def _load_labels(path) -> LabelVolume:
    vol = _load_any(path)
    if not isinstance(vol, LabelVolume):
        raise tgio.VolumeFormatError(
            f"{path}: expected a label volume, got {type(vol).__name__}"
        )
    return vol


def _load_probs(path) -> ProbVolume:
    vol = _load_any(path)
    if not isinstance(vol, ProbVolume):
        raise tgio.VolumeFormatError(
            f"{path}: expected a likelihood volume, got {type(vol).__name__}"
        )
    return vol


def _load_spec(args) -> ConstraintSpec:
    if args.constraints is None:
        return default_whs_spec()
    return load_constraint_spec(args.constraints)


def _metrics_table(*volumes: LabelVolume) -> LabelTable:
    top = max(int(v.data.max()) for v in volumes)
    if top < len(DEFAULT_WHS_TABLE):
        return DEFAULT_WHS_TABLE
    return LabelTable(tuple(["BG"] + [f"C{i}" for i in range(1, top + 1)]))


def cmd_synth(args) -> int:
    try:
        spec = PhantomSpec(
            kind=PhantomKind(args.kind),
            dims=Dims(*args.dims),
            spacing=Spacing(*args.spacing),
            seed=args.seed,
            inner_radius=args.inner_radius,
            outer_radius=args.outer_radius,
            blob_radius=args.blob_radius,
            separation=args.separation,
            channel_width=args.channel_width,
            classes=args.classes,
        )
        labels = generate(spec)
        if args.soften is not None:
            probs = soften(labels, temperature=args.soften, seed=args.seed,
                           channels=args.channels)
            tgio.write_volume(args.output, probs)
        else:
            tgio.write_volume(args.output, labels)
    except ValueError as e:
        raise UsageError(str(e)) from e
    return EXIT_OK


def cmd_validate(args) -> int:
    labels = _load_labels(args.volume)
    spec = _load_spec(args)
    if args.samples < 0:
        raise UsageError("--samples must be >= 0")
    rep = validate(labels, spec, max_samples=args.samples)
    if args.format == "json-lines":
        print(rep.to_json_lines())
    else:
        print(rep.to_text())
    return EXIT_OK if rep.is_valid else EXIT_VIOLATIONS


def cmd_keymask(args) -> int:
    labels = _load_labels(args.volume)
    spec = _load_spec(args)
    mask = key_voxels(labels, spec)
    tgio.write_volume(args.output, mask)
    return EXIT_OK


def cmd_loss(args) -> int:
    if args.tp_weight < 0:
        raise UsageError("--lambda must be >= 0")
    probs = _load_probs(args.probs)
    gt = _load_labels(args.truth)
    spec = _load_spec(args)
    breakdown, grad = total_loss(
        probs,
        gt,
        spec,
        tp_weight=args.tp_weight,
        norm=args.tp_norm,
        mask_from=args.tp_mask_from,
        dice_foreground_only=args.dice_foreground_only,
    )
    print(json.dumps(breakdown.as_dict()))
    if args.grad_out is not None:
        if args.grad_space == "score":
            grad = score_gradient(grad, probs)
        tgio.write_float_field(args.grad_out, grad, probs.spacing)
    return EXIT_OK


def cmd_metrics(args) -> int:
    pred = _load_labels(args.pred)
    gt = _load_labels(args.truth)
    table = _metrics_table(pred, gt)
    rep = report(pred, gt, table, hd_percentile=95.0 if args.hd95 else None)
    csv_text = rep.to_csv()
    if args.csv is not None:
        with open(args.csv, "w", encoding="utf-8", newline="") as f:
            f.write(csv_text)
    else:
        sys.stdout.write(csv_text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="topoguard",
        description="Topology-constraint checking, losses and metrics for 3D segmentations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic phantom volume")
    p.add_argument("kind", choices=[k.value for k in PhantomKind])
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--dims", nargs=3, type=int, default=[32, 32, 32],
                   metavar=("D", "H", "W"))
    p.add_argument("--spacing", nargs=3, type=float, default=[1.0, 1.0, 1.0],
                   metavar=("DZ", "DY", "DX"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inner-radius", type=float, default=6.0)
    p.add_argument("--outer-radius", type=float, default=10.0)
    p.add_argument("--blob-radius", type=float, default=5.0)
    p.add_argument("--separation", type=float, default=16.0)
    p.add_argument("--channel-width", type=int, default=1)
    p.add_argument("--classes", type=int, default=8,
                   help="label count for the random phantom")
    p.add_argument("--soften", type=float, default=None, metavar="TEMP",
                   help="emit a likelihood map at this temperature instead of labels")
    p.add_argument("--channels", type=int, default=None,
                   help="channel count for --soften (default: max label + 1)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("validate", help="report topology violations; exit 1 if any")
    p.add_argument("volume")
    p.add_argument("--constraints", default=None, help="constraint spec file (default: WHS)")
    p.add_argument("--format", choices=["text", "json-lines"], default="text")
    p.add_argument("--samples", type=int, default=10,
                   help="sample coordinates listed per constraint")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("keymask", help="write the key-voxel mask of a segmentation")
    p.add_argument("volume")
    p.add_argument("--constraints", default=None)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_keymask)

    p = sub.add_parser("loss", help="loss breakdown for a likelihood map vs ground truth")
    p.add_argument("probs")
    p.add_argument("truth")
    p.add_argument("--constraints", default=None)
    p.add_argument("--lambda", dest="tp_weight", type=float, default=DEFAULT_TP_WEIGHT)
    p.add_argument("--tp-norm", choices=["keyvox", "allvox"], default="keyvox")
    p.add_argument("--tp-mask-from", choices=["prediction", "ground_truth"],
                   default="prediction")
    p.add_argument("--dice-foreground-only", action="store_true")
    p.add_argument("--grad-out", default=None,
                   help="also write the gradient volume (float32 TGVOL1)")
    p.add_argument("--grad-space", choices=["prob", "score"], default="prob")
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("metrics", help="Dice/Jaccard/SD/HD report as CSV")
    p.add_argument("pred")
    p.add_argument("truth")
    p.add_argument("--csv", default=None, help="write CSV here instead of stdout")
    p.add_argument("--hd95", action="store_true",
                   help="report the 95th-percentile Hausdorff distance")
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (tgio.VolumeFormatError, ConstraintParseError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


def entry() -> None:
    sys.exit(main())
