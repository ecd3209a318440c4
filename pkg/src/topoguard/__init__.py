"""Topology-constraint tooling for multi-class 3D segmentations.

Detect voxels that violate containment/exclusion relations between classes,
penalize them with a differentiable loss, and score segmentations with
Dice/Jaccard/surface-distance metrics.
"""

from .volume import (
    BinaryMask,
    DEFAULT_WHS_TABLE,
    Dims,
    KeyVoxelMask,
    LabelTable,
    LabelVolume,
    ProbVolume,
    Spacing,
    UNIT_SPACING,
    WHS_CLASS_NAMES,
    argmax_labels,
    class_mask,
    one_hot,
)
from .io import (
    VolumeFormatError,
    read_float_field,
    read_label_volume,
    read_mask,
    read_nifti,
    read_prob_volume,
    read_volume,
    volume_bytes,
    write_float_field,
    write_volume,
)
from .morphology import Connectivity, DistanceField, boundary, dilate, edt
from .constraints import (
    Constraint,
    ConstraintKind,
    ConstraintParseError,
    ConstraintSpec,
    ViolationReport,
    XYPair,
    brute_force_key_voxels,
    contain,
    default_whs_spec,
    exclude,
    key_voxels,
    key_voxels_one,
    load_constraint_spec,
    parse_constraint_text,
    reduce_to_xy,
    validate,
)
from .losses import (
    CLAMP_EPS,
    DEFAULT_TP_WEIGHT,
    DICE_SMOOTH,
    LossBreakdown,
    ce_loss,
    dice_loss,
    score_gradient,
    total_loss,
    tp_loss,
)
from .metrics import (
    ClassMetrics,
    MetricReport,
    dice_jaccard,
    generalized,
    report,
    surface_distances,
)
from .phantoms import PhantomKind, PhantomSpec, generate, soften, splitmix64

__version__ = "0.1.0"
