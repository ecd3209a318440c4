"""Adjacency constraints between classes and detection of violating voxels.

Two relation kinds cover the anatomical rules of interest:

* containment — an inner class may only ever touch its enclosing class
  (the myocardium always encloses the left ventricle);
* exclusion — two classes may never occupy adjacent voxels (right atrium
  and ascending aorta are always separated).

Every relation reduces to the same primitive: a set of labels X must not
touch a set of labels Y. Violating voxels ("key voxels") are found by
dilating the X mask one connectivity step, intersecting with the Y mask,
and vice versa; the union over all relations is the key-voxel mask N.
"""

from __future__ import annotations

import enum
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import reduce

import numpy as np

from .morphology import Connectivity, _dilate_array
from .volume import (
    BinaryMask,
    DEFAULT_WHS_TABLE,
    Dims,
    KeyVoxelMask,
    LabelTable,
    LabelVolume,
    Spacing,
)

THREADS_ENV = "TOPOGUARD_THREADS"


class ConstraintParseError(ValueError):
    """Raised for malformed constraint-spec text."""


class ConstraintKind(enum.Enum):
    CONTAIN = "contain"
    EXCLUDE = "exclude"


@dataclass(frozen=True)
class Constraint:
    """A single relation between two foreground labels.

    ``CONTAIN(subject, other)`` reads "subject is enclosed by other";
    ``EXCLUDE(subject, other)`` is symmetric and normalized to
    subject < other.
    """

    kind: ConstraintKind
    subject: int
    other: int

    def __post_init__(self):
        if self.subject == self.other:
            raise ValueError("a constraint cannot pair a label with itself")
        if self.subject < 1 or self.other < 1:
            raise ValueError("constraints relate foreground labels (ids >= 1)")
        if self.kind is ConstraintKind.EXCLUDE and self.subject > self.other:
            a, b = self.other, self.subject
            object.__setattr__(self, "subject", a)
            object.__setattr__(self, "other", b)

    def describe(self, table: LabelTable) -> str:
        return f"{self.kind.value} {table.name_of(self.subject)} {table.name_of(self.other)}"


def contain(inner: int, outer: int) -> Constraint:
    return Constraint(ConstraintKind.CONTAIN, inner, outer)


def exclude(a: int, b: int) -> Constraint:
    return Constraint(ConstraintKind.EXCLUDE, a, b)


@dataclass(frozen=True)
class XYPair:
    """Reduced form of a constraint: label set x must not touch label set y."""

    x: frozenset[int]
    y: frozenset[int]

    def __post_init__(self):
        if not self.x or not self.y:
            raise ValueError("x and y must both be non-empty")
        if self.x & self.y:
            raise ValueError(f"x and y overlap: {sorted(self.x & self.y)}")


@dataclass(frozen=True)
class ConstraintSpec:
    """Declarative constraint set plus the adjacency definition to enforce."""

    table: LabelTable = DEFAULT_WHS_TABLE
    constraints: tuple[Constraint, ...] = ()
    connectivity: Connectivity = Connectivity.VERTEX26
    include_background_in_y: bool = True

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        num = len(self.table)
        seen = set()
        for c in self.constraints:
            if c.subject >= num or c.other >= num:
                raise ValueError(
                    f"constraint {c.kind.value}({c.subject},{c.other}) references a label "
                    f"outside the {num}-class table"
                )
            if c in seen:
                raise ValueError(f"duplicate constraint {c.describe(self.table)}")
            seen.add(c)


def default_whs_spec() -> ConstraintSpec:
    """The shipped whole-heart constraint set."""
    t = DEFAULT_WHS_TABLE
    return ConstraintSpec(
        table=t,
        constraints=(
            contain(t.id_of("LV"), t.id_of("Myo")),
            exclude(t.id_of("RA"), t.id_of("AO")),
        ),
    )


def reduce_to_xy(c: Constraint, table: LabelTable, include_bg: bool = True) -> XYPair:
    """Rewrite a constraint as an x-must-not-touch-y pair.

    Exclusion pairs the two labels directly. Containment forbids the inner
    label from touching anything except its container: y is every other
    label, including background when ``include_bg`` is set.
    """
    num = len(table)
    if c.subject >= num or c.other >= num:
        raise ValueError(f"label id {max(c.subject, c.other)} absent from table")
    if c.kind is ConstraintKind.EXCLUDE:
        return XYPair(frozenset({c.subject}), frozenset({c.other}))
    lo = 0 if include_bg else 1
    y = frozenset(range(lo, num)) - {c.subject, c.other}
    if not y:
        raise ValueError(
            f"containment {c.describe(table)} leaves no labels for y; "
            "enable include_background_in_y or extend the table"
        )
    return XYPair(frozenset({c.subject}), y)


def _member_lut(ids: frozenset[int]) -> np.ndarray:
    lut = np.zeros(256, dtype=bool)
    lut[list(ids)] = True
    return lut


def key_voxels_one(
    labels: LabelVolume, xy: XYPair, conn: Connectivity = Connectivity.VERTEX26
) -> BinaryMask:
    """Voxels of x adjacent to y, and voxels of y adjacent to x."""
    lab = labels.data
    mx = _member_lut(xy.x)[lab]
    my = _member_lut(xy.y)[lab]
    hits = (_dilate_array(mx, conn) & my) | (_dilate_array(my, conn) & mx)
    return BinaryMask(hits, labels.spacing)


def _check_labels(labels: LabelVolume, spec: ConstraintSpec) -> None:
    top = int(labels.data.max())
    if top >= len(spec.table):
        raise ValueError(
            f"volume contains label {top} but the table declares only {len(spec.table)} classes"
        )


def thread_cap() -> int:
    """Worker cap from TOPOGUARD_THREADS (0 or unset = one per CPU)."""
    raw = os.environ.get(THREADS_ENV, "0").strip()
    try:
        cap = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a non-negative integer, got {raw!r}")
    if cap < 0:
        raise ValueError(f"{THREADS_ENV} must be a non-negative integer, got {raw!r}")
    return cap if cap > 0 else (os.cpu_count() or 1)


def key_voxels(labels: LabelVolume, spec: ConstraintSpec) -> KeyVoxelMask:
    """Mask of every voxel participating in a constraint-violating adjacency.

    Union of the per-constraint key voxels. Constraints are evaluated in
    parallel when TOPOGUARD_THREADS allows; the union is order-independent,
    so the result is deterministic either way.
    """
    _check_labels(labels, spec)
    pairs = [
        reduce_to_xy(c, spec.table, spec.include_background_in_y) for c in spec.constraints
    ]
    if not pairs:
        return BinaryMask(np.zeros(labels.dims, dtype=bool), labels.spacing)

    def one(xy: XYPair) -> np.ndarray:
        return key_voxels_one(labels, xy, spec.connectivity).data

    workers = min(thread_cap(), len(pairs))
    if workers > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            masks = list(pool.map(one, pairs))
    else:
        masks = [one(xy) for xy in pairs]
    return BinaryMask(reduce(np.logical_or, masks), labels.spacing)


def brute_force_key_voxels(labels: LabelVolume, spec: ConstraintSpec) -> BinaryMask:
    """Reference enumeration of violating adjacencies; defines key_voxels.

    Walks every ordered pair of conn-adjacent voxels in plain Python and
    marks both endpoints whenever their labels land in (x, y) of any
    constraint. Intended for small volumes only.
    """
    _check_labels(labels, spec)
    d, h, w = labels.dims
    out = np.zeros((d, h, w), dtype=bool)
    pairs = [
        reduce_to_xy(c, spec.table, spec.include_background_in_y) for c in spec.constraints
    ]
    if not pairs:
        return BinaryMask(out, labels.spacing)
    lab = labels.data.tolist()
    offsets = spec.connectivity.offsets
    for z in range(d):
        for y in range(h):
            for x in range(w):
                la = lab[z][y][x]
                for dz, dy, dx in offsets:
                    z2, y2, x2 = z + dz, y + dy, x + dx
                    if not (0 <= z2 < d and 0 <= y2 < h and 0 <= x2 < w):
                        continue
                    lb = lab[z2][y2][x2]
                    for xy in pairs:
                        if la in xy.x and lb in xy.y:
                            out[z, y, x] = True
                            out[z2, y2, x2] = True
    return BinaryMask(out, labels.spacing)


@dataclass(frozen=True)
class ConstraintViolations:
    """Violation census for one constraint."""

    constraint: Constraint
    label: str
    count: int
    bbox: tuple[int, int, int, int, int, int] | None  # zmin,ymin,xmin,zmax,ymax,xmax
    samples: tuple[tuple[int, int, int], ...]


@dataclass(frozen=True)
class ViolationReport:
    dims: Dims
    spacing: Spacing
    per_constraint: tuple[ConstraintViolations, ...]
    total_key_voxels: int

    @property
    def is_valid(self) -> bool:
        return self.total_key_voxels == 0

    def to_text(self) -> str:
        d, h, w = self.dims
        dz, dy, dx = self.spacing
        lines = [f"volume: {d}x{h}x{w} voxels, spacing ({dz:g}, {dy:g}, {dx:g}) mm"]
        for v in self.per_constraint:
            if v.count == 0:
                lines.append(f"{v.label}: 0 violating voxels")
                continue
            z0, y0, x0, z1, y1, x1 = v.bbox
            coords = " ".join(f"({z},{y},{x})" for z, y, x in v.samples)
            lines.append(
                f"{v.label}: {v.count} violating voxels, "
                f"bbox ({z0},{y0},{x0})..({z1},{y1},{x1}), samples {coords}"
            )
        lines.append(
            f"total key voxels: {self.total_key_voxels} / {self.dims.voxels}"
        )
        lines.append("status: " + ("valid" if self.is_valid else "INVALID"))
        return "\n".join(lines)

    def to_json_lines(self) -> str:
        lines = []
        for v in self.per_constraint:
            lines.append(json.dumps({
                "constraint": v.label,
                "count": v.count,
                "bbox": list(v.bbox) if v.bbox else None,
                "samples": [list(s) for s in v.samples],
            }))
        lines.append(json.dumps({
            "total_key_voxels": self.total_key_voxels,
            "voxels": self.dims.voxels,
            "dims": list(self.dims),
            "spacing": list(self.spacing),
            "valid": self.is_valid,
        }))
        return "\n".join(lines)


def validate(labels: LabelVolume, spec: ConstraintSpec, max_samples: int = 10) -> ViolationReport:
    """Per-constraint violation census over a label volume."""
    _check_labels(labels, spec)
    union = np.zeros(labels.dims, dtype=bool)
    rows = []
    for c in spec.constraints:
        xy = reduce_to_xy(c, spec.table, spec.include_background_in_y)
        hits = key_voxels_one(labels, xy, spec.connectivity).data
        union |= hits
        count = int(hits.sum())
        if count == 0:
            rows.append(ConstraintViolations(c, c.describe(spec.table), 0, None, ()))
            continue
        coords = np.argwhere(hits)  # scan (row-major) order
        lo = coords.min(axis=0)
        hi = coords.max(axis=0)
        samples = tuple(tuple(int(v) for v in row) for row in coords[:max_samples])
        bbox = (int(lo[0]), int(lo[1]), int(lo[2]), int(hi[0]), int(hi[1]), int(hi[2]))
        rows.append(ConstraintViolations(c, c.describe(spec.table), count, bbox, samples))
    return ViolationReport(labels.dims, labels.spacing, tuple(rows), int(union.sum()))


# --- spec text format --------------------------------------------------------

def parse_constraint_text(text: str) -> ConstraintSpec:
    """Parse the line-oriented constraint spec format.

    Directives: ``label <id> <name>``, ``connectivity <6|18|26>``,
    ``contain <inner> <outer>``, ``exclude <a> <b>``,
    ``background_in_y <true|false>``. ``#`` starts a comment. Label lines,
    when present, replace the default whole-heart table.
    """
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        rows.append((lineno, line.split()))

    label_pairs = []
    for lineno, parts in rows:
        if parts[0] == "label":
            if len(parts) != 3:
                raise ConstraintParseError(f"line {lineno}: label takes <id> <name>")
            try:
                label_pairs.append((int(parts[1]), parts[2]))
            except ValueError:
                raise ConstraintParseError(f"line {lineno}: bad label id {parts[1]!r}") from None
    try:
        table = LabelTable.from_pairs(label_pairs) if label_pairs else DEFAULT_WHS_TABLE
    except ValueError as e:
        raise ConstraintParseError(str(e)) from None

    def resolve(lineno: int, name: str) -> int:
        try:
            return table.id_of(name)
        except KeyError as e:
            raise ConstraintParseError(f"line {lineno}: {e.args[0]}") from None

    constraints: list[Constraint] = []
    connectivity = Connectivity.VERTEX26
    include_bg = True
    for lineno, parts in rows:
        kw = parts[0]
        if kw == "label":
            continue
        if kw == "connectivity":
            if len(parts) != 2 or parts[1] not in ("6", "18", "26"):
                raise ConstraintParseError(f"line {lineno}: connectivity takes 6, 18 or 26")
            connectivity = Connectivity(int(parts[1]))
        elif kw == "background_in_y":
            if len(parts) != 2 or parts[1].lower() not in ("true", "false"):
                raise ConstraintParseError(f"line {lineno}: background_in_y takes true or false")
            include_bg = parts[1].lower() == "true"
        elif kw in ("contain", "exclude"):
            if len(parts) != 3:
                raise ConstraintParseError(f"line {lineno}: {kw} takes two class names")
            a, b = resolve(lineno, parts[1]), resolve(lineno, parts[2])
            try:
                c = contain(a, b) if kw == "contain" else exclude(a, b)
            except ValueError as e:
                raise ConstraintParseError(f"line {lineno}: {e}") from None
            if c in constraints:
                raise ConstraintParseError(f"line {lineno}: duplicate constraint {kw} {parts[1]} {parts[2]}")
            constraints.append(c)
        else:
            raise ConstraintParseError(f"line {lineno}: unknown directive {kw!r}")
    try:
        return ConstraintSpec(table, tuple(constraints), connectivity, include_bg)
    except ValueError as e:
        raise ConstraintParseError(str(e)) from None


def load_constraint_spec(path) -> ConstraintSpec:
    with open(path, "r", encoding="utf-8") as f:
        return parse_constraint_text(f.read())
