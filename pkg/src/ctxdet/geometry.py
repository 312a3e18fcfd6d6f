"""Axis-aligned box arithmetic and pairwise contextual relation predicates.

Boxes are (x, y, w, h) in pixel coordinates with the origin at the top-left
corner and y growing downward, so "above" means smaller y. All relations are
evaluated for an ordered (reference, object) pair and are generally not
symmetric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "BBox",
    "RelationBits",
    "RelationConfig",
    "FAMILY_FEATURES",
    "FAMILY_ORDER",
    "OVERLAP_IOU_THRESHOLD",
    "OVERLAP_ANY_POSITIVE",
    "CENTRAL_LITERAL",
    "CENTRAL_MIDPOINT",
    "iou",
    "boundary_relations",
    "central_relations",
    "overlap_relation",
    "scale_relation",
    "distance_relation",
    "relation_bits",
]


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box: top-left corner plus positive width and height."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "w", "h"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"box {name} must be finite, got {value!r}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(
                f"box must have positive extent, got w={self.w}, h={self.h}"
            )

    @property
    def right(self) -> float:
        return self.x + self.w

    @property
    def bottom(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def diagonal(self) -> float:
        return math.hypot(self.w, self.h)

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]


# Relation families in canonical per-class layout order, each mapped to the
# bit slots it contributes. This order defines feature vector layout and must
# not change once models are serialized.
FAMILY_FEATURES: dict[str, tuple[str, ...]] = {
    "cooccurrence": ("cooccur",),
    "overlapping": ("overlap_yes", "overlap_no"),
    "scale": ("larger", "smaller", "equal"),
    "boundary": ("b_above", "b_below", "b_left", "b_right"),
    "central": ("c_above", "c_below", "c_left", "c_right"),
    "nearfar": ("near", "far"),
}
FAMILY_ORDER: tuple[str, ...] = tuple(FAMILY_FEATURES)

OVERLAP_IOU_THRESHOLD = "iou_threshold"
OVERLAP_ANY_POSITIVE = "any_positive"
CENTRAL_LITERAL = "literal"
CENTRAL_MIDPOINT = "midpoint"


@dataclass(frozen=True)
class RelationConfig:
    """Which relation families are active, plus the predicate knobs.

    ``central_form`` selects between the half-sum comparison ``(y + h) * 0.5``
    (``"literal"``, the default) and the geometric midpoint ``y + h / 2``
    (``"midpoint"``); the directional guards are the same in both forms.
    """

    cooccurrence: bool = True
    overlapping: bool = True
    scale: bool = True
    boundary: bool = True
    central: bool = True
    nearfar: bool = True
    eps_scale: float = 0.05
    overlap_mode: str = OVERLAP_IOU_THRESHOLD
    overlap_threshold: float = 0.5
    central_form: str = CENTRAL_LITERAL

    def __post_init__(self) -> None:
        if not any(getattr(self, family) for family in FAMILY_ORDER):
            raise ValueError("at least one relation family must be active")
        if self.eps_scale < 0:
            raise ValueError(f"eps_scale must be >= 0, got {self.eps_scale}")
        if not 0.0 <= self.overlap_threshold <= 1.0:
            raise ValueError(
                f"overlap_threshold must be in [0, 1], got {self.overlap_threshold}"
            )
        if self.overlap_mode not in (OVERLAP_IOU_THRESHOLD, OVERLAP_ANY_POSITIVE):
            raise ValueError(f"unknown overlap_mode {self.overlap_mode!r}")
        if self.central_form not in (CENTRAL_LITERAL, CENTRAL_MIDPOINT):
            raise ValueError(f"unknown central_form {self.central_form!r}")

    def active_families(self) -> tuple[str, ...]:
        return tuple(f for f in FAMILY_ORDER if getattr(self, f))

    def active_feature_names(self) -> tuple[str, ...]:
        return tuple(
            name for family in self.active_families() for name in FAMILY_FEATURES[family]
        )

    def features_per_class(self) -> int:
        return len(self.active_feature_names())

    def to_dict(self) -> dict:
        return {
            "cooccurrence": self.cooccurrence,
            "overlapping": self.overlapping,
            "scale": self.scale,
            "boundary": self.boundary,
            "central": self.central,
            "nearfar": self.nearfar,
            "eps_scale": self.eps_scale,
            "overlap_mode": self.overlap_mode,
            "overlap_threshold": self.overlap_threshold,
            "central_form": self.central_form,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RelationConfig":
        unknown = set(data) - {f.name for f in cls.__dataclass_fields__.values()}
        if unknown:
            raise ValueError(f"unknown relation config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class RelationBits:
    """The 16 relation indicator bits for one ordered (reference, object) pair.

    Inactive families leave their bits at 0.
    """

    cooccur: int = 0
    overlap_yes: int = 0
    overlap_no: int = 0
    larger: int = 0
    smaller: int = 0
    equal: int = 0
    b_above: int = 0
    b_below: int = 0
    b_left: int = 0
    b_right: int = 0
    c_above: int = 0
    c_below: int = 0
    c_left: int = 0
    c_right: int = 0
    near: int = 0
    far: int = 0

    def values(self, names: tuple[str, ...]) -> tuple[int, ...]:
        return tuple(getattr(self, name) for name in names)

    def as_dict(self) -> dict[str, int]:
        return {
            name: getattr(self, name)
            for family in FAMILY_ORDER
            for name in FAMILY_FEATURES[family]
        }


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; in [0, 1]."""
    ix = min(a.right, b.right) - max(a.x, b.x)
    iy = min(a.bottom, b.bottom) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def boundary_relations(ref: BBox, obj: BBox) -> tuple[int, int, int, int]:
    """Strict edge-separation relations (above, below, left, right) of ref vs obj."""
    above = ref.bottom < obj.y
    below = ref.y > obj.bottom
    left = ref.right < obj.x
    right = ref.x > obj.right
    return int(above), int(below), int(left), int(right)


def central_relations(
    ref: BBox, obj: BBox, form: str = CENTRAL_LITERAL
) -> tuple[int, int, int, int]:
    """Midline-order relations (above, below, left, right) of ref vs obj.

    Each direction pairs a comparison of half-quantities with a directional
    guard on the leading or trailing edge.
    """
    if form == CENTRAL_LITERAL:
        ref_v = (ref.y + ref.h) * 0.5
        obj_v = (obj.y + obj.h) * 0.5
        ref_u = (ref.x + ref.w) * 0.5
        obj_u = (obj.x + obj.w) * 0.5
    elif form == CENTRAL_MIDPOINT:
        ref_v = ref.y + ref.h * 0.5
        obj_v = obj.y + obj.h * 0.5
        ref_u = ref.x + ref.w * 0.5
        obj_u = obj.x + obj.w * 0.5
    else:
        raise ValueError(f"unknown central form {form!r}")
    above = ref_v < obj_v and ref.y < obj.y
    below = ref_v > obj_v and ref.bottom > obj.bottom
    left = ref_u < obj_u and ref.x < obj.x
    right = ref_u > obj_u and ref.right > obj.right
    return int(above), int(below), int(left), int(right)


def overlap_relation(
    ref: BBox,
    obj: BBox,
    mode: str = OVERLAP_IOU_THRESHOLD,
    threshold: float = 0.5,
) -> str:
    """Classify the pair as ``"yes"`` or ``"no"`` overlap."""
    value = iou(ref, obj)
    if mode == OVERLAP_IOU_THRESHOLD:
        return "yes" if value >= threshold else "no"
    if mode == OVERLAP_ANY_POSITIVE:
        return "yes" if value > 0.0 else "no"
    raise ValueError(f"unknown overlap mode {mode!r}")


def scale_relation(ref: BBox, obj: BBox, eps: float = 0.05) -> str:
    """Compare box diagonals: ``"larger"``, ``"smaller"``, or ``"equal"``.

    Diagonals within ``eps`` (relative to the larger one) count as equal.
    """
    d_ref = ref.diagonal
    d_obj = obj.diagonal
    if abs(d_ref - d_obj) <= eps * max(d_ref, d_obj):
        return "equal"
    return "larger" if d_ref > d_obj else "smaller"


def distance_relation(ref: BBox, obj: BBox) -> str:
    """Classify the pair as ``"near"`` or ``"far"``.

    The gap ``ref.x - (obj.x + obj.w)`` is compared against the reference
    diagonal, exactly in this asymmetric x-axis form; a gap equal to the
    diagonal counts as near.
    """
    gap = ref.x - obj.right
    return "near" if gap <= ref.diagonal else "far"


def relation_bits(ref: BBox, obj: BBox, config: RelationConfig) -> RelationBits:
    """Evaluate every active relation family for the ordered (ref, obj) pair."""
    bits: dict[str, int] = {}
    if config.cooccurrence:
        bits["cooccur"] = 1
    if config.overlapping:
        kind = overlap_relation(
            ref, obj, mode=config.overlap_mode, threshold=config.overlap_threshold
        )
        bits["overlap_yes" if kind == "yes" else "overlap_no"] = 1
    if config.scale:
        bits[scale_relation(ref, obj, eps=config.eps_scale)] = 1
    if config.boundary:
        above, below, left, right = boundary_relations(ref, obj)
        bits.update(b_above=above, b_below=below, b_left=left, b_right=right)
    if config.central:
        above, below, left, right = central_relations(ref, obj, form=config.central_form)
        bits.update(c_above=above, c_below=below, c_left=left, c_right=right)
    if config.nearfar:
        bits[distance_relation(ref, obj)] = 1
    return RelationBits(**bits)
