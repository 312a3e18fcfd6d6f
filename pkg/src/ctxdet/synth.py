"""Synthetic detection scenes with planted contextual rules.

Each rule says: a detection of ``subject_class`` is only plausible when some
object of ``object_class`` stands in the ``required`` relations to it. The
generator plants a rule-satisfying companion next to every subject, then
mislabels a controllable fraction of subject detections as a *different*
subject class whose own pattern is absent around the box. Correctness of a
subject detection is therefore exactly "its label's pattern is present",
which a context-based scorer can learn, while detector confidences alone
separate the two populations only weakly.

Detections copy their ground-truth boxes, so a detection is correct if and
only if its label matches the underlying object.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .coco_io import DatasetBundle
from .errors import DataError
from .features import ClassVocabulary, Detection, GroundTruth
from .geometry import BBox, FAMILY_FEATURES, RelationConfig, relation_bits

__all__ = ["SynthRule", "SynthSpec", "default_rules", "generate"]

logger = logging.getLogger(__name__)

_ALL_FEATURE_NAMES = frozenset(
    name for names in FAMILY_FEATURES.values() for name in names
)
_PLACEMENT_ATTEMPTS = 200


@dataclass(frozen=True)
class SynthRule:
    """Contextual plausibility rule for one subject class.

    ``required`` lists relation feature names (evaluated with the subject as
    reference) that some ``object_class`` object must jointly set.
    """

    subject_class: int
    required: tuple[str, ...]
    object_class: int

    def __post_init__(self) -> None:
        if not self.required:
            raise DataError("rule needs at least one required relation")
        unknown = set(self.required) - _ALL_FEATURE_NAMES
        if unknown:
            raise DataError(f"unknown relation feature names: {sorted(unknown)}")
        if self.subject_class < 0 or self.object_class < 0:
            raise DataError("rule class ids must be >= 0")
        if self.subject_class == self.object_class:
            raise DataError("rule subject and object class must differ")


def default_rules() -> tuple[SynthRule, ...]:
    """Three rules over a six-class world (subjects 0..2, context 3..5)."""
    return (
        SynthRule(subject_class=0, required=("b_below", "smaller"), object_class=3),
        SynthRule(subject_class=1, required=("b_above", "larger"), object_class=4),
        SynthRule(subject_class=2, required=("overlap_yes",), object_class=5),
    )


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of one synthetic dataset."""

    classes: int = 6
    images: int = 100
    objects_per_image: tuple[int, int] = (2, 3)
    rules: tuple[SynthRule, ...] = field(default_factory=default_rules)
    violation_rate: float = 0.5
    label_noise: float = 0.0
    extra_objects: tuple[int, int] = (1, 2)
    canvas: tuple[int, int] = (960, 720)
    relations: RelationConfig = field(default_factory=RelationConfig)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.classes < 2:
            raise DataError(f"need at least 2 classes, got {self.classes}")
        if self.images < 1:
            raise DataError(f"need at least 1 image, got {self.images}")
        lo, hi = self.objects_per_image
        if not 1 <= lo <= hi:
            raise DataError(f"bad objects_per_image range ({lo}, {hi})")
        elo, ehi = self.extra_objects
        if not 0 <= elo <= ehi:
            raise DataError(f"bad extra_objects range ({elo}, {ehi})")
        if not 0.0 <= self.violation_rate <= 1.0:
            raise DataError(f"violation_rate must be in [0, 1], got {self.violation_rate}")
        if not 0.0 <= self.label_noise <= 1.0:
            raise DataError(f"label_noise must be in [0, 1], got {self.label_noise}")
        if self.canvas[0] < 100 or self.canvas[1] < 100:
            raise DataError(f"canvas must be at least 100x100, got {self.canvas}")
        subjects = set()
        for rule in self.rules:
            for cid, role in ((rule.subject_class, "subject"), (rule.object_class, "object")):
                if cid >= self.classes:
                    raise DataError(
                        f"rule references {role} class id {cid} outside "
                        f"vocabulary of {self.classes} classes"
                    )
            if rule.subject_class in subjects:
                raise DataError(
                    f"duplicate rule for subject class {rule.subject_class}"
                )
            subjects.add(rule.subject_class)
        for rule in self.rules:
            # flips only ever assign subject-class labels, so requiring object
            # classes to be non-subjects keeps every rule pattern evaluable on
            # ground-truth placements even after mislabeling
            if rule.object_class in subjects:
                raise DataError(
                    f"rule object class {rule.object_class} is itself rule-bearing"
                )
        active = set(self.relations.active_feature_names())
        for rule in self.rules:
            inactive = set(rule.required) - active
            if inactive:
                raise DataError(
                    f"rule requires relations inactive in the config: {sorted(inactive)}"
                )


def _place_satisfying(
    rng: np.random.Generator, ref: BBox, required: tuple[str, ...], config: RelationConfig
) -> BBox:
    """A box standing in all ``required`` relations to ``ref`` (verified)."""
    req = set(required)
    for _ in range(_PLACEMENT_ATTEMPTS):
        if "larger" in req:  # reference larger: companion scaled down
            f = rng.uniform(0.4, 0.6)
        elif "smaller" in req:
            f = rng.uniform(1.6, 2.0)
        elif "equal" in req:
            f = 1.0
        else:
            f = rng.uniform(0.7, 1.4)
        w = ref.w * f
        h = ref.h * f
        gap = rng.uniform(6.0, 28.0)
        x = ref.right + gap
        y = ref.y + rng.uniform(-10.0, 10.0)
        if "b_above" in req:
            x = ref.x + rng.uniform(-15.0, 15.0)
            y = ref.bottom + gap
        if "b_below" in req:
            x = ref.x + rng.uniform(-15.0, 15.0)
            y = ref.y - gap - h
        if "b_left" in req:
            x = ref.right + gap
            y = ref.y + rng.uniform(-10.0, 10.0)
        if "b_right" in req:
            x = ref.x - gap - w
            y = ref.y + rng.uniform(-10.0, 10.0)
        if "c_above" in req:
            y = ref.y + rng.uniform(0.3, 0.8) * ref.h
        if "c_below" in req:
            y = ref.y - rng.uniform(0.3, 0.8) * h
        if "c_left" in req:
            x = ref.x + rng.uniform(0.3, 0.8) * ref.w
        if "c_right" in req:
            x = ref.x - rng.uniform(0.3, 0.8) * w
        if "overlap_yes" in req:
            x = ref.x + rng.uniform(-0.08, 0.08) * ref.w
            y = ref.y + rng.uniform(-0.08, 0.08) * ref.h
        if "far" in req:
            x = ref.x - ref.diagonal - w - rng.uniform(10.0, 60.0)
            y = ref.y + rng.uniform(-20.0, 20.0)
        box = BBox(x, y, w, h)
        bits = relation_bits(ref, box, config)
        if all(getattr(bits, name) for name in required):
            return box
    raise DataError(
        f"could not place an object satisfying {sorted(required)} "
        f"after {_PLACEMENT_ATTEMPTS} attempts (conflicting requirements?)"
    )


def _pattern_present(
    box: BBox,
    rule: SynthRule,
    objects: Sequence[tuple[int, BBox]],
    config: RelationConfig,
) -> bool:
    """Whether the rule's required bits are set in the aggregated class block.

    Aggregation mirrors feature construction: each required bit needs *some*
    object of the rule's object class to set it.
    """
    remaining = set(rule.required)
    for class_id, other in objects:
        if class_id != rule.object_class or not remaining:
            continue
        bits = relation_bits(box, other, config)
        remaining -= {name for name in remaining if getattr(bits, name)}
    return not remaining


def generate(spec: SynthSpec) -> DatasetBundle:
    """Generate a dataset bundle; deterministic for a fixed spec."""
    rng = np.random.default_rng(spec.seed)
    vocab = ClassVocabulary(
        names=tuple(f"class_{i:02d}" for i in range(spec.classes)),
        source_ids=tuple(range(1, spec.classes + 1)),
    )
    rules_by_subject = {rule.subject_class: rule for rule in spec.rules}
    subject_classes = sorted(rules_by_subject)
    filler_pool = [c for c in range(spec.classes) if c not in rules_by_subject]
    if not filler_pool:
        filler_pool = list(range(spec.classes))
    canvas_w, canvas_h = spec.canvas

    images: dict[int, dict] = {}
    gt_by_image: dict[int, list[GroundTruth]] = {}
    dets_by_image: dict[int, list[Detection]] = {}
    n_dets = n_flipped = n_noise = 0

    for index in range(spec.images):
        image_id = index + 1
        objects: list[tuple[int, BBox]] = []
        subject_indices: list[int] = []
        n_subjects = int(rng.integers(spec.objects_per_image[0], spec.objects_per_image[1] + 1))
        for _ in range(n_subjects):
            if subject_classes:
                c = subject_classes[int(rng.integers(len(subject_classes)))]
            else:
                c = int(rng.integers(spec.classes))
            box = BBox(
                x=rng.uniform(0.25 * canvas_w, 0.62 * canvas_w),
                y=rng.uniform(0.36 * canvas_h, 0.58 * canvas_h),
                w=rng.uniform(40.0, 110.0),
                h=rng.uniform(40.0, 110.0),
            )
            subject_indices.append(len(objects))
            objects.append((c, box))
            rule = rules_by_subject.get(c)
            if rule is not None:
                companion = _place_satisfying(rng, box, rule.required, spec.relations)
                objects.append((rule.object_class, companion))
        n_fillers = int(rng.integers(spec.extra_objects[0], spec.extra_objects[1] + 1))
        for _ in range(n_fillers):
            c = filler_pool[int(rng.integers(len(filler_pool)))]
            box = BBox(
                x=rng.uniform(20.0, canvas_w - 130.0),
                y=rng.uniform(20.0, canvas_h - 130.0),
                w=rng.uniform(30.0, 100.0),
                h=rng.uniform(30.0, 100.0),
            )
            objects.append((c, box))

        images[image_id] = {"width": canvas_w, "height": canvas_h}
        gt_by_image[image_id] = [
            GroundTruth(image_id=image_id, class_id=c, box=box) for c, box in objects
        ]
        dets: list[Detection] = []
        subject_set = set(subject_indices)
        for i, (c, box) in enumerate(objects):
            label = c
            confidence = rng.uniform(0.5, 1.0)
            top5: tuple[tuple[int, float], ...] = ((c, confidence),)
            if i in subject_set and rules_by_subject and rng.random() < spec.violation_rate:
                wrong_options = [
                    w
                    for w in subject_classes
                    if w != c
                    and not _pattern_present(box, rules_by_subject[w], objects, spec.relations)
                ]
                if wrong_options:
                    label = wrong_options[int(rng.integers(len(wrong_options)))]
                    confidence = rng.uniform(0.4, 0.9)
                    runner_up = confidence * rng.uniform(0.6, 0.95)
                    top5 = ((label, confidence), (c, runner_up))
                    n_flipped += 1
            if label == c and spec.label_noise > 0 and rng.random() < spec.label_noise:
                label = int((c + 1 + rng.integers(spec.classes - 1)) % spec.classes)
                runner_up = confidence * rng.uniform(0.6, 0.95)
                top5 = ((label, confidence), (c, runner_up))
                n_noise += 1
            dets.append(
                Detection(
                    image_id=image_id,
                    class_id=label,
                    box=box,
                    confidence=float(confidence),
                    top5=top5,
                )
            )
            n_dets += 1
        dets_by_image[image_id] = dets

    all_correct = n_flipped == 0 and n_noise == 0
    if all_correct:
        logger.warning(
            "generated dataset has no mislabeled detections; correctness "
            "labels are single-class and unusable for training"
        )
    meta = {
        "seed": spec.seed,
        "detections": n_dets,
        "planted_mislabels": n_flipped,
        "noise_mislabels": n_noise,
        "all_correct": all_correct,
        "detector_threshold": 0.0,
    }
    logger.info(
        "generated %d images, %d detections (%d planted mislabels, %d noise)",
        spec.images,
        n_dets,
        n_flipped,
        n_noise,
    )
    return DatasetBundle(
        vocab=vocab,
        images=images,
        gt_by_image=gt_by_image,
        dets_by_image=dets_by_image,
        meta=meta,
    )
