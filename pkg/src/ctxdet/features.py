"""Contextual feature vectors built from the detections of one image.

A feature vector describes one reference detection through the relations it
holds with the image's detections, aggregated per class: the vector has one
block of relation bits per vocabulary class (OR-aggregated over the objects
carrying that class label) plus a trailing slot for the reference detection's
confidence.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError
from .geometry import BBox, RelationConfig, relation_bits

__all__ = [
    "ClassVocabulary",
    "Detection",
    "GroundTruth",
    "CoocMatrix",
    "build_cooccurrence",
    "save_cooccurrence_csv",
    "load_cooccurrence_csv",
    "feature_length",
    "build_feature_vector",
    "build_training_set",
    "save_feature_csv",
    "load_feature_csv",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClassVocabulary:
    """Ordered class names with optional external ids (e.g. dataset category ids)."""

    names: tuple[str, ...]
    source_ids: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if not self.names:
            raise DataError("vocabulary must contain at least one class")
        if len(set(self.names)) != len(self.names):
            raise DataError("vocabulary names must be unique")
        if self.source_ids is not None:
            if len(self.source_ids) != len(self.names):
                raise DataError("source_ids must parallel names")
            if len(set(self.source_ids)) != len(self.source_ids):
                raise DataError("source_ids must be unique")

    @property
    def size(self) -> int:
        return len(self.names)

    def index_of_source(self, source_id: int) -> int:
        try:
            return self._source_index()[source_id]
        except KeyError:
            raise DataError(f"unknown category id {source_id}") from None

    def source_of(self, index: int) -> int:
        if self.source_ids is None:
            return index
        return self.source_ids[index]

    def _source_index(self) -> dict[int, int]:
        ids = self.source_ids if self.source_ids is not None else range(self.size)
        return {sid: i for i, sid in enumerate(ids)}


@dataclass(frozen=True)
class Detection:
    """One detector output: a labeled, scored box within an image.

    ``top5`` optionally carries the detector's top class scores for this box,
    as (class_id, score) pairs in non-increasing score order.
    """

    image_id: int
    class_id: int
    box: BBox
    confidence: float
    top5: tuple[tuple[int, float], ...] | None = None

    def __post_init__(self) -> None:
        if self.class_id < 0:
            raise DataError(f"class_id must be >= 0, got {self.class_id}")
        if not 0.0 <= self.confidence <= 1.0:
            raise DataError(f"confidence must be in [0, 1], got {self.confidence}")
        if self.top5 is not None:
            if len(self.top5) > 5:
                raise DataError(f"top5 holds at most 5 entries, got {len(self.top5)}")
            scores = [s for _, s in self.top5]
            if any(not 0.0 <= s <= 1.0 for s in scores):
                raise DataError(f"top5 scores must be in [0, 1], got {scores}")
            if any(scores[i] < scores[i + 1] for i in range(len(scores) - 1)):
                raise DataError(f"top5 scores must be non-increasing, got {scores}")
            if any(c < 0 for c, _ in self.top5):
                raise DataError("top5 class ids must be >= 0")


@dataclass(frozen=True)
class GroundTruth:
    """One annotated box within an image."""

    image_id: int
    class_id: int
    box: BBox

    def __post_init__(self) -> None:
        if self.class_id < 0:
            raise DataError(f"class_id must be >= 0, got {self.class_id}")


@dataclass(frozen=True)
class CoocMatrix:
    """Class co-occurrence statistics over a set of images.

    ``values[i][j]`` is the fraction of images containing class i that also
    contain class j (0 where class i never appears); ``image_counts[i]`` is
    the number of images containing class i.
    """

    values: np.ndarray
    image_counts: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self) -> None:
        n = len(self.names)
        if self.values.shape != (n, n):
            raise DataError(
                f"co-occurrence matrix must be {n}x{n}, got {self.values.shape}"
            )
        if self.image_counts.shape != (n,):
            raise DataError("image_counts must have one entry per class")


def build_cooccurrence(
    per_image_classes: Iterable[Iterable[int]], vocab: ClassVocabulary
) -> CoocMatrix:
    """Count, per ordered class pair, the images containing both classes."""
    n = vocab.size
    counts = np.zeros((n, n), dtype=np.int64)
    for image_index, classes in enumerate(per_image_classes):
        present = sorted(set(classes))
        for c in present:
            if not 0 <= c < n:
                raise DataError(
                    f"image #{image_index} references class id {c} outside "
                    f"vocabulary of size {n}"
                )
        for i in present:
            for j in present:
                counts[i, j] += 1
    image_counts = np.diag(counts).copy()
    values = np.zeros((n, n), dtype=float)
    nonzero = image_counts > 0
    values[nonzero] = counts[nonzero] / image_counts[nonzero, None]
    return CoocMatrix(values=values, image_counts=image_counts, names=vocab.names)


def save_cooccurrence_csv(matrix: CoocMatrix, path: str) -> None:
    """Write the matrix as CSV with a class-name header row and column."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", *matrix.names])
        for i, name in enumerate(matrix.names):
            writer.writerow([name, *[f"{v:.6f}" for v in matrix.values[i]]])


def load_cooccurrence_csv(path: str) -> CoocMatrix:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:1] != ["class"]:
        raise DataError(f"{path}: not a co-occurrence CSV (missing header)")
    names = tuple(rows[0][1:])
    n = len(names)
    if len(rows) != n + 1:
        raise DataError(f"{path}: expected {n} data rows, got {len(rows) - 1}")
    values = np.zeros((n, n), dtype=float)
    for i, row in enumerate(rows[1:]):
        if len(row) != n + 1 or row[0] != names[i]:
            raise DataError(f"{path}: malformed row {i + 1}")
        values[i] = [float(v) for v in row[1:]]
    # image counts are not stored in the CSV; mark them unknown
    return CoocMatrix(values=values, image_counts=np.full(n, -1), names=names)


def feature_length(config: RelationConfig, vocab_size: int) -> int:
    """Length of one feature vector: per-class blocks plus the confidence slot."""
    if vocab_size < 1:
        raise DataError(f"vocabulary size must be >= 1, got {vocab_size}")
    return vocab_size * config.features_per_class() + 1


def build_feature_vector(
    ref: Detection,
    others: Sequence[Detection],
    config: RelationConfig,
    vocab: ClassVocabulary,
) -> np.ndarray:
    """Feature vector for ``ref`` against the other detections of its image.

    Relation bits are OR-aggregated into the class block of each object's
    label. The reference detection itself always contributes its self-relation
    signature (co-occurring, overlapping, equal scale, near) to its own class
    block, so the vector encodes the reference label; relabeling relies on
    scoring the same box under different labels.
    """
    width = config.features_per_class()
    names = config.active_feature_names()
    vec = np.zeros(feature_length(config, vocab.size), dtype=float)
    for det in (ref, *others):
        if det.image_id != ref.image_id:
            raise DataError(
                f"detection from image {det.image_id} mixed into image {ref.image_id}"
            )
        if not 0 <= det.class_id < vocab.size:
            raise DataError(
                f"class id {det.class_id} outside vocabulary of size {vocab.size}"
            )
        bits = relation_bits(ref.box, det.box, config)
        base = det.class_id * width
        for k, value in enumerate(bits.values(names)):
            if value:
                vec[base + k] = 1.0
    vec[-1] = ref.confidence
    return vec


def build_training_set(
    dets_by_image: Mapping[int, Sequence[Detection]],
    gt_by_image: Mapping[int, Sequence[GroundTruth]],
    config: RelationConfig,
    vocab: ClassVocabulary,
    iou_threshold: float = 0.5,
) -> tuple[np.ndarray, np.ndarray]:
    """Assemble (X, y): one feature row per detection, correctness as label.

    A detection is correct (label 1) when it matches a same-class ground-truth
    box at IoU >= ``iou_threshold`` under greedy confidence-ordered matching.
    Images with fewer than two detections contribute no rows (their vectors
    would carry no pairwise context).
    """
    from .metrics import match_detections  # local import to avoid module cycle

    missing = sorted(i for i in dets_by_image if i not in gt_by_image)
    if missing:
        raise DataError(f"detections reference images without annotations: {missing}")
    rows: list[np.ndarray] = []
    labels: list[int] = []
    for image_id in sorted(dets_by_image):
        dets = list(dets_by_image[image_id])
        if len(dets) < 2:
            continue
        result = match_detections(dets, gt_by_image[image_id], iou_threshold)
        for i, det in enumerate(dets):
            others = dets[:i] + dets[i + 1 :]
            rows.append(build_feature_vector(det, others, config, vocab))
            labels.append(int(result.det_correct[i]))
    if not rows:
        raise DataError("no training rows: every image has fewer than two detections")
    return np.vstack(rows), np.array(labels, dtype=np.int64)


def save_feature_csv(features: np.ndarray, labels: np.ndarray, path: str) -> None:
    """Write feature rows as CSV: header f0..f{N-1},label."""
    if features.ndim != 2 or len(features) != len(labels):
        raise DataError("features and labels must be parallel 2d/1d arrays")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{i}" for i in range(features.shape[1])] + ["label"])
        for row, label in zip(features, labels):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])


def load_feature_csv(path: str) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty feature CSV") from None
        n = len(header) - 1
        if header != [f"f{i}" for i in range(n)] + ["label"]:
            raise DataError(f"{path}: unexpected feature CSV header")
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != n + 1:
                raise DataError(f"{path}:{lineno}: expected {n + 1} fields")
            rows.append([float(v) for v in row[:n]])
            labels.append(int(row[n]))
    if not rows:
        raise DataError(f"{path}: feature CSV has no data rows")
    return np.array(rows, dtype=float), np.array(labels, dtype=np.int64)
