"""Scene-level rescoring and relabeling built on a trained scorer.

Rescoring replaces every detection confidence with the model's
probability-of-correct given the scene context. Relabeling additionally
reconsiders low-scoring detections: each one is rescored under its detector's
top-5 candidate labels, and is relabeled, kept, or removed depending on
whether any candidate clears the threshold.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import DataError
from .features import ClassVocabulary, Detection, build_feature_vector, feature_length
from .network import NetworkParams, score_batch

__all__ = [
    "SceneDetections",
    "RelabelRecord",
    "RelabelResult",
    "rescore_scene",
    "relabel_scene",
    "write_audit_log",
    "read_audit_log",
]

logger = logging.getLogger(__name__)

STATUS_KEPT = "kept"
STATUS_RELABELED = "relabeled"
STATUS_REMOVED = "removed"


@dataclass(frozen=True)
class SceneDetections:
    """All detections of one image, with the detector threshold they passed.

    ``threshold`` records the gate applied when the detections were loaded;
    rescored confidences may legitimately fall below it.
    """

    image_id: int
    threshold: float
    detections: tuple[Detection, ...]

    def __post_init__(self) -> None:
        for det in self.detections:
            if det.image_id != self.image_id:
                raise DataError(
                    f"scene {self.image_id} contains a detection from image "
                    f"{det.image_id}"
                )


@dataclass(frozen=True)
class RelabelRecord:
    """Audit entry for one input detection of a relabeled scene."""

    image_id: int
    box: tuple[float, float, float, float]
    original_label: int
    original_score: float
    rescored: float | None
    status: str
    final_label: int | None
    final_score: float | None
    candidates_tried: tuple[tuple[int, float], ...] = ()
    note: str | None = None

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "box": list(self.box),
            "original_label": self.original_label,
            "original_score": self.original_score,
            "rescored": self.rescored,
            "status": self.status,
            "final_label": self.final_label,
            "final_score": self.final_score,
            "candidates_tried": [[c, s] for c, s in self.candidates_tried],
            "note": self.note,
        }


@dataclass(frozen=True)
class RelabelResult:
    scene: SceneDetections
    records: tuple[RelabelRecord, ...]
    skipped: bool = False


def _require_scene_model(model: NetworkParams) -> tuple[ClassVocabulary, object]:
    if model.vocabulary is None or model.relation_config is None:
        raise DataError(
            "model carries no vocabulary/relation metadata; retrain or reload it "
            "from a document that includes them"
        )
    vocab = ClassVocabulary(model.vocabulary)
    expected = feature_length(model.relation_config, vocab.size)
    if expected != model.input_dim:
        raise DataError(
            f"model input dimension {model.input_dim} does not match its own "
            f"metadata (expected {expected})"
        )
    return vocab, model.relation_config


def _score_detections(
    model: NetworkParams, dets: Sequence[Detection]
) -> np.ndarray:
    """Model scores for each detection given all the others as context."""
    vocab, config = _require_scene_model(model)
    rows = []
    for i, det in enumerate(dets):
        others = list(dets[:i]) + list(dets[i + 1 :])
        rows.append(build_feature_vector(det, others, config, vocab))
    return score_batch(model, np.vstack(rows))


def rescore_scene(model: NetworkParams, scene: SceneDetections) -> SceneDetections:
    """Replace every confidence with the model's probability-of-correct.

    Scenes with fewer than two detections pass through unchanged (no pairwise
    context exists to score against).
    """
    _require_scene_model(model)
    if len(scene.detections) < 2:
        logger.info("image %s: skipped (mono-object)", scene.image_id)
        return scene
    scores = _score_detections(model, scene.detections)
    rescored = tuple(
        replace(det, confidence=float(s))
        for det, s in zip(scene.detections, scores)
    )
    return SceneDetections(
        image_id=scene.image_id, threshold=scene.threshold, detections=rescored
    )


def _candidate_labels(det: Detection) -> tuple[tuple[int, float], ...] | None:
    """Candidate (label, detector score) pairs for one low-scoring detection.

    Uses the stored top-5 list; the detection's own label is ensured present
    (at its detector confidence, as the incumbent). Returns None when no
    top-5 list was stored.
    """
    if not det.top5:
        return None
    candidates = list(det.top5)
    if all(c != det.class_id for c, _ in candidates):
        candidates.insert(0, (det.class_id, det.confidence))
    return tuple(candidates)


def relabel_scene(
    model: NetworkParams, scene: SceneDetections, t: float = 0.4
) -> RelabelResult:
    """Rescore, then reconsider the labels of detections scoring below ``t``.

    Candidates for a low scorer are its detector's top-5 labels, each scored
    by the model with every other detection frozen at its original label. The
    best candidate (ties to the lower class id) wins if it clears ``t``;
    otherwise the detection is removed. Surviving detections are rescored one
    final time under their final labels.
    """
    vocab, config = _require_scene_model(model)
    if not 0.0 <= t < 1.0:
        raise DataError(f"relabel threshold must be in [0, 1), got {t}")
    dets = scene.detections
    if len(dets) < 2:
        logger.info("image %s: skipped (mono-object)", scene.image_id)
        records = tuple(
            RelabelRecord(
                image_id=scene.image_id,
                box=(det.box.x, det.box.y, det.box.w, det.box.h),
                original_label=det.class_id,
                original_score=det.confidence,
                rescored=None,
                status=STATUS_KEPT,
                final_label=det.class_id,
                final_score=det.confidence,
                note="skipped (mono-object)",
            )
            for det in dets
        )
        return RelabelResult(scene=scene, records=records, skipped=True)

    rescored = _score_detections(model, dets)

    # decide each detection's fate; survivors carry the confidence that the
    # final rescoring pass will take as input
    survivors: list[Detection | None] = []
    outcome: list[dict] = []
    for i, det in enumerate(dets):
        s1 = float(rescored[i])
        if s1 >= t:
            survivors.append(replace(det, confidence=s1))
            outcome.append(
                {"status": STATUS_KEPT, "rescored": s1, "candidates": ()}
            )
            continue
        candidates = _candidate_labels(det)
        if candidates is None:
            survivors.append(None)
            outcome.append(
                {
                    "status": STATUS_REMOVED,
                    "rescored": s1,
                    "candidates": (),
                    "note": "top5 unavailable",
                }
            )
            continue
        others = list(dets[:i]) + list(dets[i + 1 :])
        rows = [
            build_feature_vector(
                replace(det, class_id=label, confidence=det_score, top5=None),
                others,
                config,
                vocab,
            )
            for label, det_score in candidates
        ]
        cand_scores = score_batch(model, np.vstack(rows))
        tried = tuple(
            (label, float(s)) for (label, _), s in zip(candidates, cand_scores)
        )
        best_label, best_score = min(
            tried, key=lambda pair: (-pair[1], pair[0])
        )
        if best_score > t:
            survivors.append(
                replace(det, class_id=best_label, confidence=best_score, top5=det.top5)
            )
            status = STATUS_KEPT if best_label == det.class_id else STATUS_RELABELED
            outcome.append(
                {"status": status, "rescored": s1, "candidates": tried}
            )
        else:
            survivors.append(None)
            outcome.append(
                {"status": STATUS_REMOVED, "rescored": s1, "candidates": tried}
            )

    final_dets = [det for det in survivors if det is not None]
    if len(final_dets) >= 2:
        final_scores = _score_detections(model, final_dets)
        final_dets = [
            replace(det, confidence=float(s))
            for det, s in zip(final_dets, final_scores)
        ]
    elif final_dets:
        logger.info(
            "image %s: final rescoring skipped (mono-object)", scene.image_id
        )

    records: list[RelabelRecord] = []
    survivor_iter = iter(final_dets)
    for det, out in zip(dets, outcome):
        if out["status"] == STATUS_REMOVED:
            final_label = final_score = None
        else:
            final = next(survivor_iter)
            final_label = final.class_id
            final_score = final.confidence
        records.append(
            RelabelRecord(
                image_id=scene.image_id,
                box=(det.box.x, det.box.y, det.box.w, det.box.h),
                original_label=det.class_id,
                original_score=det.confidence,
                rescored=out["rescored"],
                status=out["status"],
                final_label=final_label,
                final_score=final_score,
                candidates_tried=out["candidates"],
                note=out.get("note"),
            )
        )

    final_scene = SceneDetections(
        image_id=scene.image_id,
        threshold=scene.threshold,
        detections=tuple(final_dets),
    )
    return RelabelResult(scene=final_scene, records=tuple(records), skipped=False)


def write_audit_log(records: Sequence[RelabelRecord], path: str) -> None:
    """One JSON object per line, aligned with the input detection order."""
    with open(path, "w") as fh:
        for record in records:
            fh.write(json.dumps(record.to_dict(), separators=(",", ":")))
            fh.write("\n")


def read_audit_log(path: str) -> list[dict]:
    entries = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                entry = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: not valid JSON: {exc}") from None
            if "status" not in entry or "box" not in entry:
                raise DataError(f"{path}:{lineno}: not an audit record")
            entries.append(entry)
    return entries
