"""Reading and writing the COCO-style annotation and detection formats.

Annotations are a JSON object with ``images``, ``annotations`` (boxes as
[x, y, w, h]) and ``categories``; detections are a JSON list of result
records, optionally carrying a ``top_scores`` list of [category_id, score]
pairs in non-increasing score order. Category ids may be arbitrary unique
integers; they are mapped onto a dense 0-based vocabulary internally and
mapped back on write.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .errors import DataError, ParseError
from .features import ClassVocabulary, Detection, GroundTruth
from .geometry import BBox
from .pipelines import SceneDetections

__all__ = [
    "DatasetBundle",
    "parse_annotations",
    "load_annotations",
    "parse_detections",
    "load_detections",
    "annotations_to_dict",
    "detections_to_dict",
    "save_annotations",
    "save_detections",
]

logger = logging.getLogger(__name__)


@dataclass
class DatasetBundle:
    """One dataset: vocabulary, per-image ground truth, per-image detections."""

    vocab: ClassVocabulary
    images: dict[int, dict]
    gt_by_image: dict[int, list[GroundTruth]]
    dets_by_image: dict[int, list[Detection]] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def scenes(self, threshold: float = 0.0) -> list[SceneDetections]:
        """The detections grouped into per-image scenes, sorted by image id."""
        return [
            SceneDetections(
                image_id=image_id,
                threshold=threshold,
                detections=tuple(self.dets_by_image.get(image_id, [])),
            )
            for image_id in sorted(self.images)
        ]


def _bbox_from_record(bbox: object, where: str) -> BBox:
    if not isinstance(bbox, (list, tuple)) or len(bbox) != 4:
        raise ParseError(f"{where}: bbox must be [x, y, w, h], got {bbox!r}")
    try:
        return BBox(*(float(v) for v in bbox))
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{where}: {exc}") from None


def parse_annotations(doc: object) -> DatasetBundle:
    """Build a bundle from an annotations document (already-parsed JSON)."""
    if not isinstance(doc, dict):
        raise ParseError("annotations must be a JSON object")
    for key in ("images", "annotations", "categories"):
        if key not in doc:
            raise ParseError(f"annotations missing required key {key!r}")

    categories = doc["categories"]
    if not isinstance(categories, list) or not categories:
        raise ParseError("categories must be a non-empty list")
    by_id: dict[int, str] = {}
    for i, cat in enumerate(categories):
        if not isinstance(cat, dict) or "id" not in cat or "name" not in cat:
            raise ParseError(f"category #{i}: needs id and name")
        cid = cat["id"]
        if cid in by_id:
            raise ParseError(f"category #{i}: duplicate id {cid}")
        by_id[cid] = str(cat["name"])
    source_ids = tuple(sorted(by_id))
    vocab = ClassVocabulary(
        names=tuple(by_id[cid] for cid in source_ids), source_ids=source_ids
    )

    images: dict[int, dict] = {}
    for i, img in enumerate(doc["images"]):
        if not isinstance(img, dict) or "id" not in img:
            raise ParseError(f"image #{i}: needs an id")
        image_id = img["id"]
        if image_id in images:
            raise ParseError(f"image #{i}: duplicate id {image_id}")
        images[image_id] = {
            "width": img.get("width"),
            "height": img.get("height"),
        }

    gt_by_image: dict[int, list[GroundTruth]] = {image_id: [] for image_id in images}
    for i, ann in enumerate(doc["annotations"]):
        where = f"annotation #{i}" + (f" (id {ann.get('id')})" if isinstance(ann, dict) and "id" in ann else "")
        if not isinstance(ann, dict):
            raise ParseError(f"{where}: must be an object")
        for key in ("image_id", "category_id", "bbox"):
            if key not in ann:
                raise ParseError(f"{where}: missing {key!r}")
        if ann["image_id"] not in images:
            raise ParseError(f"{where}: unknown image_id {ann['image_id']}")
        box = _bbox_from_record(ann["bbox"], where)
        try:
            class_id = vocab.index_of_source(ann["category_id"])
        except DataError:
            raise ParseError(
                f"{where}: unknown category_id {ann['category_id']}"
            ) from None
        gt_by_image[ann["image_id"]].append(
            GroundTruth(image_id=ann["image_id"], class_id=class_id, box=box)
        )

    return DatasetBundle(
        vocab=vocab,
        images=images,
        gt_by_image=gt_by_image,
        meta={"n_images": len(images)},
    )


def load_annotations(path: str) -> DatasetBundle:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: not valid JSON: {exc}") from None
    return parse_annotations(doc)


def parse_detections(
    doc: object, bundle: DatasetBundle, threshold: float = 0.0
) -> DatasetBundle:
    """Attach a detections document to the bundle, gating on ``threshold``.

    Records scoring below ``threshold`` are dropped (logged, not an error).
    """
    if not isinstance(doc, list):
        raise ParseError("detections must be a JSON list of result records")
    if not 0.0 <= threshold <= 1.0:
        raise DataError(f"detector threshold must be in [0, 1], got {threshold}")
    dets_by_image: dict[int, list[Detection]] = {}
    dropped = 0
    for i, rec in enumerate(doc):
        where = f"detection #{i}"
        if not isinstance(rec, dict):
            raise ParseError(f"{where}: must be an object")
        for key in ("image_id", "category_id", "bbox", "score"):
            if key not in rec:
                raise ParseError(f"{where}: missing {key!r}")
        image_id = rec["image_id"]
        if image_id not in bundle.images:
            raise ParseError(f"{where}: unknown image_id {image_id}")
        box = _bbox_from_record(rec["bbox"], where)
        try:
            class_id = bundle.vocab.index_of_source(rec["category_id"])
        except DataError:
            raise ParseError(
                f"{where}: unknown category_id {rec['category_id']}"
            ) from None
        score = rec["score"]
        if not isinstance(score, (int, float)) or not 0.0 <= score <= 1.0:
            raise ParseError(f"{where}: score must be in [0, 1], got {score!r}")
        top5 = None
        if rec.get("top_scores") is not None:
            raw = rec["top_scores"]
            if not isinstance(raw, list):
                raise ParseError(f"{where}: top_scores must be a list")
            mapped = []
            for entry in raw:
                if not isinstance(entry, (list, tuple)) or len(entry) != 2:
                    raise ParseError(
                        f"{where}: top_scores entries must be [category_id, score]"
                    )
                cat, s = entry
                try:
                    mapped.append((bundle.vocab.index_of_source(cat), float(s)))
                except DataError:
                    raise ParseError(
                        f"{where}: unknown category_id {cat} in top_scores"
                    ) from None
            top5 = tuple(mapped)
        if score < threshold:
            dropped += 1
            continue
        try:
            det = Detection(
                image_id=image_id,
                class_id=class_id,
                box=box,
                confidence=float(score),
                top5=top5,
            )
        except DataError as exc:
            raise ParseError(f"{where}: {exc}") from None
        dets_by_image.setdefault(image_id, []).append(det)
    if dropped:
        logger.info("dropped %d detections below threshold %g", dropped, threshold)
    bundle.dets_by_image = dets_by_image
    bundle.meta["detector_threshold"] = threshold
    return bundle


def load_detections(
    path: str, bundle: DatasetBundle, threshold: float = 0.0
) -> DatasetBundle:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: not valid JSON: {exc}") from None
    return parse_detections(doc, bundle, threshold)


def annotations_to_dict(bundle: DatasetBundle) -> dict:
    images = [
        {
            "id": image_id,
            **{
                k: v
                for k, v in bundle.images[image_id].items()
                if v is not None
            },
        }
        for image_id in sorted(bundle.images)
    ]
    annotations = []
    next_id = 1
    for image_id in sorted(bundle.images):
        for gt in bundle.gt_by_image.get(image_id, []):
            annotations.append(
                {
                    "id": next_id,
                    "image_id": image_id,
                    "category_id": bundle.vocab.source_of(gt.class_id),
                    "bbox": gt.box.as_list(),
                    "area": gt.box.area,
                    "iscrowd": 0,
                }
            )
            next_id += 1
    categories = [
        {"id": bundle.vocab.source_of(i), "name": name}
        for i, name in enumerate(bundle.vocab.names)
    ]
    return {"images": images, "annotations": annotations, "categories": categories}


def detections_to_dict(
    dets_by_image: Mapping[int, Sequence[Detection]], vocab: ClassVocabulary
) -> list[dict]:
    out = []
    for image_id in sorted(dets_by_image):
        for det in dets_by_image[image_id]:
            rec = {
                "image_id": image_id,
                "category_id": vocab.source_of(det.class_id),
                "bbox": det.box.as_list(),
                "score": det.confidence,
            }
            if det.top5 is not None:
                rec["top_scores"] = [
                    [vocab.source_of(c), s] for c, s in det.top5
                ]
            out.append(rec)
    return out


def save_annotations(bundle: DatasetBundle, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(annotations_to_dict(bundle), fh, separators=(",", ":"))
        fh.write("\n")


def save_detections(
    dets_by_image: Mapping[int, Sequence[Detection]],
    vocab: ClassVocabulary,
    path: str,
) -> None:
    with open(path, "w") as fh:
        json.dump(detections_to_dict(dets_by_image, vocab), fh, separators=(",", ":"))
        fh.write("\n")
