"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field

from ..features import Detection
from ..geometry import BBox, RelationConfig
from ..network import TrainConfig
from ..pipelines import RelabelRecord, SceneDetections


class BoxModel(BaseModel):
    x: float
    y: float
    w: float = Field(gt=0)
    h: float = Field(gt=0)

    def to_bbox(self) -> BBox:
        return BBox(self.x, self.y, self.w, self.h)

    @classmethod
    def from_bbox(cls, box: BBox) -> "BoxModel":
        return cls(x=box.x, y=box.y, w=box.w, h=box.h)


class RelationConfigModel(BaseModel):
    cooccurrence: bool = True
    overlapping: bool = True
    scale: bool = True
    boundary: bool = True
    central: bool = True
    nearfar: bool = True
    eps_scale: float = Field(default=0.05, ge=0)
    overlap_mode: str = "iou_threshold"
    overlap_threshold: float = Field(default=0.5, ge=0, le=1)
    central_form: str = "literal"

    def to_config(self) -> RelationConfig:
        return RelationConfig(**self.model_dump())


class TrainConfigModel(BaseModel):
    hidden: int = Field(default=1000, ge=1)
    max_epochs: int = Field(default=1000, ge=1)
    sigma: float = Field(default=5e-5, gt=0)
    lambda_init: float = Field(default=5e-7, gt=0)
    min_gradient: float = Field(default=1e-6, ge=0)
    validation_fraction: float = Field(default=0.15, ge=0, lt=1)
    max_validation_failures: int = Field(default=6, ge=1)
    seed: int = 0

    def to_config(self) -> TrainConfig:
        return TrainConfig(**self.model_dump())


class DetectionModel(BaseModel):
    class_id: int = Field(ge=0)
    box: BoxModel
    confidence: float = Field(ge=0, le=1)
    top_scores: list[tuple[int, float]] | None = Field(default=None, max_length=5)

    def to_detection(self, image_id: int) -> Detection:
        return Detection(
            image_id=image_id,
            class_id=self.class_id,
            box=self.box.to_bbox(),
            confidence=self.confidence,
            top5=tuple(self.top_scores) if self.top_scores else None,
        )

    @classmethod
    def from_detection(cls, det: Detection) -> "DetectionModel":
        return cls(
            class_id=det.class_id,
            box=BoxModel.from_bbox(det.box),
            confidence=det.confidence,
            top_scores=[list(pair) for pair in det.top5] if det.top5 else None,
        )


class SceneModel(BaseModel):
    image_id: int = 0
    threshold: float = Field(default=0.0, ge=0, le=1)
    detections: list[DetectionModel]

    def to_scene(self) -> SceneDetections:
        return SceneDetections(
            image_id=self.image_id,
            threshold=self.threshold,
            detections=tuple(d.to_detection(self.image_id) for d in self.detections),
        )

    @classmethod
    def from_scene(cls, scene: SceneDetections) -> "SceneModel":
        return cls(
            image_id=scene.image_id,
            threshold=scene.threshold,
            detections=[DetectionModel.from_detection(d) for d in scene.detections],
        )


class RelationsRequest(BaseModel):
    ref: BoxModel
    obj: BoxModel
    config: RelationConfigModel = Field(default_factory=RelationConfigModel)


class RelationsResponse(BaseModel):
    bits: dict[str, int]
    iou: float


class FeatureLengthRequest(BaseModel):
    vocab_size: int = Field(ge=1)
    config: RelationConfigModel = Field(default_factory=RelationConfigModel)


class FeatureLengthResponse(BaseModel):
    length: int
    features_per_class: int


class CooccurrenceRequest(BaseModel):
    class_names: list[str] = Field(min_length=1)
    image_class_sets: list[list[int]]


class CooccurrenceResponse(BaseModel):
    values: list[list[float]]
    image_counts: list[int]
    names: list[str]


class SynthRuleModel(BaseModel):
    subject_class: int = Field(ge=0)
    required: list[str] = Field(min_length=1)
    object_class: int = Field(ge=0)


class SynthRequest(BaseModel):
    classes: int = Field(default=6, ge=2)
    images: int = Field(default=100, ge=1)
    objects_per_image: tuple[int, int] = (2, 3)
    rules: list[SynthRuleModel] | None = None  # None -> the default rule set
    violation_rate: float = Field(default=0.5, ge=0, le=1)
    label_noise: float = Field(default=0.0, ge=0, le=1)
    extra_objects: tuple[int, int] = (1, 2)
    relations: RelationConfigModel = Field(default_factory=RelationConfigModel)
    seed: int = 0


class SynthResponse(BaseModel):
    annotations: dict
    detections: list[dict]
    summary: dict


class TrainRequest(BaseModel):
    annotations: dict
    detections: list[dict]
    threshold: float = Field(default=0.0, ge=0, le=1)
    relations: RelationConfigModel = Field(default_factory=RelationConfigModel)
    train: TrainConfigModel = Field(default_factory=TrainConfigModel)


class TrainResponse(BaseModel):
    model_id: str
    input_dim: int
    report: dict


class ModelImportResponse(BaseModel):
    model_id: str
    input_dim: int
    hidden: int


class ModelListResponse(BaseModel):
    models: list[dict]


class RescoreRequest(BaseModel):
    model_id: str
    scene: SceneModel


class RescoreResponse(BaseModel):
    scene: SceneModel
    skipped: bool


class RelabelRequest(BaseModel):
    model_id: str
    scene: SceneModel
    t: float = Field(default=0.4, ge=0, lt=1)


class RelabelRecordModel(BaseModel):
    image_id: int
    box: BoxModel
    original_label: int
    original_score: float
    rescored: float | None
    status: str
    final_label: int | None
    final_score: float | None
    candidates_tried: list[tuple[int, float]]
    note: str | None

    @classmethod
    def from_record(cls, record: RelabelRecord) -> "RelabelRecordModel":
        x, y, w, h = record.box
        return cls(
            image_id=record.image_id,
            box=BoxModel(x=x, y=y, w=w, h=h),
            original_label=record.original_label,
            original_score=record.original_score,
            rescored=record.rescored,
            status=record.status,
            final_label=record.final_label,
            final_score=record.final_score,
            candidates_tried=[tuple(pair) for pair in record.candidates_tried],
            note=record.note,
        )


class RelabelResponse(BaseModel):
    scene: SceneModel
    records: list[RelabelRecordModel]
    skipped: bool


class EvaluateRequest(BaseModel):
    annotations: dict
    detections: list[dict]
    threshold: float = Field(default=0.0, ge=0, le=1)


class RenderRequest(BaseModel):
    scene: SceneModel
    statuses: list[str]
    class_names: list[str] = Field(min_length=1)
    width: int = Field(default=960, ge=1)
    height: int = Field(default=720, ge=1)


class RenderResponse(BaseModel):
    svg: str
