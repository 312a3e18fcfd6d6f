"""FastAPI service wrapping the core package.

Trained models live in an in-memory registry keyed by a content hash, so a
model uploaded or trained once can serve many rescore/relabel calls. Data
errors from the core map to HTTP 400.
"""

from __future__ import annotations

import hashlib
import json

from fastapi import FastAPI, HTTPException

from ..coco_io import parse_annotations, parse_detections
from ..errors import DataError
from ..features import ClassVocabulary, build_cooccurrence, build_training_set
from ..geometry import iou, relation_bits
from ..metrics import compute_metrics
from ..network import NetworkParams, model_from_dict, model_to_dict, train_scg
from ..pipelines import relabel_scene, rescore_scene
from ..render import render_overlay
from ..synth import SynthRule, SynthSpec, default_rules, generate
from ..coco_io import annotations_to_dict, detections_to_dict
from ..features import feature_length
from . import schemas

__all__ = ["create_app"]


def _model_id(params: NetworkParams) -> str:
    doc = json.dumps(model_to_dict(params), separators=(",", ":"), sort_keys=True)
    return hashlib.sha256(doc.encode()).hexdigest()[:12]


def create_app() -> FastAPI:
    app = FastAPI(
        title="ctxdet",
        description="Context-based rescoring and relabeling of detection outputs.",
    )
    registry: dict[str, NetworkParams] = {}
    app.state.models = registry

    def fail(exc: DataError) -> HTTPException:
        return HTTPException(status_code=400, detail=str(exc))

    def get_model(model_id: str) -> NetworkParams:
        model = registry.get(model_id)
        if model is None:
            raise HTTPException(status_code=404, detail=f"unknown model {model_id!r}")
        return model

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "models": len(registry)}

    @app.post("/relations", response_model=schemas.RelationsResponse)
    def relations(req: schemas.RelationsRequest) -> schemas.RelationsResponse:
        try:
            ref = req.ref.to_bbox()
            obj = req.obj.to_bbox()
            bits = relation_bits(ref, obj, req.config.to_config())
        except (ValueError, DataError) as exc:
            raise fail(DataError(str(exc))) from None
        return schemas.RelationsResponse(bits=bits.as_dict(), iou=iou(ref, obj))

    @app.post("/feature-length", response_model=schemas.FeatureLengthResponse)
    def feature_length_route(
        req: schemas.FeatureLengthRequest,
    ) -> schemas.FeatureLengthResponse:
        try:
            config = req.config.to_config()
            length = feature_length(config, req.vocab_size)
        except (ValueError, DataError) as exc:
            raise fail(DataError(str(exc))) from None
        return schemas.FeatureLengthResponse(
            length=length, features_per_class=config.features_per_class()
        )

    @app.post("/cooccurrence", response_model=schemas.CooccurrenceResponse)
    def cooccurrence(req: schemas.CooccurrenceRequest) -> schemas.CooccurrenceResponse:
        try:
            vocab = ClassVocabulary(names=tuple(req.class_names))
            matrix = build_cooccurrence(req.image_class_sets, vocab)
        except DataError as exc:
            raise fail(exc) from None
        return schemas.CooccurrenceResponse(
            values=matrix.values.tolist(),
            image_counts=matrix.image_counts.tolist(),
            names=list(matrix.names),
        )

    @app.post("/synth", response_model=schemas.SynthResponse)
    def synth(req: schemas.SynthRequest) -> schemas.SynthResponse:
        try:
            if req.rules is None:
                rules = default_rules()
            else:
                rules = tuple(
                    SynthRule(
                        subject_class=r.subject_class,
                        required=tuple(r.required),
                        object_class=r.object_class,
                    )
                    for r in req.rules
                )
            spec = SynthSpec(
                classes=req.classes,
                images=req.images,
                objects_per_image=req.objects_per_image,
                rules=rules,
                violation_rate=req.violation_rate,
                label_noise=req.label_noise,
                extra_objects=req.extra_objects,
                relations=req.relations.to_config(),
                seed=req.seed,
            )
            bundle = generate(spec)
        except DataError as exc:
            raise fail(exc) from None
        return schemas.SynthResponse(
            annotations=annotations_to_dict(bundle),
            detections=detections_to_dict(bundle.dets_by_image, bundle.vocab),
            summary=bundle.meta,
        )

    @app.post("/train", response_model=schemas.TrainResponse)
    def train(req: schemas.TrainRequest) -> schemas.TrainResponse:
        try:
            bundle = parse_annotations(req.annotations)
            parse_detections(req.detections, bundle, req.threshold)
            relations_config = req.relations.to_config()
            x, y = build_training_set(
                bundle.dets_by_image,
                bundle.gt_by_image,
                relations_config,
                bundle.vocab,
            )
            model, report = train_scg(
                x,
                y,
                req.train.to_config(),
                vocabulary=bundle.vocab.names,
                relation_config=relations_config,
            )
        except DataError as exc:
            raise fail(exc) from None
        model_id = _model_id(model)
        registry[model_id] = model
        summary = report.to_dict()
        del summary["losses"], summary["val_losses"]
        return schemas.TrainResponse(
            model_id=model_id, input_dim=model.input_dim, report=summary
        )

    @app.post("/models", response_model=schemas.ModelImportResponse)
    def import_model(doc: dict) -> schemas.ModelImportResponse:
        try:
            model = model_from_dict(doc)
        except DataError as exc:
            raise fail(exc) from None
        model_id = _model_id(model)
        registry[model_id] = model
        return schemas.ModelImportResponse(
            model_id=model_id, input_dim=model.input_dim, hidden=model.hidden
        )

    @app.get("/models", response_model=schemas.ModelListResponse)
    def list_models() -> schemas.ModelListResponse:
        return schemas.ModelListResponse(
            models=[
                {
                    "model_id": model_id,
                    "input_dim": model.input_dim,
                    "hidden": model.hidden,
                    "classes": len(model.vocabulary) if model.vocabulary else None,
                }
                for model_id, model in sorted(registry.items())
            ]
        )

    @app.get("/models/{model_id}")
    def export_model(model_id: str) -> dict:
        return model_to_dict(get_model(model_id))

    @app.post("/rescore", response_model=schemas.RescoreResponse)
    def rescore(req: schemas.RescoreRequest) -> schemas.RescoreResponse:
        model = get_model(req.model_id)
        try:
            scene = req.scene.to_scene()
            result = rescore_scene(model, scene)
        except DataError as exc:
            raise fail(exc) from None
        return schemas.RescoreResponse(
            scene=schemas.SceneModel.from_scene(result),
            skipped=len(scene.detections) < 2,
        )

    @app.post("/relabel", response_model=schemas.RelabelResponse)
    def relabel(req: schemas.RelabelRequest) -> schemas.RelabelResponse:
        model = get_model(req.model_id)
        try:
            result = relabel_scene(model, req.scene.to_scene(), req.t)
        except DataError as exc:
            raise fail(exc) from None
        return schemas.RelabelResponse(
            scene=schemas.SceneModel.from_scene(result.scene),
            records=[
                schemas.RelabelRecordModel.from_record(r) for r in result.records
            ],
            skipped=result.skipped,
        )

    @app.post("/evaluate")
    def evaluate(req: schemas.EvaluateRequest) -> dict:
        try:
            bundle = parse_annotations(req.annotations)
            parse_detections(req.detections, bundle, req.threshold)
            return compute_metrics(
                bundle.dets_by_image,
                bundle.gt_by_image,
                bundle.vocab,
                threshold=req.threshold,
            )
        except DataError as exc:
            raise fail(exc) from None

    @app.post("/render", response_model=schemas.RenderResponse)
    def render(req: schemas.RenderRequest) -> schemas.RenderResponse:
        try:
            svg = render_overlay(
                req.scene.to_scene(),
                req.statuses,
                req.class_names,
                size=(req.width, req.height),
            )
        except DataError as exc:
            raise fail(exc) from None
        return schemas.RenderResponse(svg=svg)

    return app
