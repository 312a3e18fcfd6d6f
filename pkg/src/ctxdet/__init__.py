"""Context-based rescoring and relabeling of object-detection outputs.

Detections within an image are described through pairwise contextual
relations (co-occurrence, overlap, relative scale, relative position,
distance) aggregated per class into a fixed-length feature vector. A small
feed-forward network trained with scaled conjugate gradients maps each
vector to a probability that the detection is correct; that probability
replaces the detector confidence, and can further drive relabeling or
removal of implausible detections.
"""

from .errors import DataError, ParseError
from .geometry import BBox, RelationBits, RelationConfig, iou, relation_bits
from .features import (
    ClassVocabulary,
    CoocMatrix,
    Detection,
    GroundTruth,
    build_cooccurrence,
    build_feature_vector,
    build_training_set,
    feature_length,
)
from .network import (
    NetworkParams,
    TrainConfig,
    TrainReport,
    init_network,
    load_model,
    save_model,
    score,
    train_scg,
)
from .pipelines import RelabelRecord, RelabelResult, SceneDetections, relabel_scene, rescore_scene
from .metrics import auc, average_precision, compute_metrics, mean_average_precision
from .coco_io import DatasetBundle, load_annotations, load_detections
from .synth import SynthRule, SynthSpec, default_rules, generate
from .config import ToolConfig, load_tool_config

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "ClassVocabulary",
    "CoocMatrix",
    "DataError",
    "DatasetBundle",
    "Detection",
    "GroundTruth",
    "NetworkParams",
    "ParseError",
    "RelabelRecord",
    "RelabelResult",
    "RelationBits",
    "RelationConfig",
    "SceneDetections",
    "SynthRule",
    "SynthSpec",
    "ToolConfig",
    "TrainConfig",
    "TrainReport",
    "auc",
    "average_precision",
    "build_cooccurrence",
    "build_feature_vector",
    "build_training_set",
    "compute_metrics",
    "default_rules",
    "feature_length",
    "generate",
    "init_network",
    "iou",
    "load_annotations",
    "load_detections",
    "load_model",
    "load_tool_config",
    "mean_average_precision",
    "relabel_scene",
    "relation_bits",
    "rescore_scene",
    "save_model",
    "score",
    "train_scg",
    "__version__",
]
