"""Tool configuration: one document covering relations, training, and pipelines.

Accepts TOML or JSON. Every key is optional; omitted sections fall back to
the library defaults. Unknown keys are rejected rather than ignored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .errors import DataError
from .geometry import RelationConfig
from .network import TrainConfig

__all__ = ["ToolConfig", "load_tool_config"]


@dataclass
class ToolConfig:
    relations: RelationConfig = field(default_factory=RelationConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    detector_thresholds: tuple[float, ...] = (0.5, 0.6, 0.7)
    relabel_t: float = 0.4
    paths: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.detector_thresholds:
            raise DataError("detector_thresholds must not be empty")
        for value in self.detector_thresholds:
            if not 0.0 <= value <= 1.0:
                raise DataError(
                    f"detector thresholds must be in [0, 1], got {value}"
                )
        if not 0.0 <= self.relabel_t < 1.0:
            raise DataError(f"relabel_t must be in [0, 1), got {self.relabel_t}")

    def to_dict(self) -> dict:
        return {
            "relations": self.relations.to_dict(),
            "train": self.train.to_dict(),
            "detector_thresholds": list(self.detector_thresholds),
            "relabel_t": self.relabel_t,
            "paths": dict(self.paths),
        }


def _parse_document(path: str) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read()
    if path.endswith(".toml"):
        try:
            return tomllib.loads(raw.decode())
        except tomllib.TOMLDecodeError as exc:
            raise DataError(f"{path}: not valid TOML: {exc}") from None
    if path.endswith(".json"):
        try:
            return json.loads(raw)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: not valid JSON: {exc}") from None
    # unknown extension: accept either format
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        pass
    try:
        return tomllib.loads(raw.decode())
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: neither valid JSON nor TOML: {exc}") from None


def load_tool_config(path: str) -> ToolConfig:
    doc = _parse_document(path)
    if not isinstance(doc, dict):
        raise DataError(f"{path}: config must be a table/object")
    known = {"relations", "train", "detector_thresholds", "relabel_t", "paths"}
    unknown = set(doc) - known
    if unknown:
        raise DataError(f"{path}: unknown config keys: {sorted(unknown)}")
    try:
        relations = RelationConfig.from_dict(doc.get("relations", {}))
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    train = TrainConfig.from_dict(doc.get("train", {}))
    kwargs: dict = {"relations": relations, "train": train}
    if "detector_thresholds" in doc:
        values = doc["detector_thresholds"]
        if not isinstance(values, list):
            raise DataError(f"{path}: detector_thresholds must be a list")
        kwargs["detector_thresholds"] = tuple(float(v) for v in values)
    if "relabel_t" in doc:
        kwargs["relabel_t"] = float(doc["relabel_t"])
    if "paths" in doc:
        paths = doc["paths"]
        if not isinstance(paths, dict):
            raise DataError(f"{path}: paths must be a table/object")
        kwargs["paths"] = {str(k): str(v) for k, v in paths.items()}
    return ToolConfig(**kwargs)
