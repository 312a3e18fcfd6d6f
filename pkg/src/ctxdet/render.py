"""SVG overlays of detection outcomes.

Boxes are stroked green (correct), red (incorrect), or white (removed), each
labeled with its class name and score to four decimals. The output is a
standalone SVG string over a dark background so all three colors stay
legible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence
from xml.sax.saxutils import escape

from .errors import DataError
from .geometry import BBox
from .pipelines import SceneDetections

__all__ = ["OverlayEntry", "render_entries", "render_overlay", "STATUS_COLORS"]

STATUS_COLORS = {
    "correct": "#27ae60",
    "incorrect": "#e74c3c",
    "removed": "#ffffff",
}


@dataclass(frozen=True)
class OverlayEntry:
    box: BBox
    text: str
    status: str

    def __post_init__(self) -> None:
        if self.status not in STATUS_COLORS:
            raise DataError(
                f"unknown overlay status {self.status!r}; "
                f"expected one of {sorted(STATUS_COLORS)}"
            )


def render_entries(
    entries: Sequence[OverlayEntry], size: tuple[int, int] = (960, 720)
) -> str:
    width, height = size
    if width < 1 or height < 1:
        raise DataError(f"overlay size must be positive, got {size}")
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#1f2430"/>',
    ]
    for entry in entries:
        color = STATUS_COLORS[entry.status]
        b = entry.box
        parts.append(
            f'<rect x="{b.x:g}" y="{b.y:g}" width="{b.w:g}" height="{b.h:g}" '
            f'fill="none" stroke="{color}" stroke-width="2"/>'
        )
        text_y = b.y - 5 if b.y >= 16 else b.bottom + 14
        parts.append(
            f'<text x="{b.x:g}" y="{text_y:g}" fill="{color}" '
            f'font-family="monospace" font-size="13">{escape(entry.text)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_overlay(
    scene: SceneDetections,
    statuses: Sequence[str],
    class_names: Sequence[str],
    size: tuple[int, int] = (960, 720),
) -> str:
    """Overlay for one scene; ``statuses`` aligns with the scene detections."""
    if len(statuses) != len(scene.detections):
        raise DataError(
            f"{len(statuses)} statuses for {len(scene.detections)} detections"
        )
    entries = []
    for det, status in zip(scene.detections, statuses):
        if not 0 <= det.class_id < len(class_names):
            raise DataError(
                f"class id {det.class_id} outside vocabulary of {len(class_names)}"
            )
        entries.append(
            OverlayEntry(
                box=det.box,
                text=f"{class_names[det.class_id]} {det.confidence:.4f}",
                status=status,
            )
        )
    return render_entries(entries, size)
