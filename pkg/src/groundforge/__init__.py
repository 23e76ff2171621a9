"""Build grounded instruction data for text-rich images and score grounded answers."""

from .geometry import (
    BBox,
    GroundedSpan,
    area,
    format_box,
    iou,
    normalize,
    parse_spans,
    quantize,
    serialize_span,
    union,
)

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "GroundedSpan",
    "area",
    "format_box",
    "iou",
    "normalize",
    "parse_spans",
    "quantize",
    "serialize_span",
    "union",
]
