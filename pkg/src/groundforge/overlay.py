"""SVG overlays of predicted and ground-truth boxes on top of the source image."""

from __future__ import annotations

import xml.etree.ElementTree as ET
from typing import Sequence

from .geometry import BBox, GroundedSpan

SVG_NS = "http://www.w3.org/2000/svg"
XLINK_NS = "http://www.w3.org/1999/xlink"

_STYLE = """
.pred { fill: none; stroke: #e4572e; stroke-width: 2; }
.gt { fill: none; stroke: #29bf12; stroke-width: 2; stroke-dasharray: 6 3; }
.label { font-family: sans-serif; font-size: 12px; fill: #e4572e; }
"""


def _num(value: float) -> str:
    text = f"{round(value, 3):.3f}".rstrip("0").rstrip(".")
    return "0" if text in ("", "-0") else text


def pixel_rect(box: BBox, width: int, height: int) -> tuple[float, float, float, float]:
    """``(x, y, w, h)`` in pixels for a normalized box."""
    x0, y0 = box.x_min * width, box.y_min * height
    return x0, y0, box.x_max * width - x0, box.y_max * height - y0


def _rect(parent: ET.Element, box: BBox, width: int, height: int, cls: str) -> None:
    x, y, w, h = pixel_rect(box, width, height)
    ET.SubElement(parent, "rect", {"class": cls, "x": _num(x), "y": _num(y), "width": _num(w), "height": _num(h)})


def emit_overlay(
    image_ref: str,
    width: int,
    height: int,
    spans: Sequence[GroundedSpan],
    gt_boxes: Sequence[BBox] | None = None,
) -> str:
    if width <= 0 or height <= 0:
        raise ValueError(f"image size must be positive, got {width}x{height}")
    svg = ET.Element(
        "svg",
        {
            "xmlns": SVG_NS,
            "xmlns:xlink": XLINK_NS,
            "width": str(width),
            "height": str(height),
            "viewBox": f"0 0 {width} {height}",
        },
    )
    ET.SubElement(svg, "style").text = _STYLE
    ET.SubElement(svg, "image", {"href": image_ref, "xlink:href": image_ref, "x": "0", "y": "0",
                                 "width": str(width), "height": str(height)})
    for box in gt_boxes or ():
        _rect(svg, box, width, height, "gt")
    for span in spans:
        _rect(svg, span.box, width, height, "pred")
        if span.text:
            x, y, _, _ = pixel_rect(span.box, width, height)
            label = ET.SubElement(svg, "text", {"class": "label", "x": _num(x), "y": _num(max(y - 3, 12))})
            label.text = span.text
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(svg, encoding="unicode") + "\n"
