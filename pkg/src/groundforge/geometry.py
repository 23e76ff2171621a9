"""Normalized boxes and the grounded-span text notation.

A grounded span is a piece of text followed immediately by its box::

    "LOVE YOUR NEIGHBOR"[0.114, 0.153, 0.9, 0.616]

Coordinates are fractions of the image size with the origin at the top-left
corner, x growing rightward and y downward, kept on a 0.001 grid.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from typing import Iterable, Sequence

from .errors import EmptyInputError, InvalidGeometryError, UnserializableTextError

GRID = 1000  # quantization steps per unit

Number = int | float | Fraction | Decimal


def _exact(value: Number) -> Fraction:
    # str() of a float is its shortest repr, so 0.1 is taken as 1/10 rather
    # than the nearest binary double.
    if isinstance(value, Fraction):
        return value
    return Fraction(str(value))


def _round_grid(value: Fraction) -> float:
    """Round to the 0.001 grid, ties away from zero."""
    scaled = abs(value) * GRID
    steps = math.floor(scaled + Fraction(1, 2))
    steps = steps if value >= 0 else -steps
    return steps / GRID + 0.0  # + 0.0 folds -0.0


@dataclass(frozen=True, order=True)
class BBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        coords = self.as_tuple()
        if any(isinstance(c, bool) or not isinstance(c, (int, float)) for c in coords):
            raise InvalidGeometryError(f"non-numeric coordinate in {coords!r}")
        if not all(math.isfinite(c) for c in coords):
            raise InvalidGeometryError(f"non-finite coordinate in {coords!r}")
        if not (0 <= self.x_min <= self.x_max <= 1 and 0 <= self.y_min <= self.y_max <= 1):
            raise InvalidGeometryError(
                "box must satisfy 0 <= x_min <= x_max <= 1 and 0 <= y_min <= y_max <= 1, "
                f"got {list(coords)}"
            )

    @classmethod
    def of(cls, coords: Sequence[float]) -> "BBox":
        if len(coords) != 4:
            raise InvalidGeometryError(f"expected 4 coordinates, got {len(coords)}")
        return cls(*(float(c) for c in coords))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def center_y(self) -> float:
        return (self.y_min + self.y_max) / 2

    @property
    def is_quantized(self) -> bool:
        return all(_round_grid(_exact(c)) == c for c in self.as_tuple())

    def contains(self, other: "BBox") -> bool:
        return (
            self.x_min <= other.x_min
            and self.y_min <= other.y_min
            and other.x_max <= self.x_max
            and other.y_max <= self.y_max
        )


@dataclass(frozen=True)
class GroundedSpan:
    """Text paired with its box.

    An empty ``text`` stands for a bare box with no quoted text in front of it,
    which is what :func:`parse_spans` returns for a lone coordinate tuple.
    """

    text: str
    box: BBox

    def __post_init__(self) -> None:
        if self.text and not self.text.strip():
            raise ValueError("span text must not be whitespace only")


def quantize(box: BBox) -> BBox:
    coords = [_round_grid(_exact(c)) for c in box.as_tuple()]
    x0, x1 = sorted((coords[0], coords[2]))
    y0, y1 = sorted((coords[1], coords[3]))
    return BBox(x0, y0, x1, y1)


def normalize(px_box: Sequence[Number], width: Number, height: Number) -> BBox:
    """Convert a pixel rectangle ``(left, top, right, bottom)`` to a quantized box."""
    if len(px_box) != 4:
        raise InvalidGeometryError(f"expected 4 pixel coordinates, got {len(px_box)}")
    w, h = _exact(width), _exact(height)
    if w <= 0 or h <= 0:
        raise InvalidGeometryError(f"image dimensions must be positive, got {width}x{height}")
    left, top, right, bottom = (_exact(v) for v in px_box)
    if left > right or top > bottom:
        raise InvalidGeometryError(f"inverted rectangle {list(px_box)}")
    if left < 0 or top < 0 or right > w or bottom > h:
        raise InvalidGeometryError(f"rectangle {list(px_box)} lies outside a {width}x{height} image")
    coords = [min(1.0, max(0.0, _round_grid(v))) for v in (left / w, top / h, right / w, bottom / h)]
    return BBox(*coords)


def area(box: BBox) -> float:
    # Decimal keeps grid-aligned products exact, so 0.25 * 0.2 compares equal to 0.05.
    dx = Decimal(repr(box.x_max)) - Decimal(repr(box.x_min))
    dy = Decimal(repr(box.y_max)) - Decimal(repr(box.y_min))
    return float(dx * dy)


def iou(a: BBox, b: BBox) -> float:
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    inter = ix * iy if ix > 0 and iy > 0 else 0.0
    union_area = a.width * a.height + b.width * b.height - inter
    if union_area <= 0:
        return 0.0
    return min(1.0, max(0.0, inter / union_area))


def union(boxes: Iterable[BBox]) -> BBox:
    boxes = list(boxes)
    if not boxes:
        raise EmptyInputError("union of an empty box list")
    return BBox(
        min(b.x_min for b in boxes),
        min(b.y_min for b in boxes),
        max(b.x_max for b in boxes),
        max(b.y_max for b in boxes),
    )


def format_coord(value: float) -> str:
    """Shortest decimal form on the 3-decimal grid: ``0.900`` -> ``0.9``, ``1.000`` -> ``1``."""
    text = f"{value + 0.0:.3f}"
    if "." in text:
        text = text.rstrip("0").rstrip(".")
    return text


def format_box(box: BBox) -> str:
    return "[" + ", ".join(format_coord(c) for c in box.as_tuple()) + "]"


def serialize_span(span: GroundedSpan) -> str:
    if '"' in span.text:
        raise UnserializableTextError(f"span text contains a double quote: {span.text!r}")
    if not span.text:
        return format_box(span.box)
    return f'"{span.text}"{format_box(span.box)}'


_SPAN_RE = re.compile(
    r'(?:"(?P<ascii>[^"]*)"|“(?P<curly>[^“”]*)”)?'
    r"\[(?P<coords>[^\[\]]*)\]"
)
_NUMBER_RE = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)")


def _parse_tuple(body: str) -> BBox | None:
    parts = [p.strip() for p in body.split(",")]
    if len(parts) != 4 or not all(_NUMBER_RE.fullmatch(p) for p in parts):
        return None
    try:
        return quantize(BBox(*(float(p) for p in parts)))
    except InvalidGeometryError:
        return None


def parse_spans(response: str) -> list[tuple[GroundedSpan, tuple[int, int]]]:
    """Find grounded spans in free text, left to right.

    Returns ``(span, (start, end))`` pairs where the range covers the quoted
    text and the bracket. Both ``"..."`` and ``“...”`` quoting are accepted.
    Malformed tuples and out-of-range coordinates are skipped; a tuple without
    quoted text directly in front yields a span with empty text.
    """
    found = []
    for m in _SPAN_RE.finditer(response):
        box = _parse_tuple(m.group("coords"))
        if box is None:
            continue
        text = m.group("ascii")
        if text is None:
            text = m.group("curly") or ""
        if not text.strip():
            text = ""
        found.append((GroundedSpan(text, box), m.span()))
    return found
