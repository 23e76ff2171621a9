import re
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from groundforge.errors import EmptyInputError, InvalidGeometryError, UnserializableTextError
from groundforge.geometry import (
    BBox,
    GroundedSpan,
    area,
    format_coord,
    iou,
    normalize,
    parse_spans,
    quantize,
    serialize_span,
    union,
)

from .conftest import A1_BOX, A1_RESPONSE, PADDLE_TOKENS


def decimal_round(x) -> float:
    """Reference rounding: decimal string, ROUND_HALF_UP (away from zero for ties)."""
    return float(Decimal(str(x)).quantize(Decimal("0.001"), rounding=ROUND_HALF_UP))


def fraction_round(num: int, den: int) -> float:
    value = Fraction(num, den) * 1000
    whole = value.numerator // value.denominator
    if value - whole >= Fraction(1, 2):
        whole += 1
    return whole / 1000


grid = st.integers(0, 1000).map(lambda n: n / 1000)


@st.composite
def grid_boxes(draw):
    x0, x1 = sorted((draw(grid), draw(grid)))
    y0, y1 = sorted((draw(grid), draw(grid)))
    return BBox(x0, y0, x1, y1)


@st.composite
def any_boxes(draw):
    unit = st.floats(0, 1, allow_nan=False)
    x0, x1 = sorted((draw(unit), draw(unit)))
    y0, y1 = sorted((draw(unit), draw(unit)))
    return BBox(x0, y0, x1, y1)


span_text = st.text(min_size=1, max_size=40).filter(lambda t: '"' not in t and t.strip())


# -- BBox ---------------------------------------------------------------------


def test_bbox_rejects_inverted_and_out_of_range():
    with pytest.raises(InvalidGeometryError):
        BBox(0.5, 0, 0.4, 1)
    with pytest.raises(InvalidGeometryError):
        BBox(0, 0, 1.2, 1)
    with pytest.raises(InvalidGeometryError):
        BBox(0, 0, float("nan"), 1)


def test_bbox_of_requires_four():
    with pytest.raises(InvalidGeometryError):
        BBox.of([0, 0, 1])


# -- normalize ------------------------------------------------------------------


def test_normalize_slogan_box():
    assert normalize((114, 153, 900, 616), 1000, 1000) == BBox(0.114, 0.153, 0.9, 0.616)


@pytest.mark.parametrize("w,h", [(1, 1), (640, 480), (1024, 768), (3, 7)])
def test_normalize_full_image(w, h):
    assert normalize((0, 0, w, h), w, h) == BBox(0, 0, 1, 1)


def test_normalize_thirds_matches_fraction_oracle():
    expected = BBox(fraction_round(1, 3), fraction_round(1, 3), fraction_round(2, 3), fraction_round(2, 3))
    assert expected == BBox(0.333, 0.333, 0.667, 0.667)
    assert normalize((1, 1, 2, 2), 3, 3) == expected


def test_normalize_half_step_rounds_away_from_zero():
    # 1/2000 is exactly halfway between 0 and 0.001
    assert normalize((1, 0, 2, 1), 2000, 1).x_min == 0.001


@pytest.mark.parametrize(
    "box,w,h",
    [((0, 0, 1, 1), 0, 10), ((0, 0, 1, 1), 10, -1), ((5, 0, 4, 1), 10, 10), ((0, 0, 11, 1), 10, 10)],
)
def test_normalize_errors(box, w, h):
    with pytest.raises(InvalidGeometryError):
        normalize(box, w, h)


@given(st.integers(1, 5000), st.integers(1, 5000), st.data())
def test_normalize_always_valid_and_quantized(w, h, data):
    left = data.draw(st.integers(0, w))
    right = data.draw(st.integers(left, w))
    top = data.draw(st.integers(0, h))
    bottom = data.draw(st.integers(top, h))
    box = normalize((left, top, right, bottom), w, h)
    assert box.is_quantized
    assert box.x_min == fraction_round(left, w) and box.y_max == fraction_round(bottom, h)


# -- quantize -------------------------------------------------------------------


def test_quantize_decimal_oracle():
    raw = (0.1234, 0.5, 0.9, 0.6166)
    expected = BBox(*(decimal_round(c) for c in raw))
    assert expected == BBox(0.123, 0.5, 0.9, 0.617)
    assert quantize(BBox(*raw)) == expected


def test_quantize_unit_box_unchanged():
    assert quantize(BBox(0, 0, 1, 1)) == BBox(0, 0, 1, 1)


@given(any_boxes())
def test_quantize_matches_decimal_oracle(box):
    q = quantize(box)
    assert q.as_tuple() == tuple(decimal_round(c) for c in box.as_tuple())


@given(any_boxes())
def test_quantize_idempotent(box):
    q = quantize(box)
    assert quantize(q) == q
    assert q.is_quantized


# -- serialize / parse ------------------------------------------------------------


@pytest.mark.parametrize(
    "text,box,expected",
    [
        ("LOVE YOUR NEIGHBOR", (0.114, 0.153, 0.9, 0.616), '"LOVE YOUR NEIGHBOR"[0.114, 0.153, 0.9, 0.616]'),
        ("X", (0, 0, 1, 1), '"X"[0, 0, 1, 1]'),
        ("Arrivals", (0.12, 0.31, 0.34, 0.398), '"Arrivals"[0.12, 0.31, 0.34, 0.398]'),
    ],
)
def test_serialize_span(text, box, expected):
    assert serialize_span(GroundedSpan(text, BBox(*box))) == expected


def test_serialize_rejects_ascii_quote():
    with pytest.raises(UnserializableTextError):
        serialize_span(GroundedSpan('say "hi"', BBox(0, 0, 1, 1)))


@pytest.mark.parametrize("value,text", [(0.0, "0"), (1.0, "1"), (0.9, "0.9"), (0.05, "0.05"), (0.001, "0.001")])
def test_format_coord_minimal(value, text):
    assert format_coord(value) == text


def test_parse_worked_answer():
    [(span, rng)] = parse_spans(A1_RESPONSE)
    assert span == GroundedSpan("BABIES COME FROM AIRPORTS", A1_BOX)
    assert A1_RESPONSE[rng[0] : rng[1]] == "“BABIES COME FROM AIRPORTS”[0.084, 0.049, 0.934, 0.298]"


def test_parse_no_boxes():
    assert parse_spans("no boxes here") == []


# A deliberately different recognizer: scan for every bracketed group, then
# look back for an immediately preceding quoted string.
def grammar_oracle(text):
    out = []
    for m in re.finditer(r"\[([^\]\[]*)\]", text):
        parts = [p.strip() for p in m.group(1).split(",")]
        try:
            nums = [float(p) for p in parts]
        except ValueError:
            continue
        if len(nums) != 4 or not all(0 <= v <= 1 for v in nums) or nums[0] > nums[2] or nums[1] > nums[3]:
            continue
        before = text[: m.start()]
        q = re.search(r'"([^"]*)"$', before)
        out.append((q.group(1) if q else "", tuple(nums)))
    return out


def test_parse_skips_malformed_tuple():
    response = (
        'Title "Arrivals"[0.12, 0.31, 0.34, 0.398] and "Gate"[0.1, 0.2, 0.3] '
        'then "FROM"[0.15,0.193 ,0.367, 0.27].'
    )
    oracle = grammar_oracle(response)
    assert oracle == [("Arrivals", (0.12, 0.31, 0.34, 0.398)), ("FROM", (0.15, 0.193, 0.367, 0.27))]
    got = [(s.text, s.box.as_tuple()) for s, _ in parse_spans(response)]
    assert got == oracle


def test_parse_bare_tuple_and_out_of_range():
    got = parse_spans("box [0.1, 0.2, 0.3, 0.4] and [0.1, 0.2, 1.3, 0.4] and [a, b, c, d]")
    assert [(s.text, s.box) for s, _ in got] == [("", BBox(0.1, 0.2, 0.3, 0.4))]


def test_parse_requires_quote_immediately_before_bracket():
    [(span, _)] = parse_spans('"Gate" [0.1, 0.2, 0.3, 0.4]')
    assert span.text == ""


def test_parse_placeholder_is_not_a_span():
    assert parse_spans("Support your reasoning with the coordinates [x_min, y_min, x_max, y_max]") == []


def test_parse_quantizes_extra_precision():
    [(span, _)] = parse_spans('"a"[0.12345, 0, 1, 1]')
    assert span.box.x_min == 0.123


@given(span_text, grid_boxes())
def test_round_trip(text, box):
    span = GroundedSpan(text, box)
    line = serialize_span(span)
    assert parse_spans(line) == [(span, (0, len(line)))]


@given(grid_boxes())
def test_round_trip_bare(box):
    span = GroundedSpan("", box)
    assert [s for s, _ in parse_spans(serialize_span(span))] == [span]


@given(st.lists(st.tuples(span_text, grid_boxes()), min_size=1, max_size=5))
def test_round_trip_multiline(items):
    spans = [GroundedSpan(t, b) for t, b in items]
    text = "\n".join(serialize_span(s) for s in spans)
    assert [s for s, _ in parse_spans(text)] == spans


@given(st.text(max_size=200))
def test_parse_is_total(text):
    for span, (start, end) in parse_spans(text):
        assert 0 <= start < end <= len(text)
        assert span.box.is_quantized


# -- iou / union / area -------------------------------------------------------------


def test_iou_examples():
    assert iou(BBox(0, 0, 1, 1), BBox(0.5, 0, 1, 1)) == 0.5
    assert iou(BBox(0, 0, 0.4, 0.4), BBox(0.6, 0.6, 1, 1)) == 0
    assert iou(BBox(0.2, 0.2, 0.2, 0.9), BBox(0.2, 0.2, 0.2, 0.9)) == 0


@given(grid_boxes(), grid_boxes())
def test_iou_properties(a, b):
    assert iou(a, b) == iou(b, a)
    assert 0 <= iou(a, b) <= 1
    if area(a) > 0:
        assert iou(a, a) == 1


def test_union_of_title_words():
    boxes = [BBox(*b) for _, b in PADDLE_TOKENS[:4]]
    assert union(boxes) == A1_BOX


def test_union_empty():
    with pytest.raises(EmptyInputError):
        union([])


@given(st.lists(grid_boxes(), min_size=1, max_size=8), st.randoms())
def test_union_properties(boxes, rnd):
    u = union(boxes)
    assert all(u.contains(b) for b in boxes)
    shuffled = list(boxes)
    rnd.shuffle(shuffled)
    assert union(shuffled) == u
    assert union(boxes[:1]) == boxes[0]


@pytest.mark.parametrize(
    "box,expected",
    [((0, 0, 0.3, 0.2), 0.06), ((0, 0, 1, 1), 1.0), ((0.2, 0.2, 0.2, 0.9), 0.0), ((0.1, 0.1, 0.35, 0.3), 0.05)],
)
def test_area(box, expected):
    assert area(BBox(*box)) == expected
