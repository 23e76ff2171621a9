import hashlib
import json
import random
from collections import Counter

import pytest
from hypothesis import given, strategies as st

from groundforge.errors import IngestError, TemplateError
from groundforge.templates import (
    BOX_MARKER,
    TEXT_MARKER,
    Task,
    TemplateSet,
    builtin_templates,
    instantiate,
    load_template_extensions,
    pick,
)

# sha256 of the 30 templates joined by "\n" (detection, recognition, spotting),
# frozen from an independent extraction of the source table
BANK_SHA256 = "1a58b3ace374194bd5810ed83daee8b2783e246472e9a8690582518f135c76af"


def bank_digest(templates):
    joined = "\n".join(t for task in Task for t in templates[task])
    return hashlib.sha256(joined.encode("utf-8")).hexdigest()


def test_bank_checksum():
    assert bank_digest(builtin_templates()) == BANK_SHA256


def test_bank_shape():
    bank = builtin_templates()
    assert [len(bank[t]) for t in Task] == [10, 10, 10]
    assert bank[Task.DETECTION][0] == (
        "Can you furnish the bounding box coordinates [xmin, ymin, xmax, ymax] for the text <text> in the image?"
    )
    assert bank["recognition"][0].startswith("Please recognize and supply the text enclosed within")
    assert all(TEXT_MARKER in t for t in bank[Task.DETECTION])
    assert all(BOX_MARKER in t for t in bank[Task.RECOGNITION])


def test_bank_is_constant_and_immutable():
    assert builtin_templates() is builtin_templates()
    with pytest.raises(TypeError):
        builtin_templates().by_task[Task.SPOTTING] = ()


def test_instantiate_detection():
    out = instantiate(builtin_templates()[Task.DETECTION][7], {"text": "Arrivals"}, Task.DETECTION.placeholders)
    assert out == "Please retrieve the coordinates [xmin, ymin, xmax, ymax] for the text Arrivals in the image."


def test_instantiate_recognition_box():
    out = instantiate(builtin_templates()[Task.RECOGNITION][0], {"box": "[0.15, 0.193, 0.367, 0.27]"})
    assert out.endswith("bounding box [0.15, 0.193, 0.367, 0.27].")


def test_instantiate_unresolved():
    with pytest.raises(TemplateError) as err:
        instantiate("Find <text> now", {})
    assert str(err.value) == "unresolved placeholder <text>"


def test_instantiate_unused_binding_warns():
    with pytest.warns(UserWarning, match="unused"):
        assert instantiate("no slots", {"text": "x"}) == "no slots"


def test_detection_box_marker_needs_task_placeholders():
    # without the task's slot list, the literal answer-format marker counts as a slot
    with pytest.raises(TemplateError, match=r"\[xmin"):
        instantiate(builtin_templates()[Task.DETECTION][0], {"text": "x"})


def test_instantiate_unknown_name():
    with pytest.raises(TemplateError):
        instantiate("<text>", {"text": "a", "colour": "red"})


def test_instantiate_does_not_rescan_substitution():
    assert instantiate("<text> at [xmin, ymin, xmax, ymax]", {"text": "[xmin, ymin, xmax, ymax]", "box": "[0, 0, 1, 1]"}) == (
        "[xmin, ymin, xmax, ymax] at [0, 0, 1, 1]"
    )


@given(st.text(max_size=30))
def test_instantiate_text_verbatim(value):
    out = instantiate("A <text> B", {"text": value})
    assert out == f"A {value} B"


def test_pick_deterministic():
    a = [pick(Task.SPOTTING, random.Random(3)) for _ in range(5)]
    b = [pick(Task.SPOTTING, random.Random(3)) for _ in range(5)]
    assert a == b


def test_pick_single_template_set():
    only = TemplateSet({Task.DETECTION: ["find <text>"], Task.RECOGNITION: ["read [xmin, ymin, xmax, ymax]"], Task.SPOTTING: ["all"]})
    rng = random.Random(0)
    assert {pick("detection", rng, only) for _ in range(20)} == {"find <text>"}


def test_pick_roughly_uniform():
    rng = random.Random(42)
    counts = Counter(pick(Task.RECOGNITION, rng) for _ in range(10_000))
    assert len(counts) == 10
    assert all(800 <= c <= 1200 for c in counts.values())


def test_template_set_validation():
    with pytest.raises(TemplateError, match="lacks"):
        TemplateSet({Task.DETECTION: ["no slot"], Task.RECOGNITION: ["[xmin, ymin, xmax, ymax]"], Task.SPOTTING: ["s"]})
    with pytest.raises(TemplateError, match="no templates"):
        TemplateSet({Task.DETECTION: ["<text>"], Task.RECOGNITION: ["[xmin, ymin, xmax, ymax]"]})


def test_load_extensions():
    lines = [
        json.dumps({"task": "spotting", "template": "List every word with its box."}),
        "",
        json.dumps({"task": "spotting", "template": builtin_templates()[Task.SPOTTING][0]}),
    ]
    ext = load_template_extensions(lines)
    assert len(ext[Task.SPOTTING]) == 11
    assert ext[Task.SPOTTING][-1] == "List every word with its box."
    assert bank_digest(builtin_templates()) == BANK_SHA256


@pytest.mark.parametrize(
    "line",
    [
        "nope",
        json.dumps({"task": "captioning", "template": "x"}),
        json.dumps({"task": "spotting"}),
        json.dumps({"task": "spotting", "template": "  "}),
        json.dumps({"task": "detection", "template": "no marker here"}),
    ],
)
def test_load_extensions_rejects(line):
    with pytest.raises(IngestError):
        load_template_extensions([line])
