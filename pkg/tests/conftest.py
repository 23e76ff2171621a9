import json

import pytest

from groundforge.geometry import BBox
from groundforge.ocr import OcrDocument, OcrToken

# OCR rows of the book-cover walkthrough (two engines, normalized boxes)
PADDLE_TOKENS = [
    ("BABIES", (0.084, 0.067, 0.496, 0.190)),
    ("COME", (0.504, 0.049, 0.711, 0.130)),
    ("FROM", (0.150, 0.193, 0.367, 0.270)),
    ("AIRPORTS", (0.350, 0.138, 0.934, 0.298)),
    ("Arrivals=", (0.128, 0.318, 0.381, 0.400)),
    ("Written by Erin Dealey lllustrated by Luciana Navarro Powel", (0.136, 0.909, 0.887, 0.930)),
]
EASY_TOKENS = [
    ("BABI-S CONE", (0.063, 0.032, 0.733, 0.208)),
    ("FROM", (0.144, 0.186, 0.371, 0.279)),
    ("AIRPORTS", (0.353, 0.124, 0.940, 0.304)),
    ("Arrivals", (0.120, 0.310, 0.340, 0.398)),
    ("Writien", (0.133, 0.907, 0.225, 0.933)),
    ("by ", (0.219, 0.902, 0.268, 0.939)),
    ("Erin Dealey", (0.261, 0.902, 0.408, 0.938)),
    ("Illustrated by Luciana Navarro Powell", (0.438, 0.905, 0.893, 0.938)),
]
CAPTIONS = ["babies are from airports", "babies come from airports", "the cover of babies come from airports"]
A1_BOX = BBox(0.084, 0.049, 0.934, 0.298)
A1_RESPONSE = "The main title in the image is “BABIES COME FROM AIRPORTS”[0.084, 0.049, 0.934, 0.298]."

WORKED_COMPLETION = """Q1: Identify the main title displayed in the image.
A1: The main title in the image is “BABIES COME FROM AIRPORTS”[0.084, 0.049, 0.934, 0.298].
Q2: Are there any distinct sections denoted in the background? If so, please specify and support your response with the text and its bounding box.
A2: Yes, it seems that the babies are from airports and the airport stop says “Arrivals”[0.12, 0.31, 0.34, 0.398].
Q3: Can you name the creators of the content depicted in the image? Provide the relevant text and its bounding box for justification.
A3: The creators are “Written by Erin Dealey”[0.133, 0.902, 0.408, 0.938] and “Illustrated by Luciana Navarro Powell”[0.438, 0.905, 0.893, 0.938].
"""


# 10 questions; the responses to q01..q07 contain an answer, q08..q10 do not.
# Each containment was checked by hand against the canonicalization rule.
EVAL_QUESTIONS = [
    ("q01", "What is the title?", ["babies come from airports"], A1_RESPONSE),
    ("q02", "What does the sign say?", ["LOVE YOUR NEIGHBOR"], '"LOVE YOUR NEIGHBOR"[0.114, 0.153, 0.9, 0.616]'),
    ("q03", "Who wrote it?", ["Erin Dealey"], "It was written by erin   dealey."),
    ("q04", "What is the price?", ["3.50"], "The price is (3.50)."),
    ("q05", "Which gate?", ["B12", "gate b12"], "Go to GATE B12!"),
    ("q06", "What word is on the board?", ["Arrivals"], 'The board reads "Arrivals"[0.12, 0.31, 0.34, 0.398]'),
    ("q07", "Year?", ["2019"], "2019"),
    ("q08", "Who illustrated it?", ["Luciana Navarro Powell"], "no text found"),
    ("q09", "What is the price?", ["3.50"], "It costs 350 cents"),
    ("q10", "Which gate?", ["B12"], "Gate B 12"),
]


def eval_records():
    benchmark = [
        {"qid": q, "image": f"images/{q}.png", "question": text, "answers": answers}
        for q, text, answers, _ in EVAL_QUESTIONS
    ]
    benchmark[0]["gt_boxes"] = [list(A1_BOX.as_tuple())]
    responses = [{"qid": q, "response": r} for q, _, _, r in EVAL_QUESTIONS]
    return benchmark, responses


def make_doc(tokens, doc_id="doc", engine="engineA", image="cover.png"):
    return OcrDocument(doc_id, image, 1000, 1000, engine, tuple(OcrToken(t, BBox(*b)) for t, b in tokens))


@pytest.fixture
def paddle_doc():
    return make_doc(PADDLE_TOKENS, "cover-paddle", "PaddleOCR")


@pytest.fixture
def easy_doc():
    return make_doc(EASY_TOKENS, "cover-easy", "EasyOCR")


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, ensure_ascii=False) + "\n")
    return path


# -- acceptance summary ---------------------------------------------------------

_acceptance: list[tuple[str, str]] = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    marker = dict(report.user_properties).get("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _acceptance.append((marker, "PASS" if report.passed else "FAIL"))


@pytest.fixture
def criterion(request, record_property):
    marker = request.node.get_closest_marker("acceptance")
    if marker:
        record_property("criterion", marker.args[0])


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance:
        terminalreporter.write_line(f"{outcome}  {name}")
