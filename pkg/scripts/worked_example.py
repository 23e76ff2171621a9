"""Walk the book-cover example end to end: union box, prompt, sanitizing, scoring.

Prints each intermediate artifact so the numbers can be checked by eye.
"""

from groundforge.alignment import align_metadata, reading_order
from groundforge.dataset import (
    build_finetune_prompt,
    conversation_sample,
    payload_from_documents,
    render_training_string,
    sanitize_conversation,
)
from groundforge.evaluation import append_grounding_suffix, contains_answer, grounding_quality
from groundforge.geometry import BBox, format_box, parse_spans, union
from groundforge.ocr import OcrDocument, OcrToken

PADDLE = [
    ("BABIES", (0.084, 0.067, 0.496, 0.190)),
    ("COME", (0.504, 0.049, 0.711, 0.130)),
    ("FROM", (0.150, 0.193, 0.367, 0.270)),
    ("AIRPORTS", (0.350, 0.138, 0.934, 0.298)),
    ("Arrivals=", (0.128, 0.318, 0.381, 0.400)),
    ("Written by Erin Dealey lllustrated by Luciana Navarro Powel", (0.136, 0.909, 0.887, 0.930)),
]
EASY = [
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
COMPLETION = """Q1: Identify the main title displayed in the image.
A1: Based on the PaddleOCR, the main title is “BABIES COME FROM AIRPORTS”[0.084, 0.049, 0.934, 0.298].
Q2: Is there a sign in the background?
A2: The airport stop says “Arrivals”[0.12, 0.31, 0.34, 0.398].
Q3: Is there anything in the top-left corner?
A3: A tiny logo “x”[0, 0, 0.01, 0.01].
"""


def doc(rows, engine):
    return OcrDocument(f"cover-{engine}", "cover.png", 1000, 1000, engine, tuple(OcrToken(t, BBox(*b)) for t, b in rows))


def main() -> None:
    paddle, easy = doc(PADDLE, "PaddleOCR"), doc(EASY, "EasyOCR")

    title = union(t.box for t in paddle.tokens[:4])
    print("title union:", format_box(title))
    print("reading order:", [t.text for t in reading_order(paddle.tokens)])
    for ref in ("BABIES COME FROM AIRPORTS", "Written by Erin Dealey"):
        span = align_metadata(easy, ref)
        print(f"aligned {ref!r} on EasyOCR:", span and format_box(span.box))

    print("\n--- prompt ---")
    print(build_finetune_prompt(payload_from_documents("cover", CAPTIONS, [paddle, easy])))

    conv = conversation_sample("cover", "cover.png", COMPLETION)
    clean, report = sanitize_conversation(conv, [paddle, easy])
    print("\n--- sanitized ---")
    print(report)
    print(render_training_string(clean))

    answer = clean.turns[1].text
    spans = [s for s, _ in parse_spans(answer)]
    print("\n--- scoring ---")
    print(append_grounding_suffix("What is the title of the book?"))
    print("contains answer:", contains_answer(answer, ["babies come from airports"]))
    print("best IoU vs title box:", grounding_quality(spans, [title]))


if __name__ == "__main__":
    main()
