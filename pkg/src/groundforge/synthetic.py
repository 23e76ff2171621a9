"""Reproducible synthetic OCR documents for tests and experiment scripts."""

from __future__ import annotations

import random
import string

from .geometry import BBox, quantize
from .ocr import OcrDocument, OcrToken

WORDS = (
    "annual report revenue growth market share quarterly results product launch "
    "customer service team meeting agenda strategy roadmap budget forecast sales "
    "summary overview welcome thank you questions contact open source cloud data "
    "science learning model training airport arrivals departures gate terminal "
    "babies come from love your neighbor written illustrated by erin dealey"
).split()


def add_ocr_noise(text: str, rng: random.Random, rate: float = 0.1) -> str:
    """Per character, with probability ``rate``, substitute, delete or insert a letter."""
    out = []
    for ch in text:
        if ch != " " and rng.random() < rate:
            op = rng.randrange(3)
            if op == 0:
                out.append(rng.choice(string.ascii_letters))
            elif op == 2:
                out.append(ch + rng.choice(string.ascii_lowercase))
            # op == 1 deletes the character
        else:
            out.append(ch)
    noisy = "".join(out).strip()
    return noisy or text


def random_document(
    rng: random.Random,
    doc_id: str,
    n_tokens: int,
    engine: str = "engineA",
    noise: float = 0.0,
    words_per_token: tuple[int, int] = (1, 2),
    title_prob: float = 0.7,
) -> tuple[OcrDocument, list[str]]:
    """A document laid out as lines of left-to-right tokens.

    With probability ``title_prob`` the first token is a large slide title.
    Returns the document and the clean (pre-noise) token texts in layout order.
    """
    clean, tokens = [], []
    y = rng.uniform(0.02, 0.08)
    x = rng.uniform(0.02, 0.1)
    title = rng.random() < title_prob
    line_h = rng.uniform(0.1, 0.2) if title else rng.uniform(0.03, 0.08)
    for k in range(n_tokens):
        text = " ".join(rng.choice(WORDS) for _ in range(rng.randint(*words_per_token)))
        if rng.random() < 0.3:
            text = text.upper()
        if k == 0 and title:
            width = rng.uniform(0.4, 0.85)
        else:
            width = min(0.05 + 0.018 * len(text), 0.6)
        if x + width > 0.97:
            x = rng.uniform(0.02, 0.1)
            y += line_h + rng.uniform(0.01, 0.04)
            line_h = rng.uniform(0.03, 0.08)
        if y + line_h > 0.99:
            break
        jitter = rng.uniform(-0.004, 0.004)
        top = min(max(y + jitter, 0.0), 1.0)
        box = quantize(BBox(x, top, min(x + width, 1.0), min(top + line_h, 1.0)))
        noisy = add_ocr_noise(text, rng, noise) if noise else text
        clean.append(text)
        tokens.append(OcrToken(noisy, box))
        x += width + rng.uniform(0.01, 0.03)
        if k == 0 and title:
            x = 0.97  # the title gets a line of its own
    return OcrDocument(doc_id, f"images/{doc_id}.png", 1024, 768, engine, tuple(tokens)), clean


def random_corpus(n_docs: int, seed: int = 0, max_tokens: int = 12, noise: float = 0.0) -> list[OcrDocument]:
    rng = random.Random(seed)
    docs = []
    for i in range(n_docs):
        doc, _ = random_document(rng, f"doc{i:04d}", rng.randint(1, max_tokens), noise=noise)
        docs.append(doc)
    return docs
