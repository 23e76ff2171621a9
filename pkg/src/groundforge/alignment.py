"""Reading order for OCR tokens and fuzzy alignment of metadata strings.

Metadata such as a book title or author line rarely matches a single OCR
token: engines split titles into words and misread letters. ``align_metadata``
searches runs of tokens in reading order (with a few skips allowed) for the
one whose text is closest to the reference, and returns the union of their
boxes.
"""

from __future__ import annotations

import statistics
import unicodedata
from typing import Sequence

from .geometry import GroundedSpan, union
from .ocr import OcrDocument, OcrToken


def levenshtein(a: str, b: str) -> int:
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(
                min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + (ca != cb))
            )
        previous = current
    return previous[-1]


def normalized_edit_distance(a: str, b: str) -> float:
    if not a and not b:
        return 0.0
    return levenshtein(a, b) / max(len(a), len(b))


def _is_punct(ch: str) -> bool:
    # punctuation and symbols, so OCR residue like "Arrivals=" loses the "="
    return unicodedata.category(ch)[0] in "PS"


def _strip_punct(word: str) -> str:
    lo, hi = 0, len(word)
    while lo < hi and _is_punct(word[lo]):
        lo += 1
    while hi > lo and _is_punct(word[hi - 1]):
        hi -= 1
    return word[lo:hi]


def canonical_words(text: str) -> list[str]:
    words = (_strip_punct(w) for w in text.casefold().split())
    return [w for w in words if w]


def canonicalize(text: str) -> str:
    """Casefold, collapse whitespace and strip punctuation from word edges."""
    return " ".join(canonical_words(text))


def reading_order(tokens: Sequence[OcrToken], line_tolerance: float = 0.5) -> list[OcrToken]:
    """Order tokens top-to-bottom, then left-to-right within a line.

    Tokens are visited by top edge. A token joins the current line when its
    vertical center lies within ``line_tolerance`` times the line's median
    token height of the line's mean center; otherwise it starts a new line.
    """
    visit = sorted(range(len(tokens)), key=lambda i: (tokens[i].box.y_min, tokens[i].box.x_min, i))
    lines: list[list[int]] = []
    centers: list[float] = []
    heights: list[float] = []
    for i in visit:
        box = tokens[i].box
        if lines:
            line_center = statistics.fmean(centers)
            if abs(box.center_y - line_center) <= line_tolerance * statistics.median(heights):
                lines[-1].append(i)
                centers.append(box.center_y)
                heights.append(box.height)
                continue
        lines.append([i])
        centers, heights = [box.center_y], [box.height]
    # lines were opened in top-edge order, so only the within-line sort remains
    ordered = []
    for line in lines:
        line.sort(key=lambda i: (tokens[i].box.x_min, tokens[i].box.y_min, i))
        ordered.extend(tokens[i] for i in line)
    return ordered


def align_metadata(
    doc: OcrDocument,
    reference: str,
    max_gap: int = 2,
    max_norm_edit: float = 0.3,
    line_tolerance: float = 0.5,
) -> GroundedSpan | None:
    """Locate ``reference`` among the document's tokens.

    Candidates are token runs in reading order that may skip up to ``max_gap``
    tokens in total. The candidate with the lowest normalized edit distance to
    the reference wins; ties go to fewer tokens, then the earliest start, then
    the lexicographically smallest index sequence. Returns ``None`` when the
    best distance exceeds ``max_norm_edit``.
    """
    if not reference.strip():
        raise ValueError("reference text is empty")
    target = canonicalize(reference)
    if not target:
        return None
    tokens = reading_order(doc.tokens, line_tolerance)
    match = best_alignment([canonicalize(t.text) for t in tokens], target, max_gap, max_norm_edit)
    if match is None:
        return None
    _, indices = match
    return GroundedSpan(reference, union(tokens[i].box for i in indices))


def best_alignment(
    pieces: Sequence[str], target: str, max_gap: int, max_norm_edit: float
) -> tuple[float, tuple[int, ...]] | None:
    """Search token runs over canonical ``pieces`` for the closest match to ``target``."""
    best: tuple[float, int, int, tuple[int, ...]] | None = None
    target_len = len(target)

    def visit(indices: list[int], text: str, gaps_left: int) -> None:
        nonlocal best
        # appending tokens never shortens the text, and a text longer than the
        # target is at least (len - target_len) / len away from it
        if len(text) > target_len and (len(text) - target_len) / len(text) > max_norm_edit:
            return
        dist = normalized_edit_distance(text, target)
        key = (dist, len(indices), indices[0], tuple(indices))
        if best is None or key < best:
            best = key
        last = indices[-1]
        for skip in range(gaps_left + 1):
            nxt = last + 1 + skip
            if nxt >= len(pieces):
                break
            piece = pieces[nxt]
            joined = f"{text} {piece}" if text and piece else text or piece
            indices.append(nxt)
            visit(indices, joined, gaps_left - skip)
            indices.pop()

    for start in range(len(pieces)):
        visit([start], pieces[start], max_gap)

    if best is None or best[0] > max_norm_edit:
        return None
    return best[0], best[3]
