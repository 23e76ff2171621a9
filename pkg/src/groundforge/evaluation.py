"""Containment accuracy and box diagnostics for grounded VQA answers."""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import ForgeError, IngestError
from .geometry import BBox, GroundedSpan, iou, parse_spans, quantize

GROUNDING_SUFFIX = "Support your reasoning with the coordinates [x_min, y_min, x_max, y_max]"

_EDGE_CHARS = ".,;:!?\"'()[]"


@dataclass(frozen=True)
class BenchmarkRecord:
    qid: str
    image_ref: str
    question: str
    answers: tuple[str, ...]
    gt_boxes: tuple[BBox, ...] | None = None
    width: int | None = None
    height: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "answers", tuple(self.answers))
        if not self.answers:
            raise ValueError(f"question {self.qid} has no answers")
        if self.gt_boxes is not None:
            object.__setattr__(self, "gt_boxes", tuple(self.gt_boxes))


@dataclass(frozen=True)
class ModelResponse:
    qid: str
    text: str


@dataclass(frozen=True)
class QuestionResult:
    qid: str
    correct: bool
    spans: tuple[GroundedSpan, ...]
    best_iou: float | None
    answered: bool = True
    has_gt: bool = False


@dataclass
class EvalReport:
    per_question: list[QuestionResult] = field(default_factory=list)

    @property
    def total(self) -> int:
        return len(self.per_question)

    @property
    def correct(self) -> int:
        return sum(r.correct for r in self.per_question)

    @property
    def accuracy(self) -> float:
        return self.correct / self.total if self.total else 0.0

    @property
    def span_emission_rate(self) -> float:
        return sum(bool(r.spans) for r in self.per_question) / self.total if self.total else 0.0

    @property
    def mean_best_iou(self) -> float | None:
        # questions with ground-truth boxes but no emitted box count as 0
        scored = [r.best_iou or 0.0 for r in self.per_question if r.has_gt]
        return statistics.fmean(scored) if scored else None

    def to_dict(self) -> dict:
        return {
            "aggregate": {
                "total": self.total,
                "correct": self.correct,
                "accuracy": self.accuracy,
                "span_emission_rate": self.span_emission_rate,
                "mean_best_iou": self.mean_best_iou,
            },
            "per_question": [
                {
                    "qid": r.qid,
                    "correct": r.correct,
                    "answered": r.answered,
                    "spans": [
                        {"text": s.text, "box": list(s.box.as_tuple())}
                        for s in r.spans
                    ],
                    "best_iou": r.best_iou,
                    "has_gt": r.has_gt,
                }
                for r in self.per_question
            ],
        }


def append_grounding_suffix(question: str) -> str:
    if not question.strip():
        raise ValueError("question is empty")
    if question.rstrip().endswith(GROUNDING_SUFFIX):
        return question
    return f"{question} {GROUNDING_SUFFIX}"


def _strip_edges(word: str) -> str:
    return word.strip(_EDGE_CHARS)


def canonicalize_answer(text: str) -> str:
    """Casefold, collapse whitespace, strip ``.,;:!?"'()[]`` from word edges only."""
    words = (_strip_edges(w) for w in text.casefold().split())
    return " ".join(w for w in words if w)


def contains_answer(response: str, answers: Sequence[str]) -> bool:
    if not answers:
        raise ValueError("no ground-truth answers given")
    haystack = canonicalize_answer(response)
    for answer in answers:
        needle = canonicalize_answer(answer)
        if needle and needle in haystack:
            return True
    return False


def grounding_quality(spans: Sequence[GroundedSpan], gt_boxes: Sequence[BBox]) -> float | None:
    if not spans or not gt_boxes:
        return None
    return max(iou(s.box, g) for s in spans for g in gt_boxes)


def evaluate(benchmark: Sequence[BenchmarkRecord], responses: Sequence[ModelResponse]) -> EvalReport:
    """Score responses; questions without a response count as wrong."""
    records = {}
    for rec in benchmark:
        if rec.qid in records:
            raise ForgeError(f"duplicate benchmark qid {rec.qid!r}")
        records[rec.qid] = rec
    by_qid: dict[str, ModelResponse] = {}
    duplicates = []
    for resp in responses:
        if resp.qid in by_qid:
            duplicates.append(resp.qid)
        by_qid[resp.qid] = resp
    if duplicates:
        raise ForgeError(f"duplicate response qid(s): {', '.join(sorted(set(duplicates)))}")
    unknown = sorted(set(by_qid) - set(records))
    if unknown:
        raise ForgeError(f"responses for unknown qid(s): {', '.join(unknown)}")

    report = EvalReport()
    for qid in sorted(records):
        rec = records[qid]
        resp = by_qid.get(qid)
        has_gt = bool(rec.gt_boxes)
        if resp is None:
            report.per_question.append(QuestionResult(qid, False, (), None, answered=False, has_gt=has_gt))
            continue
        spans = tuple(span for span, _ in parse_spans(resp.text))
        report.per_question.append(
            QuestionResult(
                qid,
                contains_answer(resp.text, rec.answers),
                spans,
                grounding_quality(spans, rec.gt_boxes or ()),
                has_gt=has_gt,
            )
        )
    return report


def _load_lines(source: Iterable[str]) -> Iterable[tuple[int, dict]]:
    for lineno, line in enumerate(source, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise IngestError(lineno, f"invalid JSON ({exc.msg})") from None
        if not isinstance(record, dict):
            raise IngestError(lineno, "record is not an object")
        yield lineno, record


def load_benchmark(source: Iterable[str]) -> list[BenchmarkRecord]:
    out = []
    for lineno, rec in _load_lines(source):
        for name in ("qid", "image", "question", "answers"):
            if name not in rec:
                raise IngestError(lineno, f"missing field {name}", name)
        answers = rec["answers"]
        if isinstance(answers, str):
            answers = [answers]
        if not isinstance(answers, list) or not answers or not all(isinstance(a, str) for a in answers):
            raise IngestError(lineno, "answers must be a non-empty list of text", "answers")
        boxes = None
        if rec.get("gt_boxes") is not None:
            try:
                boxes = tuple(quantize(BBox.of(b)) for b in rec["gt_boxes"])
            except (ValueError, TypeError) as exc:
                raise IngestError(lineno, f"bad gt_boxes ({exc})", "gt_boxes") from None
        out.append(
            BenchmarkRecord(
                str(rec["qid"]), rec["image"], rec["question"], tuple(answers), boxes,
                rec.get("width"), rec.get("height"),
            )
        )
    return out


def load_responses(source: Iterable[str]) -> list[ModelResponse]:
    out = []
    for lineno, rec in _load_lines(source):
        for name in ("qid", "response"):
            if name not in rec:
                raise IngestError(lineno, f"missing field {name}", name)
        if not isinstance(rec["response"], str):
            raise IngestError(lineno, "response must be text", "response")
        out.append(ModelResponse(str(rec["qid"]), rec["response"]))
    return out
