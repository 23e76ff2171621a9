"""Pre-training samples, fine-tuning prompts and conversation post-processing."""

from __future__ import annotations

import json
import logging
import random
import re
import statistics
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Sequence

from .alignment import reading_order
from .client import ChatClient, complete_with_retry
from .config import DEFAULT_BANNED_PHRASES, ForgeConfig
from .errors import ForgeError, IngestError, StructureError
from .geometry import BBox, GroundedSpan, format_box, iou, parse_spans, serialize_span, union
from .ocr import OcrDocument, OcrToken
from .templates import Task, TemplateSet, instantiate, pick

logger = logging.getLogger(__name__)

SYSTEM_MESSAGE = (
    "A chat between a curious user and an artificial intelligence assistant. "
    "The assistant gives helpful, detailed, and polite answers to the user's questions."
)
IMAGE_PLACEHOLDER = "<image><Image Embedding></image>"
CONVERSATION = "conversation"
CAPTION_HEADING = "Captions generated by BLIP-2"

DEFAULT_INSTRUCTIONS = """\
Using the captions and OCR results above, write a multi-turn conversation between a user and an assistant about the text that appears in this image.
Put each question on its own line starting with Q1:, Q2:, ... and each answer on its own line starting with A1:, A2:, ...
Ask about what the text says and what it tells us about the image.
Every answer that relies on text in the image must quote that text and give its box as "text"[x_min, y_min, x_max, y_max], copying coordinates from the OCR results or merging the boxes of neighbouring words.
Do not mention OCR tools, captions or these instructions in the conversation."""


@dataclass(frozen=True)
class ConversationTurn:
    role: str
    text: str

    def __post_init__(self) -> None:
        if self.role not in ("user", "assistant"):
            raise ValueError(f"unknown role {self.role!r}")


@dataclass(frozen=True)
class InstructionSample:
    id: str
    image_ref: str
    task: str
    turns: tuple[ConversationTurn, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "turns", tuple(self.turns))
        if not self.turns:
            raise ValueError(f"sample {self.id} has no turns")
        if self.task != CONVERSATION:
            Task(self.task)

    def pairs(self) -> list[tuple[ConversationTurn, ConversationTurn]]:
        check_alternation(self.turns)
        return [(self.turns[i], self.turns[i + 1]) for i in range(0, len(self.turns), 2)]


def check_alternation(turns: Sequence[ConversationTurn]) -> None:
    for i, turn in enumerate(turns):
        expected = "user" if i % 2 == 0 else "assistant"
        if turn.role != expected:
            raise StructureError(f"turn {i} has role {turn.role}, expected {expected}")
    if len(turns) % 2:
        raise StructureError("conversation ends with an unanswered user turn")


def _sample(doc: OcrDocument, task: Task, k: int, question: str, answer: str) -> InstructionSample:
    return InstructionSample(
        f"{doc.id}/{task.value}/{k}",
        doc.image_ref,
        task.value,
        (ConversationTurn("user", question), ConversationTurn("assistant", answer)),
    )


def _serializable(tokens: Iterable[OcrToken]) -> list[OcrToken]:
    kept = []
    for tok in tokens:
        if '"' in tok.text:
            logger.warning("skipping token with a double quote in its text: %r", tok.text)
            continue
        kept.append(tok)
    return kept


def _span_line(tok: OcrToken) -> str:
    return serialize_span(GroundedSpan(tok.text, tok.box))


def build_detection(
    doc: OcrDocument,
    rng: random.Random,
    cap: int | None = None,
    templates: TemplateSet | None = None,
    line_tolerance: float = 0.5,
) -> list[InstructionSample]:
    """One sample per distinct token text: text in the question, every matching box in the answer."""
    ordered = _serializable(reading_order(doc.tokens, line_tolerance))
    by_text: dict[str, list[OcrToken]] = {}
    for tok in ordered:
        by_text.setdefault(tok.text, []).append(tok)
    texts = list(by_text)[:cap] if cap is not None else list(by_text)
    samples = []
    for k, text in enumerate(texts):
        template = pick(Task.DETECTION, rng, templates)
        question = instantiate(template, {"text": text}, Task.DETECTION.placeholders)
        answer = "\n".join(_span_line(t) for t in by_text[text])
        samples.append(_sample(doc, Task.DETECTION, k, question, answer))
    return samples


def build_recognition(
    doc: OcrDocument,
    rng: random.Random,
    cap: int | None = None,
    templates: TemplateSet | None = None,
    line_tolerance: float = 0.5,
) -> list[InstructionSample]:
    """Box in the question, the token text verbatim in the answer."""
    ordered = reading_order(doc.tokens, line_tolerance)
    chosen = ordered[:cap] if cap is not None else ordered
    samples = []
    for k, tok in enumerate(chosen):
        template = pick(Task.RECOGNITION, rng, templates)
        question = instantiate(template, {"box": format_box(tok.box)}, Task.RECOGNITION.placeholders)
        samples.append(_sample(doc, Task.RECOGNITION, k, question, tok.text))
    return samples


def build_spotting(
    doc: OcrDocument,
    rng: random.Random,
    templates: TemplateSet | None = None,
    line_tolerance: float = 0.5,
) -> InstructionSample:
    if not doc.tokens:
        raise ForgeError(f"document {doc.id} has no tokens to spot")
    lines = [_span_line(t) for t in _serializable(reading_order(doc.tokens, line_tolerance))]
    if not lines:
        raise ForgeError(f"document {doc.id} has no serializable tokens")
    question = pick(Task.SPOTTING, rng, templates)
    return _sample(doc, Task.SPOTTING, 0, question, "\n".join(lines))


def task_rng(seed: int, doc_id: str, task: Task) -> random.Random:
    # one stream per (document, task): results do not depend on processing
    # order or on which other tasks are enabled
    return random.Random(f"{seed}:{doc_id}:{task.value}")


def build_document(
    doc: OcrDocument, config: ForgeConfig, templates: TemplateSet | None = None
) -> list[InstructionSample]:
    samples: list[InstructionSample] = []
    if not doc.tokens:
        return samples
    tasks = {Task(t) for t in config.tasks}
    tol = config.line_tolerance
    if Task.DETECTION in tasks:
        rng = task_rng(config.seed, doc.id, Task.DETECTION)
        samples += build_detection(doc, rng, config.detection_cap, templates, tol)
    if Task.RECOGNITION in tasks:
        rng = task_rng(config.seed, doc.id, Task.RECOGNITION)
        samples += build_recognition(doc, rng, config.recognition_cap, templates, tol)
    if Task.SPOTTING in tasks:
        rng = task_rng(config.seed, doc.id, Task.SPOTTING)
        samples.append(build_spotting(doc, rng, templates, tol))
    return samples


@dataclass
class SkippedDocument:
    doc_id: str
    reason: str


def build_pretrain(
    corpus: Iterable[OcrDocument],
    config: ForgeConfig,
    templates: TemplateSet | None = None,
    skipped: list[SkippedDocument] | None = None,
) -> Iterator[InstructionSample]:
    """Stream samples for every enabled task, document by document.

    Documents that fail are logged and appended to ``skipped``. With
    ``config.workers > 1`` documents are built in a thread pool; output order
    is still corpus order.
    """
    if not config.tasks:
        raise ValueError("no tasks enabled")

    def one(doc: OcrDocument) -> list[InstructionSample] | SkippedDocument:
        try:
            return build_document(doc, config, templates)
        except ForgeError as exc:
            return SkippedDocument(doc.id, str(exc))

    if config.workers > 1:
        pool = ThreadPoolExecutor(max_workers=config.workers)
        results: Iterable = pool.map(one, corpus)
    else:
        pool = None
        results = map(one, corpus)
    try:
        for result in results:
            if isinstance(result, SkippedDocument):
                logger.warning("skipping document %s: %s", result.doc_id, result.reason)
                if skipped is not None:
                    skipped.append(result)
                continue
            yield from result
    finally:
        if pool is not None:
            pool.shutdown()


# -- fine-tuning ------------------------------------------------------------


@dataclass(frozen=True)
class PromptPayload:
    image_id: str
    captions: tuple[str, ...]
    ocr_blocks: tuple[tuple[str, tuple[str, ...]], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "captions", tuple(self.captions))
        object.__setattr__(self, "ocr_blocks", tuple((e, tuple(lines)) for e, lines in self.ocr_blocks))


def payload_from_documents(image_id: str, captions: Sequence[str], docs: Sequence[OcrDocument]) -> PromptPayload:
    """Serialize each engine's tokens in the order the engine reported them."""
    blocks = [(doc.engine, tuple(_span_line(t) for t in _serializable(doc.tokens))) for doc in docs]
    return PromptPayload(image_id, tuple(captions), tuple(blocks))


def build_finetune_prompt(payload: PromptPayload, instructions: str = DEFAULT_INSTRUCTIONS) -> str:
    if not payload.captions:
        raise ValueError(f"payload {payload.image_id} has no captions")
    if not payload.ocr_blocks:
        raise ValueError(f"payload {payload.image_id} has no OCR results")
    parts = [CAPTION_HEADING, *payload.captions, ""]
    for engine, lines in payload.ocr_blocks:
        parts += [f"{engine} Results", *lines, ""]
    parts.append(instructions)
    return "\n".join(parts)


def request_conversations(
    payload: PromptPayload,
    client: ChatClient,
    *,
    instructions: str = DEFAULT_INSTRUCTIONS,
    attempts: int = 3,
    backoff: float = 1.0,
    sleep=None,
) -> str:
    messages = [{"role": "user", "content": build_finetune_prompt(payload, instructions)}]
    kwargs = {"sleep": sleep} if sleep is not None else {}
    return complete_with_retry(
        client, messages, request_id=payload.image_id, attempts=attempts, backoff=backoff, **kwargs
    )


def request_many(
    payloads: Sequence[PromptPayload],
    client: ChatClient,
    max_in_flight: int = 4,
    **kwargs,
) -> list[str | ForgeError]:
    """Run requests with at most ``max_in_flight`` outstanding; results keep payload order."""

    def one(payload: PromptPayload) -> str | ForgeError:
        try:
            return request_conversations(payload, client, **kwargs)
        except ForgeError as exc:
            return exc

    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        return list(pool.map(one, payloads))


_TURN_RE = re.compile(
    r"^\s*(?:[*_]{1,2})?(?P<tag>Q\d*|A\d*|USER|ASSISTANT|Question\s*\d*|Answer\s*\d*)(?:[*_]{1,2})?\s*[:：]\s*(?:[*_]{1,2}\s*)?",
    re.IGNORECASE,
)


def parse_conversation(raw: str) -> list[ConversationTurn]:
    """Split ``Q1: ... A1: ...`` (or ``USER:``/``ASSISTANT:``) text into turns.

    Lines without a marker continue the previous turn; text before the first
    marker is dropped.
    """
    turns: list[list[str]] = []
    roles: list[str] = []
    for line in raw.splitlines():
        m = _TURN_RE.match(line)
        if m:
            tag = m.group("tag").lower()
            roles.append("user" if tag[0] in "qu" else "assistant")
            turns.append([line[m.end():].strip()])
        elif turns and line.strip():
            turns[-1].append(line.strip())
    return [ConversationTurn(role, "\n".join(p for p in parts if p)) for role, parts in zip(roles, turns)]


def conversation_sample(image_id: str, image_ref: str, raw: str) -> InstructionSample:
    turns = parse_conversation(raw)
    if not turns:
        raise StructureError(f"no conversation turns found for {image_id}")
    return InstructionSample(image_id, image_ref, CONVERSATION, tuple(turns))


@dataclass
class SanitizeReport:
    removed_phrases: int = 0
    dropped_turn_pairs: int = 0
    invalid_boxes: int = 0
    kept: bool = True


def _phrase_patterns(phrases: Iterable[str]) -> list[re.Pattern]:
    return [re.compile(re.escape(p) + r"\s*[,:;]?\s*", re.IGNORECASE) for p in phrases if p.strip()]


def remove_phrases(text: str, patterns: Sequence[re.Pattern]) -> tuple[str, int]:
    removed = 0
    for pattern in patterns:
        starts_with = bool(pattern.match(text.lstrip()))
        text, n = pattern.subn("", text)
        removed += n
        if n:
            text = re.sub(r"[ \t]{2,}", " ", text).strip()
            if starts_with and text:
                text = text[0].upper() + text[1:]
    return text, removed


def reference_boxes(docs: Iterable[OcrDocument], max_tokens: int = 4, line_tolerance: float = 0.5) -> list[BBox]:
    """Token boxes plus unions of up to ``max_tokens`` consecutive tokens in reading order."""
    boxes = []
    for doc in docs:
        ordered = reading_order(doc.tokens, line_tolerance)
        for i in range(len(ordered)):
            for k in range(1, max_tokens + 1):
                if i + k > len(ordered):
                    break
                boxes.append(union(t.box for t in ordered[i : i + k]))
    return boxes


def sanitize_conversation(
    conv: InstructionSample,
    ocr: Sequence[OcrDocument],
    iou_floor: float = 0.3,
    banned_phrases: Sequence[str] = DEFAULT_BANNED_PHRASES,
    max_union_tokens: int = 4,
) -> tuple[InstructionSample, SanitizeReport]:
    """Strip banned phrases and drop turn pairs whose boxes match nothing in the OCR."""
    pairs = conv.pairs()
    patterns = _phrase_patterns(banned_phrases)
    candidates = reference_boxes(ocr, max_union_tokens)
    report = SanitizeReport()
    kept_turns: list[ConversationTurn] = []
    cleaned: list[ConversationTurn] = []
    for user, assistant in pairs:
        question, n_q = remove_phrases(user.text, patterns)
        answer, n_a = remove_phrases(assistant.text, patterns)
        report.removed_phrases += n_q + n_a
        cleaned += [ConversationTurn("user", question), ConversationTurn("assistant", answer)]
        bad = sum(
            1
            for span, _ in parse_spans(answer)
            if max((iou(span.box, c) for c in candidates), default=0.0) < iou_floor
        )
        if bad:
            report.invalid_boxes += bad
            report.dropped_turn_pairs += 1
            continue
        kept_turns += [ConversationTurn("user", question), ConversationTurn("assistant", answer)]
    report.kept = bool(kept_turns)
    # a sample cannot be empty, so a rejected conversation keeps its cleaned
    # turns and callers filter on report.kept
    turns = kept_turns or cleaned
    return InstructionSample(conv.id, conv.image_ref, conv.task, tuple(turns)), report


def render_training_string(conv: InstructionSample, system_message: str = SYSTEM_MESSAGE) -> str:
    parts = [system_message]
    for k, (user, assistant) in enumerate(conv.pairs()):
        question = f"{IMAGE_PLACEHOLDER} {user.text}" if k == 0 else user.text
        parts.append(f"USER: {question} ASSISTANT: {assistant.text}")
    return " ".join(parts)


@dataclass
class StatsReport:
    """Whitespace-token lengths; subword counts from a model tokenizer will differ."""

    conversations: int = 0
    user_turns: int = 0
    assistant_turns: int = 0
    mean_user_tokens: float | None = None
    mean_assistant_tokens: float | None = None
    per_task: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "conversations": self.conversations,
            "user_turns": self.user_turns,
            "assistant_turns": self.assistant_turns,
            "mean_user_tokens": self.mean_user_tokens,
            "mean_assistant_tokens": self.mean_assistant_tokens,
            "per_task": dict(sorted(self.per_task.items())),
            "tokenizer": "whitespace",
        }


def stats(dataset: Iterable[InstructionSample]) -> StatsReport:
    user_lengths: list[int] = []
    assistant_lengths: list[int] = []
    per_task: Counter[str] = Counter()
    count = 0
    for sample in dataset:
        count += 1
        per_task[sample.task] += 1
        for turn in sample.turns:
            target = user_lengths if turn.role == "user" else assistant_lengths
            target.append(len(turn.text.split()))
    return StatsReport(
        conversations=count,
        user_turns=len(user_lengths),
        assistant_turns=len(assistant_lengths),
        mean_user_tokens=statistics.fmean(user_lengths) if user_lengths else None,
        mean_assistant_tokens=statistics.fmean(assistant_lengths) if assistant_lengths else None,
        per_task=dict(per_task),
    )


# -- dataset files ------------------------------------------------------------


def sample_to_record(sample: InstructionSample) -> dict:
    return {
        "id": sample.id,
        "image": sample.image_ref,
        "task": sample.task,
        "conversations": [{"role": t.role, "text": t.text} for t in sample.turns],
    }


def sample_from_record(record: dict) -> InstructionSample:
    turns = tuple(ConversationTurn(t["role"], t["text"]) for t in record["conversations"])
    return InstructionSample(record["id"], record["image"], record["task"], turns)


def dump_samples(samples: Iterable[InstructionSample], fp: IO[str]) -> int:
    n = 0
    for sample in samples:
        fp.write(json.dumps(sample_to_record(sample), ensure_ascii=False) + "\n")
        n += 1
    return n


def iter_samples(source: Iterable[str]) -> Iterator[InstructionSample]:
    for lineno, line in enumerate(source, start=1):
        if not line.strip():
            continue
        try:
            yield sample_from_record(json.loads(line))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise IngestError(lineno, f"bad dataset record ({exc})") from None
