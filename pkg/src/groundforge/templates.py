"""Instruction template bank for the detection, recognition and spotting tasks."""

from __future__ import annotations

import enum
import json
import random
import re
import warnings
from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Mapping

from .errors import IngestError, TemplateError

TEXT_MARKER = "<text>"
BOX_MARKER = "[xmin, ymin, xmax, ymax]"
MARKERS = {"text": TEXT_MARKER, "box": BOX_MARKER}


class Task(str, enum.Enum):
    DETECTION = "detection"
    RECOGNITION = "recognition"
    SPOTTING = "spotting"

    @property
    def placeholders(self) -> tuple[str, ...]:
        """Markers that must be bound for this task.

        Detection and spotting templates also print ``[xmin, ymin, xmax, ymax]``,
        but there it describes the expected answer format and stays literal.
        """
        return {"detection": ("text",), "recognition": ("box",), "spotting": ()}[self.value]


_DETECTION = (
    "Can you furnish the bounding box coordinates [xmin, ymin, xmax, ymax] for the text <text> in the image?",
    "Please supply the coordinates [xmin, ymin, xmax, ymax] for the text <text> within the image.",
    "Could you kindly provide the bounding box or coordinates [xmin, ymin, xmax, ymax] for the text <text> in the image?",
    "I would like to know the coordinates [xmin, ymin, xmax, ymax] for the text <text> in the image, please.",
    "Please identify the bounding box coordinates [xmin, ymin, xmax, ymax] for the text <text> within the image.",
    "Can you please give me the coordinates [xmin, ymin, xmax, ymax] for the text <text> in the image?",
    "Kindly provide the bounding box coordinates [xmin, ymin, xmax, ymax] for the text <text> within the image.",
    "Please retrieve the coordinates [xmin, ymin, xmax, ymax] for the text <text> in the image.",
    "I'm looking for the bounding box coordinates [xmin, ymin, xmax, ymax] for the text <text> in the image, could you provide them?",
    "Please locate and share the bounding box coordinates [xmin, ymin, xmax, ymax] for the text <text> within the image.",
)

_RECOGNITION = (
    "Please recognize and supply the text enclosed within the given bounding box [xmin, ymin, xmax, ymax].",
    "Can you identify and provide the text that falls within the specified coordinates [xmin, ymin, xmax, ymax]?",
    "I'd like you to detect and furnish the text contained within the provided bounding box [xmin, ymin, xmax, ymax].",
    "Could you please extract and share the text within the defined coordinates [xmin, ymin, xmax, ymax]?",
    "Please locate and provide the text that is encompassed by the given bounding box [xmin, ymin, xmax, ymax].",
    "Can you recognize and output the text enclosed within the specified coordinates [xmin, ymin, xmax, ymax]?",
    "I'm looking for you to identify and deliver the text found within the provided bounding box [xmin, ymin, xmax, ymax].",
    "Could you extract and share the text within the defined coordinates [xmin, ymin, xmax, ymax], if available?",
    "Please recognize and provide the text contained within the specified bounding box [xmin, ymin, xmax, ymax].",
    "Can you identify and furnish the text that falls within the provided coordinates [xmin, ymin, xmax, ymax]?",
)

_SPOTTING = (
    "Could you locate the text in the image and furnish the coordinates [xmin, ymin, xmax, ymax] for each text block?",
    "Please recognize all the text within the image and supply the coordinates [xmin, ymin, xmax, ymax] for each text element.",
    "Can you identify and extract all the text from the image, and include the coordinates [xmin, ymin, xmax, ymax] for each text block?",
    "I would like you to recognize the text within the image and provide the bounding box [xmin, ymin, xmax, ymax] for each piece of text.",
    "Kindly identify and extract text from the image, and supply the coordinates [xmin, ymin, xmax, ymax] for each text portion.",
    "Can you recognize all the text present in the image and provide the corresponding bounding boxes or coordinates [xmin, ymin, xmax, ymax]?",
    "I'm looking for you to detect and list all text within the image, accompanied by their bounding box coordinates [xmin, ymin, xmax, ymax].",
    "Please analyze the image for text, and for each text segment, provide the bounding box coordinates [xmin, ymin, xmax, ymax].",
    "I'd appreciate it if you could identify and provide the coordinates [xmin, ymin, xmax, ymax] for all text found in the image.",
    "Kindly pinpoint the text in the image and provide the coordinates [xmin, ymin, xmax, ymax] for each text block.",
)


@dataclass(frozen=True)
class TemplateSet:
    by_task: Mapping[Task, tuple[str, ...]]

    def __post_init__(self) -> None:
        frozen = {Task(k): tuple(v) for k, v in self.by_task.items()}
        for task in Task:
            templates = frozen.get(task, ())
            if not templates:
                raise TemplateError(f"no templates for task {task.value}")
            for name in task.placeholders:
                missing = [t for t in templates if MARKERS[name] not in t]
                if missing:
                    raise TemplateError(f"{task.value} template lacks {MARKERS[name]}: {missing[0]!r}")
        object.__setattr__(self, "by_task", MappingProxyType(frozen))

    def __getitem__(self, task: Task | str) -> tuple[str, ...]:
        return self.by_task[Task(task)]

    def extended(self, extra: Iterable[tuple[Task | str, str]]) -> "TemplateSet":
        merged = {task: list(templates) for task, templates in self.by_task.items()}
        for task, template in extra:
            if template not in merged[Task(task)]:
                merged[Task(task)].append(template)
        return TemplateSet(merged)


_BUILTIN = TemplateSet(
    {Task.DETECTION: _DETECTION, Task.RECOGNITION: _RECOGNITION, Task.SPOTTING: _SPOTTING}
)


def builtin_templates() -> TemplateSet:
    return _BUILTIN


def load_template_extensions(source: Iterable[str], base: TemplateSet | None = None) -> TemplateSet:
    """Add templates from ``{"task": ..., "template": ...}`` lines to ``base``."""
    extra = []
    for lineno, line in enumerate(source, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            task = Task(record["task"])
            template = record["template"]
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise IngestError(lineno, f"bad template record ({exc})") from None
        if not isinstance(template, str) or not template.strip():
            raise IngestError(lineno, "template must be non-empty text", "template")
        extra.append((task, template))
    try:
        return (base or _BUILTIN).extended(extra)
    except TemplateError as exc:
        raise IngestError(0, str(exc)) from None


def instantiate(
    template: str,
    bindings: Mapping[str, str],
    placeholders: Iterable[str] | None = None,
) -> str:
    """Fill ``<text>`` / ``[xmin, ymin, xmax, ymax]`` markers.

    ``bindings`` is keyed by placeholder name (``"text"``, ``"box"``).
    ``placeholders`` limits which markers count as slots; by default every
    marker present in the template must be bound.
    """
    names = tuple(placeholders) if placeholders is not None else tuple(
        name for name, marker in MARKERS.items() if marker in template
    )
    unknown = set(bindings) - set(MARKERS)
    if unknown:
        raise TemplateError(f"unknown placeholder name(s): {', '.join(sorted(unknown))}")
    for name in names:
        if MARKERS[name] in template and name not in bindings:
            raise TemplateError(f"unresolved placeholder {MARKERS[name]}")
    unused = [n for n in bindings if n not in names or MARKERS[n] not in template]
    if unused:
        warnings.warn(f"unused binding(s): {', '.join(unused)}", stacklevel=2)
    active = {MARKERS[n]: bindings[n] for n in names if n in bindings}
    if not active:
        return template
    # single pass, so substituted text is never re-scanned for markers
    pattern = re.compile("|".join(re.escape(m) for m in active))
    return pattern.sub(lambda m: active[m.group(0)], template)


def pick(task: Task | str, rng: random.Random, templates: TemplateSet | None = None) -> str:
    choices = (templates or _BUILTIN)[task]
    return choices[rng.randrange(len(choices))]
