"""OCR result ingestion, corpus filters and MD5 deduplication."""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Sequence

from .errors import ForgeError, IngestError, InvalidGeometryError
from .geometry import BBox, area, normalize, quantize

logger = logging.getLogger(__name__)

REQUIRED_FIELDS = ("id", "image", "image_width", "image_height", "engine", "pixel_coords", "tokens")


@dataclass(frozen=True)
class OcrToken:
    text: str
    box: BBox
    confidence: float | None = None

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("token text is empty")
        if self.confidence is not None and not 0 <= self.confidence <= 1:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class OcrDocument:
    id: str
    image_ref: str
    width: int
    height: int
    engine: str
    tokens: tuple[OcrToken, ...] = ()

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise InvalidGeometryError(f"document {self.id}: image size must be positive")
        object.__setattr__(self, "tokens", tuple(self.tokens))


def _parse_record(record: object, lineno: int) -> OcrDocument:
    if not isinstance(record, dict):
        raise IngestError(lineno, "record is not an object")
    for name in REQUIRED_FIELDS:
        if name not in record:
            raise IngestError(lineno, f"missing field {name}", name)
    for name in ("id", "image", "engine"):
        if not isinstance(record[name], str):
            raise IngestError(lineno, f"field {name} must be text", name)
    for name in ("image_width", "image_height"):
        value = record[name]
        if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
            raise IngestError(lineno, f"field {name} must be a positive integer", name)
    if not isinstance(record["pixel_coords"], bool):
        raise IngestError(lineno, "field pixel_coords must be a boolean", "pixel_coords")
    if not isinstance(record["tokens"], list):
        raise IngestError(lineno, "field tokens must be a list", "tokens")

    width, height = record["image_width"], record["image_height"]
    tokens = []
    for index, raw in enumerate(record["tokens"]):
        where = f"token {index}"
        if not isinstance(raw, dict):
            raise IngestError(lineno, f"{where}: not an object", "tokens")
        text, coords = raw.get("text"), raw.get("box")
        if not isinstance(text, str) or not text.strip():
            raise IngestError(lineno, f"{where}: missing or empty text", "text")
        if (
            not isinstance(coords, list)
            or len(coords) != 4
            or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in coords)
        ):
            raise IngestError(lineno, f"{where}: box must be a list of 4 numbers", "box")
        try:
            if record["pixel_coords"]:
                box = normalize(coords, width, height)
            else:
                box = quantize(BBox.of(coords))
        except InvalidGeometryError as exc:
            raise IngestError(lineno, f"{where}: {exc}", "box") from None
        confidence = raw.get("confidence")
        if confidence is not None and (
            isinstance(confidence, bool)
            or not isinstance(confidence, (int, float))
            or not 0 <= confidence <= 1
        ):
            raise IngestError(lineno, f"{where}: confidence must be a number in [0, 1]", "confidence")
        tokens.append(OcrToken(text, box, None if confidence is None else float(confidence)))
    return OcrDocument(record["id"], record["image"], width, height, record["engine"], tuple(tokens))


def iter_ocr(source: Iterable[str]) -> Iterator[OcrDocument]:
    seen: set[str] = set()
    for lineno, line in enumerate(source, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise IngestError(lineno, f"invalid JSON ({exc.msg})") from None
        doc = _parse_record(record, lineno)
        if doc.id in seen:
            raise IngestError(lineno, f"duplicate document id {doc.id!r}", "id")
        seen.add(doc.id)
        yield doc


def load_ocr(source: Iterable[str]) -> list[OcrDocument]:
    """Read line-delimited OCR records; pixel boxes are normalized on the way in."""
    return list(iter_ocr(source))


def document_to_record(doc: OcrDocument) -> dict:
    tokens = []
    for tok in doc.tokens:
        entry: dict = {"text": tok.text, "box": list(tok.box.as_tuple())}
        if tok.confidence is not None:
            entry["confidence"] = tok.confidence
        tokens.append(entry)
    return {
        "id": doc.id,
        "image": doc.image_ref,
        "image_width": doc.width,
        "image_height": doc.height,
        "engine": doc.engine,
        "pixel_coords": False,
        "tokens": tokens,
    }


def dump_ocr(docs: Iterable[OcrDocument], fp: IO[str]) -> None:
    for doc in docs:
        fp.write(json.dumps(document_to_record(doc), ensure_ascii=False) + "\n")


def passes_area_filter(doc: OcrDocument, threshold: float = 0.05) -> bool:
    """True when some single token box covers at least ``threshold`` of the image."""
    return any(area(tok.box) >= threshold for tok in doc.tokens)


def content_hash(data: bytes) -> str:
    return hashlib.md5(data).hexdigest()


def hash_file(path: str | os.PathLike, chunk_size: int = 1 << 20) -> str:
    digest = hashlib.md5()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(chunk_size), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class HashResult:
    id: str
    image_ref: str
    digest: str | None
    error: str | None = None


def hash_files(items: Iterable[tuple[str, str]]) -> list[HashResult]:
    """Hash ``(id, path)`` pairs; unreadable files are reported, not raised."""
    results = []
    for item_id, path in items:
        try:
            results.append(HashResult(item_id, path, hash_file(path)))
        except OSError as exc:
            logger.warning("cannot hash %s (%s): %s", item_id, path, exc)
            results.append(HashResult(item_id, path, None, str(exc)))
    return results


@dataclass(frozen=True)
class DedupManifest:
    entries: tuple[tuple[str, str, str], ...]
    unique_ids: tuple[str, ...]
    duplicate_of: dict[str, str] = field(default_factory=dict)

    def records(self) -> Iterator[dict]:
        kept = set(self.unique_ids)
        for item_id, digest, image in self.entries:
            yield {
                "id": item_id,
                "digest": digest,
                "image": image,
                "kept": item_id in kept,
                "duplicate_of": self.duplicate_of.get(item_id),
            }


def dedup(entries: Iterable[Sequence[str]]) -> DedupManifest:
    """Keep the first id seen for each digest.

    ``entries`` holds ``(id, digest)`` or ``(id, digest, image)`` tuples.
    """
    rows = []
    seen_ids: set[str] = set()
    first_by_digest: dict[str, str] = {}
    kept: list[str] = []
    dropped: dict[str, str] = {}
    for entry in entries:
        item_id, digest = entry[0], entry[1]
        image = entry[2] if len(entry) > 2 else ""
        if item_id in seen_ids:
            raise ForgeError(f"duplicate id {item_id!r} in dedup input")
        seen_ids.add(item_id)
        rows.append((item_id, digest, image))
        if digest in first_by_digest:
            dropped[item_id] = first_by_digest[digest]
        else:
            first_by_digest[digest] = item_id
            kept.append(item_id)
    return DedupManifest(tuple(rows), tuple(kept), dropped)


def load_manifest(source: Iterable[str]) -> set[str]:
    """Ids marked ``kept`` in a dedup manifest."""
    kept = set()
    for lineno, line in enumerate(source, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise IngestError(lineno, f"invalid JSON ({exc.msg})") from None
        if not isinstance(record, dict) or "id" not in record or "kept" not in record:
            raise IngestError(lineno, "manifest record needs id and kept")
        if record["kept"]:
            kept.add(record["id"])
    return kept

