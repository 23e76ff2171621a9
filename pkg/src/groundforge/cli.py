"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 input or format error, 3 external
service error. Outputs are written to a temporary file and renamed into place
only when the command succeeds.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
import tempfile
from pathlib import Path
from typing import Any, Iterator, Sequence

from . import __version__
from .client import HttpChatClient, StubChatClient
from .config import ForgeConfig, load_config
from .dataset import (
    build_finetune_prompt,
    build_pretrain,
    conversation_sample,
    dump_samples,
    iter_samples,
    payload_from_documents,
    render_training_string,
    request_many,
    sanitize_conversation,
    stats,
)
from .errors import ClientConfigError, ForgeError, IngestError, StructureError, TransportError
from .evaluation import append_grounding_suffix, evaluate, load_benchmark, load_responses
from .ocr import OcrDocument, dedup, hash_files, load_manifest, load_ocr, passes_area_filter
from .overlay import emit_overlay
from .templates import builtin_templates, load_template_extensions


EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_SERVICE = 0, 1, 2, 3
_DEFAULTS = ForgeConfig()


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with status 2
        raise UsageError(f"{self.prog}: {message}")


@contextlib.contextmanager
def atomic_output(path: str | os.PathLike) -> Iterator:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            yield fh
        os.replace(tmp, target)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def _read_lines(path: str) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return fh.readlines()


def _write_json(path: str, payload: Any) -> None:
    with atomic_output(path) as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


def _effective_config(args: argparse.Namespace) -> ForgeConfig:
    base = load_config(args.config) if getattr(args, "config", None) else ForgeConfig()
    overrides = {
        key: getattr(args, key)
        for key in ("seed", "min_area", "tasks", "detection_cap", "recognition_cap", "workers",
                    "templates", "iou_floor", "banned_phrases", "attempts", "max_in_flight", "model",
                    "temperature")
        if getattr(args, key, None) is not None
    }
    return base.merged(overrides)


def _header(command: str, config: ForgeConfig) -> None:
    print(f"# groundforge {__version__} {command} seed={config.seed} config={config.digest()}", file=sys.stderr)


def _templates(config: ForgeConfig):
    if not config.templates:
        return builtin_templates()
    return load_template_extensions(_read_lines(config.templates))


# -- subcommands --------------------------------------------------------------


def cmd_pretrain(args: argparse.Namespace) -> int:
    config = _effective_config(args)
    if not config.tasks:
        raise UsageError("pretrain needs at least one task")
    _header("pretrain", config)
    docs = load_ocr(_read_lines(args.ocr))
    if args.manifest:
        kept_ids = load_manifest(_read_lines(args.manifest))
        docs = [d for d in docs if d.id in kept_ids]
    total = len(docs)
    docs = [d for d in docs if passes_area_filter(d, config.min_area)]
    templates = _templates(config)
    skipped: list = []
    with atomic_output(args.out) as fh:
        written = dump_samples(build_pretrain(docs, config, templates, skipped), fh)
    _write_json(
        f"{args.out}.meta.json",
        {
            "command": "pretrain",
            "config": config.to_dict(),
            "config_digest": config.digest(),
            "documents_in": total,
            "documents_after_filter": len(docs),
            "documents_skipped": [s.doc_id for s in skipped],
            "samples": written,
        },
    )
    print(f"{written} samples from {len(docs)}/{total} documents -> {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_dedup(args: argparse.Namespace) -> int:
    items: list[tuple[str, str]] = []
    if args.list:
        for lineno, line in enumerate(_read_lines(args.list), start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                items.append((str(record["id"]), record["image"]))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise IngestError(lineno, f"bad list record ({exc})") from None
    items += [(path, path) for path in args.files]
    if not items:
        raise UsageError("dedup needs --list or at least one file")
    results = hash_files(items)
    failed = [r for r in results if r.digest is None]
    for r in failed:
        print(f"error: {r.id}: {r.error}", file=sys.stderr)
    manifest = dedup((r.id, r.digest, r.image_ref) for r in results if r.digest is not None)
    with atomic_output(args.out) as fh:
        for record in manifest.records():
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    print(
        f"{len(manifest.unique_ids)} kept, {len(manifest.duplicate_of)} duplicates, {len(failed)} unreadable",
        file=sys.stderr,
    )
    return EXIT_OK


def _load_captions(path: str) -> list[tuple[int, dict]]:
    out = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise IngestError(lineno, f"invalid JSON ({exc.msg})") from None
        for name in ("image_id", "image", "captions"):
            if name not in record:
                raise IngestError(lineno, f"missing field {name}", name)
        if not isinstance(record["captions"], list) or not record["captions"]:
            raise IngestError(lineno, "captions must be a non-empty list", "captions")
        out.append((lineno, record))
    return out


def _docs_by_image(docs: Sequence[OcrDocument]) -> dict[str, list[OcrDocument]]:
    grouped: dict[str, list[OcrDocument]] = {}
    for doc in docs:
        grouped.setdefault(doc.image_ref, []).append(doc)
    return grouped


def cmd_finetune_prompts(args: argparse.Namespace) -> int:
    config = _effective_config(args)
    _header("finetune-prompts", config)
    grouped = _docs_by_image(load_ocr(_read_lines(args.ocr)))
    payloads, images = [], []
    for lineno, record in _load_captions(args.captions):
        docs = grouped.get(record["image"], [])
        if not docs:
            raise IngestError(lineno, f"no OCR results for image {record['image']}", "image")
        payloads.append(payload_from_documents(str(record["image_id"]), record["captions"], docs))
        images.append(record["image"])

    completions = None
    if args.request:
        if not args.completions_out:
            raise UsageError("--request needs --completions-out")
        if args.stub:
            client = StubChatClient.from_file(args.stub)
        else:
            client = HttpChatClient.from_env(model=config.model, temperature=config.temperature)
        completions = request_many(
            payloads, client, max_in_flight=config.max_in_flight,
            attempts=config.attempts, backoff=config.backoff,
        )
        failures = [c for c in completions if isinstance(c, Exception)]
        if failures:
            for payload, c in zip(payloads, completions):
                if isinstance(c, Exception):
                    print(f"error: {payload.image_id}: {c}", file=sys.stderr)
            raise TransportError(f"{len(failures)} of {len(payloads)} requests failed")

    with atomic_output(args.out) as fh:
        for payload, image in zip(payloads, images):
            record = {"image_id": payload.image_id, "image": image, "prompt": build_finetune_prompt(payload)}
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    if completions is not None:
        with atomic_output(args.completions_out) as fh:
            for payload, image, text in zip(payloads, images, completions):
                record = {"image_id": payload.image_id, "image": image, "completion": text}
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    return EXIT_OK


def cmd_finetune_build(args: argparse.Namespace) -> int:
    config = _effective_config(args)
    _header("finetune-build", config)
    grouped = _docs_by_image(load_ocr(_read_lines(args.ocr)))
    samples, reports = [], []
    for lineno, line in enumerate(_read_lines(args.completions), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            image_id, image, raw = str(record["image_id"]), record["image"], record["completion"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise IngestError(lineno, f"bad completion record ({exc})") from None
        try:
            conv = conversation_sample(image_id, image, raw)
            clean, report = sanitize_conversation(
                conv, grouped.get(image, []), config.iou_floor, config.banned_phrases, config.max_union_tokens
            )
        except StructureError as exc:
            reports.append({"id": image_id, "kept": False, "error": str(exc)})
            continue
        reports.append({"id": image_id, **vars(report)})
        if report.kept:
            samples.append(clean)
    with atomic_output(args.out) as fh:
        dump_samples(samples, fh)
    if args.report:
        with atomic_output(args.report) as fh:
            for r in reports:
                fh.write(json.dumps(r, ensure_ascii=False) + "\n")
    print(f"{len(samples)}/{len(reports)} conversations kept -> {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    benchmark = load_benchmark(_read_lines(args.benchmark))
    responses = load_responses(_read_lines(args.responses))
    report = evaluate(benchmark, responses)
    _write_json(args.report, report.to_dict())
    if args.overlay_dir:
        by_qid = {r.qid: r for r in report.per_question}
        for rec in benchmark:
            if not rec.width or not rec.height:
                continue
            svg = emit_overlay(rec.image_ref, rec.width, rec.height, by_qid[rec.qid].spans, rec.gt_boxes)
            safe = "".join(c if c.isalnum() or c in "-_." else "_" for c in rec.qid)
            with atomic_output(Path(args.overlay_dir) / f"{safe}.svg") as fh:
                fh.write(svg)
    print(f"accuracy {report.accuracy:.4f} ({report.correct}/{report.total})", file=sys.stderr)
    return EXIT_OK


def cmd_questions(args: argparse.Namespace) -> int:
    benchmark = load_benchmark(_read_lines(args.benchmark))
    with atomic_output(args.out) as fh:
        for rec in benchmark:
            record = {"qid": rec.qid, "image": rec.image_ref, "question": append_grounding_suffix(rec.question)}
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    return EXIT_OK


def cmd_render(args: argparse.Namespace) -> int:
    with atomic_output(args.out) as fh:
        for sample in iter_samples(_read_lines(args.dataset)):
            fh.write(json.dumps({"id": sample.id, "text": render_training_string(sample)}, ensure_ascii=False) + "\n")
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    report = stats(iter_samples(_read_lines(args.dataset)))
    _write_json(args.out, report.to_dict())
    return EXIT_OK


# -- parser ------------------------------------------------------------------------


def _add_config_flags(p: argparse.ArgumentParser, *names: str) -> None:
    p.add_argument("--config", help="flat JSON file of config values; flags override it (default: none)")
    d = _DEFAULTS
    specs = {
        "seed": (("--seed",), dict(type=int, help=f"random seed for template selection (default: {d.seed})")),
        "min_area": (("--min-area",), dict(type=float, help=f"keep documents with a token covering at least this image fraction (default: {d.min_area})")),
        "tasks": (("--tasks",), dict(help=f"comma-separated subset of detection,recognition,spotting (default: {','.join(d.tasks)})")),
        "detection_cap": (("--detection-cap",), dict(type=int, help=f"distinct texts per document for detection (default: {d.detection_cap})")),
        "recognition_cap": (("--recognition-cap",), dict(type=int, help=f"tokens per document for recognition (default: {d.recognition_cap})")),
        "workers": (("--workers",), dict(type=int, help=f"parallel document workers (default: {d.workers})")),
        "templates": (("--templates",), dict(help="JSONL template extension file added to the built-in bank (default: none)")),
        "iou_floor": (("--iou-floor",), dict(type=float, help=f"minimum IoU of an answer box against OCR boxes (default: {d.iou_floor})")),
        "banned_phrases": (("--banned-phrases",), dict(help=f"comma-separated phrases to delete (default: {','.join(d.banned_phrases)})")),
        "attempts": (("--attempts",), dict(type=int, help=f"request attempts per prompt (default: {d.attempts})")),
        "max_in_flight": (("--max-in-flight",), dict(type=int, help=f"concurrent requests (default: {d.max_in_flight})")),
        "model": (("--model",), dict(help=f"model name sent to the chat service (default: {d.model})")),
        "temperature": (("--temperature",), dict(type=float, help=f"sampling temperature (default: {d.temperature})")),
    }
    for name in names:
        flags, kwargs = specs[name]
        p.add_argument(*flags, dest=name, default=None, **kwargs)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="groundforge", description="Grounded instruction data construction and evaluation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr (default: off)")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("pretrain", help="OCR records -> detection/recognition/spotting samples")
    p.add_argument("--ocr", required=True, help="JSONL OCR records (required)")
    p.add_argument("--out", required=True, help="output dataset JSONL (required)")
    p.add_argument("--manifest", help="dedup manifest; only documents whose id is kept are used (default: none)")
    _add_config_flags(p, "seed", "min_area", "tasks", "detection_cap", "recognition_cap", "workers", "templates")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("dedup", help="MD5 manifest marking duplicate images")
    p.add_argument("files", nargs="*", help="image files, each used as its own id (default: none)")
    p.add_argument("--list", help="JSONL of {id, image} entries, hashed before positional files (default: none)")
    p.add_argument("--out", required=True, help="output manifest JSONL (required)")
    p.set_defaults(func=cmd_dedup)

    p = sub.add_parser("finetune-prompts", help="captions + OCR -> generation prompts (and optionally completions)")
    p.add_argument("--ocr", required=True, help="JSONL OCR records, several engines per image allowed (required)")
    p.add_argument("--captions", required=True, help="JSONL of {image_id, image, captions} (required)")
    p.add_argument("--out", required=True, help="output prompts JSONL (required)")
    p.add_argument("--request", action="store_true", help="send prompts to the chat service (default: off)")
    p.add_argument("--completions-out", help="where --request writes completions JSONL (default: none)")
    p.add_argument("--stub", help="replay canned completions from this JSONL instead of the network (default: none)")
    _add_config_flags(p, "attempts", "max_in_flight", "model", "temperature")
    p.set_defaults(func=cmd_finetune_prompts)

    p = sub.add_parser("finetune-build", help="raw completions -> sanitized conversation dataset")
    p.add_argument("--completions", required=True, help="JSONL of {image_id, image, completion} (required)")
    p.add_argument("--ocr", required=True, help="JSONL OCR records used to validate answer boxes (required)")
    p.add_argument("--out", required=True, help="output dataset JSONL (required)")
    p.add_argument("--report", help="per-conversation sanitize report JSONL (default: none)")
    _add_config_flags(p, "iou_floor", "banned_phrases")
    p.set_defaults(func=cmd_finetune_build)

    p = sub.add_parser("eval", help="containment accuracy and box diagnostics")
    p.add_argument("--benchmark", required=True, help="JSONL of {qid, image, question, answers, gt_boxes?} (required)")
    p.add_argument("--responses", required=True, help="JSONL of {qid, response} (required)")
    p.add_argument("--report", required=True, help="output report JSON (required)")
    p.add_argument("--overlay-dir", help="write SVG overlays for records with width/height (default: none)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("questions", help="benchmark questions with the grounding instruction appended")
    p.add_argument("--benchmark", required=True, help="benchmark JSONL (required)")
    p.add_argument("--out", required=True, help="output JSONL of {qid, image, question} (required)")
    p.set_defaults(func=cmd_questions)

    p = sub.add_parser("render", help="dataset -> training strings")
    p.add_argument("--dataset", required=True, help="dataset JSONL (required)")
    p.add_argument("--out", required=True, help="output JSONL of {id, text} (required)")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("stats", help="dataset size and whitespace-token lengths")
    p.add_argument("--dataset", required=True, help="dataset JSONL (required)")
    p.add_argument("--out", required=True, help="output JSON report (required)")
    p.set_defaults(func=cmd_stats)
    return parser


def dispatch(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError("groundforge: a command is required (see --help)")
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ClientConfigError, TransportError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SERVICE
    except (ForgeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
