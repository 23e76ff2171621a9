"""Write a synthetic OCR corpus (and matching caption records) for trying the CLI."""

import argparse
import json
import random
from pathlib import Path

from groundforge.ocr import dump_ocr
from groundforge.synthetic import WORDS, random_corpus


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="corpus", help="output directory (default: corpus)")
    parser.add_argument("--docs", type=int, default=20, help="number of documents (default: 20)")
    parser.add_argument("--seed", type=int, default=3, help="corpus seed (default: 3)")
    parser.add_argument("--max-tokens", type=int, default=12, help="tokens per document at most (default: 12)")
    parser.add_argument("--noise", type=float, default=0.0, help="per-character OCR noise rate (default: 0.0)")
    args = parser.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    docs = random_corpus(args.docs, seed=args.seed, max_tokens=args.max_tokens, noise=args.noise)
    with open(out / "ocr.jsonl", "w", encoding="utf-8") as fh:
        dump_ocr(docs, fh)

    rng = random.Random(args.seed)
    with open(out / "captions.jsonl", "w", encoding="utf-8") as fh:
        for doc in docs:
            captions = [" ".join(rng.choice(WORDS) for _ in range(rng.randint(3, 7))) for _ in range(3)]
            fh.write(json.dumps({"image_id": doc.id, "image": doc.image_ref, "captions": captions}) + "\n")
    print(f"wrote {len(docs)} documents to {out}/ocr.jsonl and {out}/captions.jsonl")


if __name__ == "__main__":
    main()
