"""Agreement between align_metadata and exhaustive search on noisy synthetic documents.

Reports the agreement rate on cases the exhaustive search can match within the
edit threshold, plus timing for both.
"""

import argparse
import random
import time

from groundforge.alignment import align_metadata, canonicalize, normalized_edit_distance, reading_order
from groundforge.geometry import union
from groundforge.synthetic import WORDS, random_document


def exhaustive(doc, reference, max_gap):
    tokens = reading_order(doc.tokens)
    target = canonicalize(reference)
    best = None
    for mask in range(1, 1 << len(tokens)):
        idx = [i for i in range(len(tokens)) if mask >> i & 1]
        if idx[-1] - idx[0] + 1 - len(idx) > max_gap:
            continue
        text = canonicalize(" ".join(tokens[i].text for i in idx))
        key = (normalized_edit_distance(text, target), len(idx), idx[0], tuple(idx))
        if best is None or key < best:
            best = key
    return best[0], union(tokens[i].box for i in best[3])


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--docs", type=int, default=200, help="number of documents (default: 200)")
    parser.add_argument("--max-tokens", type=int, default=12, help="tokens per document at most (default: 12)")
    parser.add_argument("--noise", type=float, default=0.1, help="per-character OCR noise rate (default: 0.1)")
    parser.add_argument("--max-gap", type=int, default=2, help="skipped tokens allowed (default: 2)")
    parser.add_argument("--threshold", type=float, default=0.3, help="max normalized edit distance (default: 0.3)")
    parser.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")
    args = parser.parse_args()

    rng = random.Random(args.seed)
    cases = []
    for k in range(args.docs):
        doc, clean = random_document(rng, f"d{k}", rng.randint(1, args.max_tokens), noise=args.noise)
        if rng.random() < 0.15:
            ref = " ".join(rng.choice(WORDS) for _ in range(rng.randint(1, 3)))
        else:
            start = rng.randrange(len(clean))
            ref = " ".join(clean[start : start + rng.randint(1, 3)])
        cases.append((doc, ref))

    t0 = time.perf_counter()
    got = [align_metadata(d, r, args.max_gap, args.threshold) for d, r in cases]
    t1 = time.perf_counter()
    truth = [exhaustive(d, r, args.max_gap) for d, r in cases]
    t2 = time.perf_counter()

    eligible = [(g, box) for g, (dist, box) in zip(got, truth) if dist <= args.threshold]
    agree = sum(g is not None and g.box == box for g, box in eligible)
    print(f"eligible cases: {len(eligible)}/{len(cases)}")
    print(f"agreement: {agree}/{len(eligible)} ({agree / max(len(eligible), 1):.1%})")
    print(f"align_metadata: {t1 - t0:.2f}s   exhaustive: {t2 - t1:.2f}s")


if __name__ == "__main__":
    main()
