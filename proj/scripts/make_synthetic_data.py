#!/usr/bin/env python3
"""Regenerates the bundled synthetic corpus and embedding file under data/.

The corpus is keyword-separable: every example of class k contains that
class's keyword and no other class's keyword, so a working trainer should
reach a near-perfect training score on it.
"""
import math
import random

KEYWORDS = {1: "took", 2: "might", 3: "news"}
FILLERS = ["i", "the", "pill", "today", "feel", "better", "headache"]
VOCAB = list(KEYWORDS.values()) + FILLERS  # 10 words
DIM = 8
PER_CLASS = 20

rng = random.Random(20240915)


def make_sentence(label: int) -> str:
    length = rng.randint(4, 8)
    words = [rng.choice(FILLERS) for _ in range(length)]
    n_kw = rng.choice([1, 1, 2])
    positions = rng.sample(range(length), min(n_kw, length))
    for p in positions:
        words[p] = KEYWORDS[label]
    return " ".join(words)


def main() -> None:
    rows = []
    idx = 1
    for _ in range(PER_CLASS):
        for label in (1, 2, 3):
            rows.append((f"t{idx:03d}", label, make_sentence(label)))
            idx += 1
    with open("data/synthetic_train.tsv", "w", encoding="utf-8") as f:
        for rid, label, text in rows:
            f.write(f"{rid}\t{label}\t{text}\n")

    with open("data/synthetic_embeddings.txt", "w", encoding="utf-8") as f:
        f.write(f"{len(VOCAB)} {DIM}\n")
        for word in VOCAB:
            v = [rng.uniform(-1.0, 1.0) for _ in range(DIM)]
            norm = math.sqrt(sum(x * x for x in v))
            f.write(word + " " + " ".join(f"{x / norm:.6f}" for x in v) + "\n")


if __name__ == "__main__":
    main()
