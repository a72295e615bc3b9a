"""Writes the bundled synthetic sentiment dataset and the byte-level toy vocabulary.

Outputs (deterministic):
  data/toy_task/train.jsonl  200 items, ~15% noisy labels, some mixed-sentiment items
  data/toy_task/eval.jsonl   200 clean items
  data/toy/toy_vocab.json    newline + printable ASCII
"""

import json
import pathlib
import random

from toy_task import LABELS, make_sentence

ROOT = pathlib.Path(__file__).resolve().parent.parent


def write_jsonl(path: pathlib.Path, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")


def main():
    rng = random.Random(20230523)
    train = []
    for i in range(200):
        label = i % 2
        ambiguous = rng.random() < 0.15
        text = make_sentence(rng, label, ambiguous)
        shown = label if rng.random() >= 0.15 else 1 - label
        train.append({"text": text, "label": LABELS[shown]})
    rng.shuffle(train)

    evals = []
    for i in range(200):
        label = i % 2
        evals.append({"text": make_sentence(rng, label, rng.random() < 0.1), "label": LABELS[label]})
    rng.shuffle(evals)

    write_jsonl(ROOT / "data/toy_task/train.jsonl", train)
    write_jsonl(ROOT / "data/toy_task/eval.jsonl", evals)

    chars = ["\n"] + [chr(c) for c in range(32, 127)]
    vocab = {c: i for i, c in enumerate(chars)}
    (ROOT / "data/toy").mkdir(parents=True, exist_ok=True)
    with (ROOT / "data/toy/toy_vocab.json").open("w", encoding="utf-8") as f:
        json.dump(vocab, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main()
