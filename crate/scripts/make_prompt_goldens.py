"""Writes the labeling-prompt golden files under crates/core/fixtures/prompts/.

The expected prompts are assembled here from the template text alone, with
no help from the Rust code, so the byte comparison in the tests is an
independent check."""

import json
import random
from pathlib import Path

TEMPLATE = (
    "In this task, we`ll assign a short and precise label to a group of documents "
    "based on the topics or concepts most relevant to these documents. "
    "The documents are all subsets of a ${task} dataset."
)
TASK = "sentiment classification"
WORDS = ("great food slow service tiny portions friendly staff loud music "
         "cold fries parking nightmare lovely patio rude host fresh bread").split()


def build(docs, task=TASK):
    return TEMPLATE.replace("${task}", task) + "- " + "\n - ".join(docs) + "\n Group label:"


def tokens(text):
    return len(text.split())


def truncate(docs, budget, task=TASK):
    keep = len(docs)
    while keep > 1 and tokens(build(docs[:keep], task)) > budget:
        keep -= 1
    return build(docs[:keep], task)


def main():
    out = Path(__file__).resolve().parent.parent / "crates/core/fixtures/prompts"
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(7)

    def doc(n):
        return " ".join(rng.choice(WORDS) for _ in range(n))

    cases = {
        "docs_1": ["The custard was worth the drive."],
        "docs_2": ["doc A", "doc B"],
        "docs_25": [f"review {i}: {doc(rng.randint(3, 12))}" for i in range(25)],
    }
    for name, docs in cases.items():
        (out / f"{name}.json").write_text(json.dumps({"task": TASK, "docs": docs}, indent=1) + "\n")
        (out / f"{name}.txt").write_bytes(build(docs).encode("utf-8"))

    over = [doc(rng.randint(250, 400)) for _ in range(30)]
    (out / "over_budget.json").write_text(json.dumps({"task": TASK, "max_tokens": 4000, "docs": over}, indent=1) + "\n")
    (out / "over_budget_truncated.txt").write_bytes(truncate(over, 4000).encode("utf-8"))


if __name__ == "__main__":
    main()
