"""Writes crates/core/fixtures/reviews200.jsonl, a small product-review
evaluation set used by the CLI and service tests."""

import json
import math
import random
from pathlib import Path

N = 200
DIM = 8
TOPICS = {
    "battery": ["battery", "charge", "drains", "hours", "charger"],
    "shipping": ["shipping", "arrived", "late", "box", "courier"],
    "screen": ["screen", "display", "bright", "pixels", "glare"],
    "price": ["price", "expensive", "cheap", "value", "money"],
    "support": ["support", "refund", "agent", "warranty", "replied"],
}
POS = ["great", "love", "excellent", "happy", "solid"]
NEG = ["terrible", "awful", "broken", "disappointed", "worst"]
HEDGE = ["not", "barely", "hardly", "never"]


def main():
    rng = random.Random(20240601)
    names = sorted(TOPICS)
    out = Path(__file__).resolve().parent.parent / "crates/core/fixtures/reviews200.jsonl"
    lines = [json.dumps({"name": "reviews200", "num_classes": 2, "embedding_dim": DIM})]
    for i in range(N):
        t = i % len(names)
        topic = names[t]
        label = rng.randrange(2)
        sentiment = POS if label == 1 else NEG
        words = [rng.choice(TOPICS[topic]) for _ in range(3)] + [rng.choice(sentiment) for _ in range(2)]
        negated = rng.random() < 0.25
        if negated:
            words.insert(0, rng.choice(HEDGE))
        rng.shuffle(words)
        text = "the " + " ".join(words)
        emb = [rng.gauss(0.0, 0.15) for _ in range(DIM)]
        emb[t] += 1.0
        emb[5] += (1.0 if label == 1 else -1.0) * (-0.6 if negated else 1.0)
        emb[6] += 0.8 if negated else 0.0
        # negated reviews and the "price" topic are the hard cases
        p_correct = 0.35 if negated else (0.7 if topic == "price" else 0.93)
        p_true = min(0.999, max(0.001, rng.betavariate(8 * p_correct, 8 * (1 - p_correct))))
        prediction = label if p_true >= 0.5 else 1 - label
        loss = -math.log(p_true)
        lines.append(json.dumps({
            "id": f"r{i:03d}",
            "text": text,
            "label": label,
            "prediction": prediction,
            "loss": round(loss, 9),
            "embedding": [round(x, 6) for x in emb],
        }))
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
