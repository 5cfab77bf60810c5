#!/usr/bin/env python3
"""Regenerates the small hand-specified fixtures under tests/fixtures.

eval20: 20 gold posts (8 hate, 12 non-hate) and predictions with confusion
tp=6 fn=2 fp=3 tn=9; one false negative is a parse failure.
filter50: 50 posts (25/25) and teacher records: 31 label matches,
15 mismatches, 4 parse failures.
"""
import json
import os

ROOT = os.path.join(os.path.dirname(__file__), "..", "tests", "fixtures")
HEADER = {"name": "fixture", "seed": 0, "parent_fingerprint": "fixture"}


def write(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for r in rows:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")


def eval20():
    gold, preds = [HEADER], []
    # (gold, predicted, parse_ok)
    plan = ([("hate", "hate", True)] * 6 + [("hate", "non_hate", True), ("hate", "non_hate", False)]
            + [("non_hate", "hate", True)] * 3 + [("non_hate", "non_hate", True)] * 9)
    for i, (g, p, ok) in enumerate(plan):
        pid = f"e{i + 1:02d}"
        gold.append({"id": pid, "text": f"evaluation post {i + 1}", "gold_label": g,
                     "source": "a" if i % 2 else "b"})
        rec = {"post_id": pid, "model_id": "fixture-model", "predicted_label": p, "parse_ok": ok}
        rec["rationale"] = [{"fragment": f"evaluation post {i + 1}", "explanation": "fixture"}] if ok else None
        preds.append(rec)
    write(os.path.join(ROOT, "eval20", "gold.jsonl"), gold)
    write(os.path.join(ROOT, "eval20", "predictions.jsonl"), preds)


def filter50():
    sub, recs = [HEADER], []
    for i in range(50):
        pid = f"f{i + 1:02d}"
        gold = "hate" if i % 2 == 0 else "non_hate"
        text = f"filter post number {i + 1}"
        sub.append({"id": pid, "text": text, "gold_label": gold, "source": "s"})
        if i < 31:
            kind = "match"
        elif i < 46:
            kind = "mismatch"
        else:
            kind = "parse_failure"
        if kind == "parse_failure":
            recs.append({"post_id": pid, "model_id": "teacher", "status": "parse_failure", "response": None,
                         "raw": "sorry, I cannot help with that", "attempts": 4, "latency_s": 1.0,
                         "generated_tokens": 6, "error": "no JSON object in response"})
            continue
        hate = (gold == "hate") if kind == "match" else (gold != "hate")
        response = {"hate_speech": hate, "explanations": [[text, "fixture explanation"]]}
        raw = json.dumps({"hate_speech": "True" if hate else "False",
                          "explanations": [[text, "fixture explanation"]]})
        recs.append({"post_id": pid, "model_id": "teacher", "status": "ok", "response": response, "raw": raw,
                     "attempts": 1, "latency_s": 1.0, "generated_tokens": 12, "error": ""})
    write(os.path.join(ROOT, "filter50", "subsample.jsonl"), sub)
    write(os.path.join(ROOT, "filter50", "teacher.jsonl"), recs)


if __name__ == "__main__":
    eval20()
    filter50()
