#!/usr/bin/env python3
"""Convert a public VQA-style benchmark file into the eval JSONL format.

Reads a JSON array or JSON-lines file, maps configurable field names onto
{item_id, image, question, gold_answers}, and optionally thins the set with
arithmetic-sequence sampling (--stride N --offset K keeps rows K, K+N, ...).
This is an offline import helper, not a runtime dependency.

Example:
    python3 scripts/import_vqa_jsonl.py raw_test.json eval.jsonl \
        --id-field question_id --image-field image_path \
        --question-field question --answers-field answers \
        --stride 10 --offset 0
"""

from __future__ import annotations

import argparse
import json
import sys


def load_rows(path: str) -> list[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        head = fh.read(1)
        fh.seek(0)
        if head == "[":
            rows = json.load(fh)
            if not isinstance(rows, list):
                raise SystemExit("top-level JSON must be an array of objects")
            return rows
        return [json.loads(line) for line in fh if line.strip()]


def as_answers(value) -> list[str]:
    if isinstance(value, str):
        return [value]
    if isinstance(value, list):
        out = []
        for entry in value:
            if isinstance(entry, dict):
                entry = entry.get("answer") or entry.get("text") or ""
            if entry:
                out.append(str(entry))
        return out
    return []


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("input")
    parser.add_argument("output")
    parser.add_argument("--id-field", default="question_id")
    parser.add_argument("--image-field", default="image")
    parser.add_argument("--question-field", default="question")
    parser.add_argument("--answers-field", default="answers")
    parser.add_argument("--stride", type=int, default=1,
                        help="keep every Nth row (arithmetic-sequence sampling)")
    parser.add_argument("--offset", type=int, default=0,
                        help="index of the first kept row")
    args = parser.parse_args()
    if args.stride < 1 or args.offset < 0:
        parser.error("--stride must be >= 1 and --offset >= 0")

    rows = load_rows(args.input)
    kept = skipped = 0
    with open(args.output, "w", encoding="utf-8") as out:
        for index in range(args.offset, len(rows), args.stride):
            row = rows[index]
            answers = as_answers(row.get(args.answers_field))
            question = row.get(args.question_field)
            if not answers or not question:
                skipped += 1
                continue
            item = {
                "item_id": str(row.get(args.id_field, index)),
                "image": row.get(args.image_field),
                "question": str(question),
                "gold_answers": answers,
            }
            out.write(json.dumps(item, sort_keys=True) + "\n")
            kept += 1
    print(f"wrote {kept} items to {args.output} ({skipped} skipped)", file=sys.stderr)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
