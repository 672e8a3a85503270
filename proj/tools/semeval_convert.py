#!/usr/bin/env python3
"""Convert the SemEval-2010 Task 8 distribution into capsrel's JSONL format.

Input records look like

    1   "The <e1>factory</e1>'s products have included flower pots ..."
    Product-Producer(e2,e1)
    Comment: ...

and become one JSON line each:

    {"tokens": [...], "head": 3, "tail": 9, "labels": ["Product-Producer(e2,e1)"]}

Multi-word entity mentions are merged into a single token with underscores so
that `head` and `tail` each point at exactly one token (the loader requires
single-token entities).  The "Other" class is not listed in the schema; it is
declared as the schema's `na_label`, so those sentences load with an empty
label set and are scored through the NA threshold like any other no-relation
sentence.

Usage:
    python3 tools/semeval_convert.py \
        --train TRAIN_FILE.TXT --test TEST_FILE_FULL.TXT --out data/semeval
"""

import argparse
import json
import re
import sys
from pathlib import Path

RECORD = re.compile(
    r'^(\d+)\t"(.*)"\s*\n([^\n]+)\n(?:Comment:[^\n]*\n)?', re.MULTILINE
)
ENTITY = re.compile(r"<e([12])>(.*?)</e\1>")
NA_LABEL = "Other"


def tokenize(text):
    """Lowercase and split, keeping sentence punctuation as its own token."""
    text = re.sub(r"([.,!?;:()\"])", r" \1 ", text)
    return text.lower().split()


def parse_record(sentence, label):
    spans = {}

    def merge(m):
        token = "_".join(m.group(2).split())
        spans[m.group(1)] = token
        return " " + token + " "

    flat = ENTITY.sub(merge, sentence)
    if set(spans) != {"1", "2"}:
        raise ValueError("sentence lacks <e1>/<e2> markup: " + sentence)
    tokens = tokenize(flat)
    try:
        head = tokens.index(spans["1"].lower())
        tail = tokens.index(spans["2"].lower())
    except ValueError:
        raise ValueError("entity token lost in tokenization: " + sentence)
    labels = [] if label == NA_LABEL else [label]
    return {"tokens": tokens, "head": head, "tail": tail, "labels": labels}


def convert_file(path):
    text = Path(path).read_text(encoding="utf-8")
    examples = []
    relations = set()
    for m in RECORD.finditer(text):
        label = m.group(3).strip()
        if label != NA_LABEL:
            relations.add(label)
        examples.append(parse_record(m.group(2), label))
    if not examples:
        raise ValueError(f"{path}: no records found (is this the Task 8 format?)")
    return examples, relations


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--train", required=True, help="TRAIN_FILE.TXT from the distribution")
    ap.add_argument("--test", required=True, help="TEST_FILE_FULL.TXT (with gold labels)")
    ap.add_argument("--out", required=True, help="output directory")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    train, train_rel = convert_file(args.train)
    test, test_rel = convert_file(args.test)
    unseen = test_rel - train_rel
    if unseen:
        print(f"warning: test-only relations {sorted(unseen)}", file=sys.stderr)

    schema = {"relations": sorted(train_rel | test_rel), "na_label": NA_LABEL}
    (out / "schema.json").write_text(json.dumps(schema, indent=2) + "\n")
    for name, examples in (("train.jsonl", train), ("test.jsonl", test)):
        with open(out / name, "w") as f:
            for ex in examples:
                f.write(json.dumps(ex) + "\n")
        print(f"{out / name}: {len(examples)} sentences")
    print(f"{out / 'schema.json'}: {len(schema['relations'])} relations + NA ({NA_LABEL})")


if __name__ == "__main__":
    main()
