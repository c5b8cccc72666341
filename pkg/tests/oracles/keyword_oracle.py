"""Reference scan for the keyword filter.

Reads a JSONL file directly and keeps line indices whose searchable
text contains the keyword; no package code involved, so the filter
implementation can be checked against it.
"""

import json


def scan_jsonl(path, keyword):
    hits = []
    index = 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            data = json.loads(line)
            if "text" in data:
                hay = data["text"]
            else:
                hay = data["question"] + "\n" + data["answer"]
            if keyword in hay:
                hits.append(index)
            index += 1
    return hits
