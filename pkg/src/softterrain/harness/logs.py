"""JSON-lines episode logs."""
from __future__ import annotations

import json
import math


class LogError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(message)


def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    return v


def dumps(record) -> str:
    return json.dumps(_clean(record), separators=(",", ":"), allow_nan=False)


def write_jsonl(path, records, mode="w"):
    with open(path, mode, encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(dumps(r) + "\n")


def read_jsonl(path):
    """Parse a log; a bad or truncated line raises LogError naming the line."""
    out = []
    last_ok = 0
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    elif lines:
        # no trailing newline: the writer always ends records with one
        n = len(lines)
        try:
            json.loads(lines[-1])
        except json.JSONDecodeError:
            raise LogError(f"{path}: truncated record at line {n}; last valid line is {n - 1}", n) from None
    for i, ln in enumerate(lines, 1):
        if not ln.strip():
            continue
        try:
            rec = json.loads(ln)
        except json.JSONDecodeError as e:
            raise LogError(f"{path}: corrupt record at line {i} ({e.msg}); last valid line is {last_ok}", i) from None
        if not isinstance(rec, dict):
            raise LogError(f"{path}: line {i} is not a JSON object; last valid line is {last_ok}", i)
        out.append(rec)
        last_ok = i
    return out
