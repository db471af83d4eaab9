"""JSON emission with fixed 17-significant-digit floats for byte-stable artifacts."""

from __future__ import annotations

import json


def format_value(obj) -> str:
    if isinstance(obj, float):
        return format(obj, ".17g")
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(format_value(v) for v in obj) + "]"
    if isinstance(obj, dict):
        items = (json.dumps(str(k)) + ": " + format_value(v) for k, v in obj.items())
        return "{" + ", ".join(items) + "}"
    if hasattr(obj, "tolist"):
        return format_value(obj.tolist())
    if hasattr(obj, "item"):
        return format_value(obj.item())
    raise TypeError(f"cannot serialize {type(obj)!r}")


def dumps(obj) -> str:
    return format_value(obj)


def write_jsonl(path, rows):
    with open(path, "w") as fh:
        for row in rows:
            fh.write(format_value(row))
            fh.write("\n")


def read_jsonl(path):
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)
