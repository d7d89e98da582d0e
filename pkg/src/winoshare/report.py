"""Report rendering: flat ``key: value`` text and JSON documents.

Simulation and model reports serialize through the same dict shape so the
two can be diffed directly.
"""

from __future__ import annotations

import json


def _flatten(prefix: str, value, out: list[tuple[str, str]]) -> None:
    if isinstance(value, dict):
        for k, v in value.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, out)
    elif isinstance(value, (list, tuple)):
        for i, v in enumerate(value):
            _flatten(f"{prefix}[{i}]", v, out)
    else:
        out.append((prefix, str(value)))


def render_text(doc: dict) -> str:
    pairs: list[tuple[str, str]] = []
    _flatten("", doc, pairs)
    return "\n".join(f"{k}: {v}" for k, v in pairs)


def render_json(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=False)


def render(doc: dict, fmt: str) -> str:
    if fmt == "json":
        return render_json(doc)
    if fmt == "text":
        return render_text(doc)
    raise ValueError(f"unknown report format {fmt!r}")


def layer_table(entries: list[dict], columns: list[str]) -> str:
    """Fixed-width table for per-layer model output."""
    widths = {c: len(c) for c in columns}
    rows = []
    for e in entries:
        row = {}
        for c in columns:
            v = e.get(c, "")
            if isinstance(v, float):
                v = f"{v:.6g}"
            row[c] = str(v)
            widths[c] = max(widths[c], len(row[c]))
        rows.append(row)
    header = "  ".join(c.ljust(widths[c]) for c in columns)
    sep = "  ".join("-" * widths[c] for c in columns)
    body = [
        "  ".join(r[c].ljust(widths[c]) for c in columns) for r in rows
    ]
    return "\n".join([header, sep] + body)
