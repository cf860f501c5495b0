"""Byte-stable CSV helpers shared by the result writers.

Files are plain comma-separated text with an optional single leading comment
line (``# key=value key=value``) carrying provenance such as the config hash
and seed. Floats are rendered with 17 significant digits so that float64
values survive a write/read round trip bit for bit, and lines always end in
"\\n" regardless of platform, so identical results produce identical bytes.
"""
from __future__ import annotations

import re
from pathlib import Path
from typing import Mapping, Sequence

from .errors import SchemaError

_KEY_RE = re.compile(r"^[A-Za-z0-9_.:-]+$")


def format_float(v: float) -> str:
    return format(float(v), ".17g")


def meta_comment(meta: Mapping[str, object]) -> str:
    parts = []
    for key, value in meta.items():
        text = str(value)
        if not _KEY_RE.match(str(key)):
            raise SchemaError(f"metadata key {key!r} is not a bare token")
        if "=" in text or any(c.isspace() for c in text):
            raise SchemaError(f"metadata value for {key!r} must not contain '=' or whitespace")
        parts.append(f"{key}={text}")
    return "# " + " ".join(parts)


def parse_meta(line: str) -> dict[str, str]:
    body = line[1:].strip()
    meta: dict[str, str] = {}
    if not body:
        return meta
    for token in body.split():
        if "=" not in token:
            raise SchemaError(f"malformed metadata token {token!r}")
        key, value = token.split("=", 1)
        meta[key] = value
    return meta


def write_csv(path, header: str, rows: Sequence[Sequence[str]], meta: Mapping[str, object] | None = None) -> None:
    lines = []
    if meta:
        lines.append(meta_comment(meta))
    lines.append(header)
    width = len(header.split(","))
    for row in rows:
        if len(row) != width:
            raise SchemaError(f"row has {len(row)} fields, header has {width}")
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="")


def read_csv(path, header: str) -> tuple[list[list[str]], dict[str, str]]:
    """Rows (still as strings) plus the metadata mapping; strict about layout."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.split("\n") if ln != ""]
    meta: dict[str, str] = {}
    if lines and lines[0].startswith("#"):
        meta = parse_meta(lines.pop(0))
    if not lines or lines[0] != header:
        found = lines[0] if lines else "<empty file>"
        raise SchemaError(f"expected header {header!r}, found {found!r}")
    width = len(header.split(","))
    rows = []
    for ln in lines[1:]:
        fields = ln.split(",")
        if len(fields) != width:
            raise SchemaError(f"row {ln!r} has {len(fields)} fields, expected {width}")
        rows.append(fields)
    return rows, meta
