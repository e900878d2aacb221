"""Plain-text word lists, one term per line."""
from __future__ import annotations

from importlib import resources


def read_lines(name: str) -> list:
    text = resources.files(__name__).joinpath(name).read_text(encoding="utf-8")
    return [ln.strip() for ln in text.splitlines() if ln.strip()]


def read_tsv(name: str) -> list:
    rows = [ln.split("\t") for ln in read_lines(name)]
    head, body = rows[0], rows[1:]
    return [dict(zip(head, r)) for r in body]
