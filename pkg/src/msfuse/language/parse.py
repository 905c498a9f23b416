"""Parsing of ``[class, prediction score]`` records out of free-form LLM replies."""

from __future__ import annotations

import re

_RECORD = re.compile(
    r"\[\s*([^\[\],]+?)\s*,\s*([-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?)\s*\]"
)

PERSON = "person"


class ParseError(ValueError):
    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


def parse_prediction(text: str) -> list[tuple[str, float]]:
    """Every ``[label, number]`` record in ``text``, in order.

    Labels are trimmed and lowercased; scores are clamped to [0, 1].
    """
    records = []
    for m in _RECORD.finditer(text or ""):
        label = m.group(1).strip().lower()
        if not label:
            continue
        score = min(1.0, max(0.0, float(m.group(2))))
        records.append((label, score))
    if not records:
        raise ParseError("no [class, prediction score] record found", text)
    return records


def gate(label: str, score: float) -> float:
    return score if label == PERSON else 0.0
