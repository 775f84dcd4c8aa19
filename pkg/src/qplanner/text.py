"""Small text helpers: canonical whitespace, exact match, sentence splitting."""

from __future__ import annotations

import re

_WS = re.compile(r"\s+")
# Terminal punctuation followed by any closing quotes/brackets stays with the sentence.
_SENTENCE = re.compile(
    r"[^.?!。？！]+(?:[.?!。？！]+[\"'”’」』)\]）]*|$)"
)
_ANSWER_PREFIX = re.compile(r"^\s*answer\s*[:：]", re.IGNORECASE | re.MULTILINE)


def canonical(text: str) -> str:
    return _WS.sub(" ", text).strip()


def exact_match(pred: str, gold: str, lowercase: bool = False) -> bool:
    a, b = canonical(pred), canonical(gold)
    if lowercase:
        a, b = a.lower(), b.lower()
    return a == b


def split_sentences(text: str) -> list[str]:
    """Rule-based split on terminal punctuation.

    Known approximation: abbreviations and decimals ("Dr.", "3.5") also split.
    """
    out = []
    for m in _SENTENCE.finditer(text):
        s = m.group(0).strip()
        if s:
            out.append(s)
    return out


def parse_answer(text: str) -> str | None:
    """Payload after the last ``Answer:`` line prefix, or None when absent."""
    matches = list(_ANSWER_PREFIX.finditer(text))
    if not matches:
        return None
    return text[matches[-1].end():].strip()
