"""Text cleaning ahead of encoding.

Markup is stripped, casing normalized, punctuation removed, and the result
whitespace-tokenized.  Every encoder position derived from a word later
inherits that word's surface, so aggregation downstream sees whole words.
"""

from __future__ import annotations

import re

_TAG_RE = re.compile(r"<[^>]*>")
_WORD_RE = re.compile(r"[a-z0-9]+(?:'[a-z]+)*")


def preprocess_text(text: str) -> list[str]:
    """Cleaned, lowercased word surfaces in document order."""
    stripped = _TAG_RE.sub(" ", text)
    return _WORD_RE.findall(stripped.lower())
