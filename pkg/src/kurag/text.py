"""Text utilities: tokenization, sentence splitting, keyword and name extraction.

The tokenizer counts whitespace-separated words plus standalone punctuation
marks. Sentence splitting is deliberately simple (terminator followed by
whitespace); abbreviation handling is a known simplification.
"""

from __future__ import annotations

import re
from difflib import SequenceMatcher

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")
_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")
_WORD_RE = re.compile(r"\w+")
_CAP_SPAN_RE = re.compile(r"\b[A-Z][A-Za-z0-9'-]*(?:[ \t]+[A-Z][A-Za-z0-9'-]*)+\b")
_SLUG_RE = re.compile(r"[^a-z0-9]+")

#: Words dropped when extracting content words from a question.
STOPWORDS = frozenset("""
a about above across after again against all also am among amongst an and any
are as at be because been before behind being below beside between beyond both
but by can cannot could did do does doing down during each either few for from
further had has have having he her here hers herself him himself his how
however i if in into is it its itself just me more most must my myself near
neither no nor not now of off on once only onto or other our ours ourselves
out over own per same shall she should so some such than that the their theirs
them themselves then there these they this those though through to too toward
towards under until unto up upon us very via was we were what when where
whether which while who whom whose why will with within without would yet you
your yours yourself yourselves
""".split())


def tokenize(text: str) -> list[str]:
    """Split text into word and punctuation tokens."""
    return _TOKEN_RE.findall(text)


def count_tokens(text: str) -> int:
    return len(_TOKEN_RE.findall(text))


def split_sentences(body: str) -> list[str]:
    """Split a passage at '.', '!' or '?' followed by whitespace.

    Terminators stay attached to their sentence; a trailing fragment without
    a terminator counts as a sentence of its own.
    """
    stripped = body.strip()
    if not stripped:
        return []
    return [part for part in _SENTENCE_SPLIT_RE.split(stripped) if part]


def content_words(text: str) -> list[str]:
    """Lowercased, punctuation-stripped, stopword-free words, deduplicated
    in order of first appearance."""
    seen: set[str] = set()
    out: list[str] = []
    for word in _WORD_RE.findall(text.lower()):
        if word in STOPWORDS or word in seen:
            continue
        seen.add(word)
        out.append(word)
    return out


_LEADING_ARTICLES = ("the", "a", "an")


def candidate_names(title: str, body: str) -> list[str]:
    """Heuristic knowledge-unit name candidates for a document.

    The title (when present) comes first, followed by capitalized multi-word
    spans found in the body, deduplicated case-insensitively in order. A
    sentence-leading article is dropped from a span when enough words remain.
    Corpora that need precise control should supply explicit names instead.
    """
    out: list[str] = []
    seen: set[str] = set()
    title = " ".join(title.split())
    if title:
        out.append(title)
        seen.add(title.casefold())
    for span in _CAP_SPAN_RE.findall(body):
        words = span.split()
        if len(words) > 2 and words[0].casefold() in _LEADING_ARTICLES:
            words = words[1:]
        name = " ".join(words)
        key = name.casefold()
        if key not in seen:
            seen.add(key)
            out.append(name)
    return out


def name_similarity(a: str, b: str) -> float:
    """String similarity in [0, 1] between two unit names.

    Case- and whitespace-insensitive; exact matches score 1.0, otherwise the
    SequenceMatcher ratio of the normalized strings.
    """
    na = " ".join(a.split()).casefold()
    nb = " ".join(b.split()).casefold()
    if na == nb:
        return 1.0
    if not na or not nb:
        return 0.0
    return SequenceMatcher(None, na, nb).ratio()


def slugify(name: str) -> str:
    slug = _SLUG_RE.sub("-", name.casefold()).strip("-")
    return slug or "unit"
