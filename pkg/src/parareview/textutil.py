"""Small text helpers shared by feature extraction and metrics."""

from __future__ import annotations

import re

_TOKEN = re.compile(r"[a-z0-9']+")

# minimal function-word list; enough to make content-word overlap meaningful
STOPWORDS = frozenset("""
a an and are as at be but by for from has have how in is it its of on or
that the this to was what when where which who why will with would should
could can do does did not no nor so than then there these those you your
we our they their he she him her i me my
""".split())


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.casefold())


def content_words(text: str) -> set[str]:
    return {t for t in tokenize(text) if t not in STOPWORDS}


def jaccard(a: set[str], b: set[str]) -> float:
    if not a and not b:
        return 0.0
    union = a | b
    return len(a & b) / len(union) if union else 0.0
