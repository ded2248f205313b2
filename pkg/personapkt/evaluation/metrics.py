"""
Word-overlap metrics between a generated response and its reference.

Both sides are lowercased and split into word and punctuation tokens. F1 values are
harmonic means of precision and recall and are 0 whenever either side has nothing to count.
"""

from __future__ import annotations

import re
from collections import Counter
from collections.abc import Sequence

_TOKEN = re.compile(r"\w+|[^\w\s]")


def normalize_tokens(text: str) -> list[str]:
    """Lowercase ``text`` and split it into word and punctuation tokens."""
    return _TOKEN.findall(text.lower())


def _f_score(overlap: int, hyp_count: int, ref_count: int) -> float:
    if overlap == 0 or hyp_count == 0 or ref_count == 0:
        return 0.0
    precision = overlap / hyp_count
    recall = overlap / ref_count
    return 2 * precision * recall / (precision + recall)


def ngrams(tokens: Sequence[str], n: int) -> Counter[tuple[str, ...]]:
    """Multiset of the n-grams of ``tokens``."""
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def ngram_f1(hypothesis: str, reference: str, n: int) -> float:
    """
    F1 of clipped n-gram matches.

    Each hypothesis n-gram counts as matched at most as often as it occurs in the
    reference.

    Raises:
        ValueError: If ``n < 1``.
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    hyp = ngrams(normalize_tokens(hypothesis), n)
    ref = ngrams(normalize_tokens(reference), n)
    overlap = sum((hyp & ref).values())
    return _f_score(overlap, hyp.total(), ref.total())


def lcs_length(x: Sequence[str], y: Sequence[str]) -> int:
    """Length of the longest common subsequence of two token sequences."""
    if len(x) < len(y):
        x, y = y, x
    previous = [0] * (len(y) + 1)
    for a in x:
        current = [0]
        for j, b in enumerate(y, start=1):
            if a == b:
                current.append(previous[j - 1] + 1)
            else:
                current.append(max(previous[j], current[j - 1]))
        previous = current
    return previous[-1]


def lcs_f1(hypothesis: str, reference: str) -> float:
    """F1 with the token-level longest common subsequence as the overlap."""
    hyp = normalize_tokens(hypothesis)
    ref = normalize_tokens(reference)
    return _f_score(lcs_length(hyp, ref), len(hyp), len(ref))
