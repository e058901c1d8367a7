"""Retrieval and completion metrics."""
from __future__ import annotations

import math
from typing import Hashable, Sequence

from .lexer import Token, TokenKind

_TRAILING = (TokenKind.NEWLINE, TokenKind.INDENT_MARKER)


def average_precision_at_k(ranked: Sequence[Hashable], relevant: set, k: int) -> float:
    """AP@K normalised by min(|relevant|, K)."""
    if k < 1:
        raise ValueError("K must be >= 1")
    if not relevant:
        raise ValueError("query without relevant items")
    hits = 0
    total = 0.0
    for rank, item in enumerate(ranked[:k], start=1):
        if item in relevant:
            hits += 1
            total += hits / rank
    return total / min(len(relevant), k)


def map_at_k(average_precisions: Sequence[float]) -> float:
    if not average_precisions:
        raise ValueError("need at least one query")
    return sum(average_precisions) / len(average_precisions)


def precision_at_1(rankings: Sequence[tuple[Sequence[Hashable], set]]) -> float:
    if not rankings:
        raise ValueError("need at least one query")
    return sum(1.0 for ranked, rel in rankings if ranked and ranked[0] in rel) / len(rankings)


def _strip(tokens: Sequence[Token]) -> list[str]:
    texts = [t.text for t in tokens]
    kinds = [t.kind for t in tokens]
    while kinds and kinds[-1] in _TRAILING:
        kinds.pop()
        texts.pop()
    return texts


def exact_match(pred: Sequence[Token], gold: Sequence[Token]) -> int:
    return int(_strip(pred) == _strip(gold))


def levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def edit_similarity(pred: str, gold: str) -> float:
    """100 * (1 - levenshtein / max length); 100 when both are empty."""
    longest = max(len(pred), len(gold))
    if longest == 0:
        return 100.0
    return 100.0 * (1.0 - levenshtein(pred, gold) / longest)


def perplexity(log_probs: Sequence[float]) -> float:
    if not log_probs:
        raise ValueError("need at least one token")
    if any(math.isinf(lp) or math.isnan(lp) for lp in log_probs):
        raise ValueError("non-finite log-probability (model assigned zero mass)")
    return math.exp(-sum(log_probs) / len(log_probs))
