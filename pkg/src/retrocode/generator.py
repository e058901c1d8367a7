"""Retrieval-conditioned completion with a copy-augmented n-gram reference model."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Protocol, Sequence

import numpy as np

from .corpus import Corpus
from .hybrid import RetrievalConfig, RetrievalIndices, RetrievalOutcome, retrieve
from .lexer import Token, TokenKind

OOV_TEXT = "<unk>"
SEPARATOR = Token("<SEP>", TokenKind.PUNCTUATION)
LINE_CAP = 64
REFRESH_AFTER = 100


@dataclass
class GeneratorInput:
    retrieved: list[Token]
    context: list[Token]
    separator: Token = SEPARATOR

    def concatenated(self) -> list[Token]:
        return list(self.retrieved) + [self.separator] + list(self.context)


class NgramModel:
    """Interpolated n-gram model.

    Orders 2..n are mixed with Witten-Bell weights ``c(h) / (c(h) + T(h))``
    (T = distinct continuations of h); the unigram level is add-one smoothed
    over the vocabulary plus an OOV symbol. An unseen history contributes
    nothing, so the distribution backs off to the next lower order.
    """

    def __init__(self, sequences: Iterable[Sequence[Token]], order: int = 4):
        if order < 1:
            raise ValueError("order must be >= 1")
        self.order = order
        seqs = [list(s) for s in sequences]
        kinds: dict[str, TokenKind] = {}
        for seq in seqs:
            for t in seq:
                kinds.setdefault(t.text, t.kind)
        texts = sorted(kinds)
        self.tokens = [Token(OOV_TEXT, TokenKind.IDENTIFIER)] + [Token(t, kinds[t]) for t in texts]
        self.index = {t: i + 1 for i, t in enumerate(texts)}
        self.counts: list[dict[tuple[str, ...], Counter]] = [dict() for _ in range(order)]
        unigram = np.zeros(len(self.tokens))
        for seq in seqs:
            words = [t.text for t in seq]
            for i, w in enumerate(words):
                unigram[self.index[w]] += 1
                for k in range(1, order):
                    if i - k < 0:
                        break
                    hist = tuple(words[i - k : i])
                    self.counts[k].setdefault(hist, Counter())[w] += 1
        self.unigram_counts = unigram
        self.unigram = (unigram + 1.0) / (unigram.sum() + len(self.tokens))
        self._vectors: dict[tuple[str, ...], tuple[np.ndarray, np.ndarray, float]] = {}

    @property
    def vocab_size(self) -> int:
        return len(self.tokens)

    def token_id(self, text: str) -> int:
        return self.index.get(text, 0)

    def ml(self, history: Sequence[str], word: str) -> float:
        """Unsmoothed maximum-likelihood estimate P(word | history)."""
        if not history:
            return self.unigram_counts[self.token_id(word)] / self.unigram_counts.sum()
        followers = self.counts[len(history)].get(tuple(history))
        if not followers:
            return 0.0
        return followers[word] / sum(followers.values())

    def _follow(self, hist: tuple[str, ...]) -> tuple[np.ndarray, np.ndarray, float] | None:
        cached = self._vectors.get(hist)
        if cached is None:
            followers = self.counts[len(hist)].get(hist)
            if not followers:
                return None
            ids = np.array([self.index[w] for w in followers], dtype=np.int64)
            cnt = np.array(list(followers.values()), dtype=np.float64)
            total = cnt.sum()
            cached = (ids, cnt / total, total / (total + len(cnt)))
            self._vectors[hist] = cached
        return cached

    def distribution(self, context: Sequence[Token]) -> np.ndarray:
        words = [t.text for t in context[-(self.order - 1) :]] if self.order > 1 else []
        p = self.unigram.copy()
        for k in range(1, self.order):
            if len(words) < k:
                break
            hit = self._follow(tuple(words[-k:]))
            if hit is None:
                break  # longer histories are unseen too
            ids, probs, lam = hit
            p *= 1.0 - lam
            p[ids] += lam * probs
        return p


class LanguageModel(Protocol):
    tokens: list[Token]

    def token_id(self, text: str) -> int: ...

    def next_distribution(self, inp: GeneratorInput) -> np.ndarray: ...


@dataclass
class CopyAugmentedModel:
    base: NgramModel
    lam: float = 0.5
    min_match: int = 2

    @property
    def tokens(self) -> list[Token]:
        return self.base.tokens

    def token_id(self, text: str) -> int:
        return self.base.token_id(text)

    def copy_targets(self, retrieved: Sequence[Token], context: Sequence[Token]) -> list[str]:
        """Tokens following each occurrence of the longest context suffix
        (length >= min_match) found in ``retrieved``."""
        r = [t.text for t in retrieved]
        c = [t.text for t in context]
        best_len, targets = 0, []
        for end in range(len(r) - 1):  # match ends at r[end], r[end + 1] is copied
            n = 0
            while n < len(c) and n <= end and r[end - n] == c[len(c) - 1 - n]:
                n += 1
            if n < self.min_match:
                continue
            if n > best_len:
                best_len, targets = n, [r[end + 1]]
            elif n == best_len:
                targets.append(r[end + 1])
        return targets

    def next_distribution(self, inp: GeneratorInput) -> np.ndarray:
        base = self.base.distribution(inp.context)
        if not inp.retrieved:
            return base
        targets = self.copy_targets(inp.retrieved, inp.context)
        if not targets:
            return base
        copy = np.zeros_like(base)
        for t in targets:
            copy[self.token_id(t)] += 1.0 / len(targets)
        return self.lam * base + (1.0 - self.lam) * copy


def train_ngram(corpus: Corpus, order: int = 4) -> NgramModel:
    return NgramModel([corpus.file_tokens(f.file_id) for f in corpus.files], order)


def next_distribution(model: LanguageModel, inp: GeneratorInput) -> np.ndarray:
    if not inp.context:
        raise ValueError("context must be non-empty")
    return model.next_distribution(inp)


# --------------------------------------------------------------------------
# decoding

Retriever = Callable[[list[Token]], RetrievalOutcome]


def make_retriever(indices: RetrievalIndices, config: RetrievalConfig, exclude_path: str | None = None) -> Retriever:
    def run(query: list[Token]) -> RetrievalOutcome:
        return retrieve(query, None, config, indices, exclude_path)

    return run


@dataclass
class CompletionResult:
    generated: list[Token]
    log_probs: list[float]
    retrievals: list[RetrievalOutcome] = field(default_factory=list)


def _retrieved_tokens(outcome: RetrievalOutcome | None) -> list[Token]:
    if outcome is None or outcome.aligned_fragment is None:
        return []
    return list(outcome.aligned_fragment.tokens)


def _run(
    model: LanguageModel,
    retriever: Retriever | None,
    context: Sequence[Token],
    steps: int,
    forced: Sequence[Token] | None = None,
    stop_at_newline: bool = False,
    refresh_after: int | None = REFRESH_AFTER,
) -> CompletionResult:
    if not context:
        raise ValueError("context must be non-empty")
    history = list(context)
    outcomes: list[RetrievalOutcome] = []

    def fetch() -> list[Token]:
        if retriever is None:
            return []
        outcome = retriever(list(history))
        outcomes.append(outcome)
        return _retrieved_tokens(outcome)

    retrieved = fetch()
    generated: list[Token] = []
    log_probs: list[float] = []
    for i in range(steps):
        if refresh_after is not None and i == refresh_after:
            retrieved = fetch()
        dist = model.next_distribution(GeneratorInput(retrieved, history))
        if forced is not None:
            tok = forced[i]
            p = dist[model.token_id(tok.text)]
        else:
            idx = int(np.argmax(dist))
            tok, p = model.tokens[idx], dist[idx]
        generated.append(tok)
        log_probs.append(math.log(p) if p > 0 else -math.inf)
        history.append(tok)
        if stop_at_newline and tok.kind is TokenKind.NEWLINE:
            break
    return CompletionResult(generated, log_probs, outcomes)


def complete_line(model: LanguageModel, retriever: Retriever | None, context: Sequence[Token], cap: int = LINE_CAP) -> CompletionResult:
    """Greedy completion until a NEWLINE token or ``cap`` tokens; one retrieval."""
    return _run(model, retriever, context, cap, stop_at_newline=True, refresh_after=None)


def complete_tokens(model: LanguageModel, retriever: Retriever | None, context: Sequence[Token], budget: int) -> CompletionResult:
    """Greedy ``budget`` tokens; retrieval before the first token and once more after 100."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    return _run(model, retriever, context, budget)


def score_tokens(model: LanguageModel, retriever: Retriever | None, context: Sequence[Token], gold: Sequence[Token]) -> CompletionResult:
    """Teacher-forced log-probabilities of ``gold`` under the same retrieval schedule."""
    return _run(model, retriever, context, len(gold), forced=gold)
