"""Okapi BM25 over corpus fragments."""
from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import Corpus
from .lexer import Token, TokenKind

FORMAT_NAME = "retrocode.bm25"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class ScoredHit:
    fragment_id: int
    score: float


_CAMEL = re.compile(r"[A-Z]+(?=[A-Z][a-z])|[A-Z]?[a-z]+|[A-Z]+|\d+")


def split_identifier(name: str) -> list[str]:
    """``parseHTTPResponse_v2`` -> ["parse", "http", "response", "v", "2"]."""
    parts: list[str] = []
    for chunk in name.split("_"):
        parts.extend(p.lower() for p in _CAMEL.findall(chunk))
    return parts


def analyze(tokens: Iterable[Token]) -> list[str]:
    """Index terms: identifier subtokens, keywords lowercased, literals whole."""
    terms: list[str] = []
    for tok in tokens:
        if tok.kind is TokenKind.IDENTIFIER:
            terms.extend(split_identifier(tok.text))
        elif tok.kind is TokenKind.KEYWORD:
            terms.append(tok.text.lower())
        elif tok.kind is TokenKind.LITERAL:
            terms.append(tok.text)
    return terms


def idf(n_docs: int, df: int) -> float:
    return max(0.0, math.log(1.0 + (n_docs - df + 0.5) / (df + 0.5)))


class Bm25Index:
    def __init__(
        self,
        term_lists: Sequence[Sequence[str]],
        doc_lens: Sequence[int] | None = None,
        k1: float = 1.2,
        b: float = 0.75,
    ):
        if not term_lists:
            raise ValueError("BM25 index needs at least one document")
        self.k1 = k1
        self.b = b
        self.N = len(term_lists)
        self.doc_len = np.asarray(doc_lens if doc_lens is not None else [len(t) for t in term_lists], dtype=np.float64)
        self.avg_len = float(self.doc_len.mean())
        self.doc_tf: list[Counter] = [Counter(terms) for terms in term_lists]
        postings: dict[str, list[tuple[int, int]]] = {}
        for doc_id, tf in enumerate(self.doc_tf):
            for term in sorted(tf):
                postings.setdefault(term, []).append((doc_id, tf[term]))
        self.postings = dict(sorted(postings.items()))
        self.df = {t: len(p) for t, p in self.postings.items()}
        self._arrays = {
            t: (np.array([d for d, _ in p], dtype=np.int64), np.array([f for _, f in p], dtype=np.float64))
            for t, p in self.postings.items()
        }

    def idf(self, term: str) -> float:
        return idf(self.N, self.df.get(term, 0))

    def score(self, query_terms: Sequence[str], doc_id: int) -> float:
        if not 0 <= doc_id < self.N:
            raise KeyError(f"unknown fragment id {doc_id}")
        tf_map = self.doc_tf[doc_id]
        norm = self.k1 * (1.0 - self.b + self.b * self.doc_len[doc_id] / self.avg_len)
        total = 0.0
        for term in query_terms:
            tf = tf_map.get(term, 0)
            if tf:
                total += self.idf(term) * (tf * (self.k1 + 1.0)) / (tf + norm)
        return float(total)

    def score_all(self, query_terms: Sequence[str]) -> np.ndarray:
        """Scores of every document; same operation order as :meth:`score`."""
        scores = np.zeros(self.N)
        norms = self.k1 * (1.0 - self.b + self.b * self.doc_len / self.avg_len)
        for term in query_terms:
            hit = self._arrays.get(term)
            if hit is None:
                continue
            ids, tf = hit
            scores[ids] += self.idf(term) * (tf * (self.k1 + 1.0)) / (tf + norms[ids])
        return scores

    def topk(self, query_terms: Sequence[str], k: int) -> list[ScoredHit]:
        if k < 1:
            raise ValueError("k must be >= 1")
        return rank_scores(self.score_all(query_terms), k)

    # persistence

    def to_dict(self) -> dict:
        return {
            "format": FORMAT_NAME,
            "format_version": FORMAT_VERSION,
            "k1": self.k1,
            "b": self.b,
            "N": self.N,
            "avg_len": self.avg_len,
            "doc_len": [int(x) for x in self.doc_len],
            "postings": {t: [[d, f] for d, f in p] for t, p in self.postings.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Bm25Index":
        if data.get("format") != FORMAT_NAME or data.get("format_version") != FORMAT_VERSION:
            raise ValueError("unsupported bm25 index format version")
        term_lists: list[list[str]] = [[] for _ in range(data["N"])]
        for term, plist in data["postings"].items():
            for d, f in plist:
                term_lists[d].extend([term] * f)
        return cls(term_lists, data["doc_len"], data["k1"], data["b"])


def rank_scores(scores: np.ndarray, k: int, ids: np.ndarray | None = None) -> list[ScoredHit]:
    """Top ``k`` by descending score, ties by ascending id."""
    ids = np.arange(len(scores)) if ids is None else np.asarray(ids)
    order = np.lexsort((ids, -scores))[:k]
    return [ScoredHit(int(ids[i]), float(scores[i])) for i in order]


def build_bm25(corpus: Corpus, k1: float = 1.2, b: float = 0.75) -> Bm25Index:
    """Index every fragment; document length is the fragment's token count."""
    return Bm25Index(
        [analyze(f.tokens) for f in corpus.fragments],
        [len(f.tokens) for f in corpus.fragments],
        k1,
        b,
    )


def bm25_score(index: Bm25Index, query_terms: Sequence[str], fragment_id: int) -> float:
    return index.score(query_terms, fragment_id)


def bm25_topk(index: Bm25Index, query_terms: Sequence[str], k: int) -> list[ScoredHit]:
    return index.topk(query_terms, k)


def save_bm25(index: Bm25Index, path: str | Path, meta: dict | None = None) -> None:
    data = {**(meta or {}), **index.to_dict()}
    Path(path).write_text(json.dumps(data, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8")


def load_bm25(path: str | Path) -> Bm25Index:
    return Bm25Index.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
