"""Sparse / dense / hybrid retrieval with fragment alignment."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .codeview import api_sequence_from_tokens
from .corpus import Corpus, Fragment, successor
from .dense import EncoderParams, VectorIndex, encode
from .lexer import Token
from .sparse import Bm25Index, ScoredHit, analyze, rank_scores

Mode = Literal["sparse", "dense", "hybrid"]
MODES = ("sparse", "dense", "hybrid")


@dataclass
class RetrievalConfig:
    mode: Mode = "hybrid"
    alpha: float = 0.9
    k: int = 100
    exclude_same_file: bool = True

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass
class RetrievalIndices:
    corpus: Corpus
    bm25: Bm25Index | None = None
    params: EncoderParams | None = None
    vectors: VectorIndex | None = None

    def require(self, mode: str) -> None:
        if mode in ("sparse", "hybrid") and self.bm25 is None:
            raise LookupError("sparse index")
        if mode in ("dense", "hybrid") and (self.params is None or self.vectors is None):
            raise LookupError("dense index")


@dataclass
class RetrievalOutcome:
    best_hit: ScoredHit | None
    aligned_fragment: Fragment | None
    sub_scores: dict[int, dict[str, float]] = field(default_factory=dict)
    ranked: list[ScoredHit] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return self.best_hit is None


def hybrid_score(dense_sim: float, bm25: float, alpha: float) -> float:
    return dense_sim + alpha * bm25


def _file_mask(corpus: Corpus, exclude_path: str | None) -> np.ndarray:
    keep = np.ones(len(corpus.fragments), dtype=bool)
    if exclude_path is None:
        return keep
    for f in corpus.files:
        if f.path == exclude_path:
            for frag in corpus.file_fragments(f.file_id):
                keep[frag.fragment_id] = False
    return keep


def score_query(
    query_tokens: Sequence[Token],
    query_api: Sequence[str] | None,
    indices: RetrievalIndices,
    mode: str,
) -> tuple[np.ndarray | None, np.ndarray | None]:
    """Exact (sparse, dense) scores of every fragment for the active mode(s)."""
    indices.require(mode)
    if query_api is None:
        query_api = api_sequence_from_tokens(list(query_tokens))
    sparse = dense = None
    if mode in ("sparse", "hybrid"):
        sparse = indices.bm25.score_all(analyze(query_tokens))
    if mode in ("dense", "hybrid"):
        dense = indices.vectors.scores(encode(indices.params, query_tokens, query_api))
    return sparse, dense


def rank_fragments(
    query_tokens: Sequence[Token],
    query_api: Sequence[str] | None,
    config: RetrievalConfig,
    indices: RetrievalIndices,
    exclude_path: str | None = None,
) -> tuple[list[ScoredHit], dict[int, dict[str, float]]]:
    """Ranked candidates (descending, ties by fragment id) and their sub-scores.

    Hybrid mode fuses exact sub-scores over the union of each retriever's
    top-k candidates.
    """
    if not query_tokens:
        return [], {}
    sparse, dense = score_query(query_tokens, query_api, indices, config.mode)
    keep = _file_mask(indices.corpus, exclude_path if config.exclude_same_file else None)
    allowed = np.flatnonzero(keep)
    if allowed.size == 0:
        return [], {}
    k = config.k
    if config.mode == "sparse":
        ranked = rank_scores(sparse[allowed], k, allowed)
    elif config.mode == "dense":
        ranked = rank_scores(dense[allowed], k, allowed)
    else:
        union = sorted(
            {h.fragment_id for h in rank_scores(sparse[allowed], k, allowed)}
            | {h.fragment_id for h in rank_scores(dense[allowed], k, allowed)}
        )
        ids = np.array(union, dtype=np.int64)
        fused = dense[ids] + config.alpha * sparse[ids]
        ranked = rank_scores(fused, len(ids), ids)
    subs: dict[int, dict[str, float]] = {}
    for hit in ranked:
        entry = {}
        if sparse is not None:
            entry["sparse"] = float(sparse[hit.fragment_id])
        if dense is not None:
            entry["dense"] = float(dense[hit.fragment_id])
        subs[hit.fragment_id] = entry
    return ranked, subs


def retrieve(
    query_tokens: Sequence[Token],
    query_api: Sequence[str] | None,
    config: RetrievalConfig,
    indices: RetrievalIndices,
    exclude_path: str | None = None,
) -> RetrievalOutcome:
    """Best fragment for the query plus its aligned successor.

    The aligned fragment is the best hit's successor in the same file, or
    the best hit itself when it is the file's last fragment.
    """
    ranked, subs = rank_fragments(query_tokens, query_api, config, indices, exclude_path)
    if not ranked:
        return RetrievalOutcome(None, None)
    best = ranked[0]
    nxt = successor(indices.corpus, best.fragment_id)
    aligned = nxt if nxt is not None else indices.corpus.fragment(best.fragment_id)
    return RetrievalOutcome(best, aligned, subs, ranked)
