"""Clone-detection and completion evaluation harnesses."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .benchmark import CloneBenchmark, CompletionItem
from .generator import LINE_CAP, LanguageModel, complete_line, make_retriever, score_tokens
from .hybrid import RetrievalConfig, RetrievalIndices, score_query
from .lexer import render_line
from .metrics import average_precision_at_k, edit_similarity, exact_match, map_at_k, perplexity, precision_at_1

REPORT_FORMAT = "retrocode.report"
REPORT_VERSION = 1
DEFAULT_ALPHAS = (0.0, 0.01, 0.03, 0.1, 0.3, 0.9, 3.0, 10.0, 100.0, 1e6)


def fingerprint(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class EvalReport:
    kind: str
    metrics: dict[str, float]
    config: dict
    per_query: list[dict] = field(default_factory=list)

    def __post_init__(self) -> None:
        for name, value in self.metrics.items():
            base = name.rsplit(".", 1)[-1]
            if base.startswith(("map", "p_at_1", "em")) and not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} out of range: {value}")
            if base.startswith("edit_sim") and not 0.0 <= value <= 100.0:
                raise ValueError(f"{name} out of range: {value}")
            if base.startswith("perplexity") and value < 1.0 - 1e-12:
                raise ValueError(f"{name} out of range: {value}")

    @property
    def fingerprint(self) -> str:
        return fingerprint(self.config)

    def to_dict(self, include_queries: bool = False) -> dict:
        out = {
            "format": REPORT_FORMAT,
            "format_version": REPORT_VERSION,
            "kind": self.kind,
            "metrics": self.metrics,
            "config": self.config,
            "fingerprint": self.fingerprint,
        }
        if include_queries:
            out["per_query"] = self.per_query
        return out

    def to_json(self, include_queries: bool = False) -> str:
        return json.dumps(self.to_dict(include_queries), sort_keys=True, indent=1) + "\n"

    def table(self) -> str:
        width = max(len(k) for k in self.metrics) if self.metrics else 6
        rows = [f"{self.kind}  [fingerprint {self.fingerprint}]"]
        rows += [f"  {k.ljust(width)}  {v:.4f}" for k, v in sorted(self.metrics.items())]
        return "\n".join(rows) + "\n"


# --------------------------------------------------------------------------
# clone detection (partial search)


def rank_programs(
    bench: CloneBenchmark,
    indices: RetrievalIndices,
    config: RetrievalConfig,
    query_index: int,
) -> list[tuple[str, float]]:
    """Programs ranked by best-fragment score, self excluded; ties by path."""
    query = bench.queries[query_index]
    corpus = indices.corpus
    sparse, dense = score_query(query.tokens, None, indices, config.mode)
    if config.mode == "sparse":
        scores = sparse
    elif config.mode == "dense":
        scores = dense
    else:
        scores = dense + config.alpha * sparse
    frag_file = np.array([f.file_id for f in corpus.fragments])
    best = np.full(len(corpus.files), -np.inf)
    np.maximum.at(best, frag_file, scores)
    paths = [f.path for f in corpus.files]
    ranked = [(paths[i], float(best[i])) for i in range(len(paths)) if paths[i] != query.path]
    ranked.sort(key=lambda item: (-item[1], item[0]))
    return ranked


def run_clone_eval(
    bench: CloneBenchmark,
    indices: RetrievalIndices,
    config: RetrievalConfig,
    k: int = 100,
    stamp: dict | None = None,
) -> EvalReport:
    """MAP@k and P@1 at program granularity over every fragment in the pool.

    Each query scores the whole pool exhaustively, so the hybrid candidate
    union is the full pool and ``config.k`` does not truncate the ranking.
    """
    indices.require(config.mode)
    aps: list[float] = []
    tops: list[tuple[list[str], set[str]]] = []
    per_query: list[dict] = []
    for qi, query in enumerate(bench.queries):
        ranked = rank_programs(bench, indices, config, qi)
        ids = [p for p, _ in ranked]
        rel = bench.relevant(query)
        ap = average_precision_at_k(ids, rel, k)
        aps.append(ap)
        tops.append((ids[:1], rel))
        per_query.append({"query": query.path, "ap": ap, "ranking": ranked[:k], "relevant": sorted(rel)})
    metrics = {f"map@{k}": map_at_k(aps), "p_at_1": precision_at_1(tops)}
    cfg = {
        "mode": config.mode,
        "alpha": config.alpha,
        "k": k,
        "queries": len(bench.queries),
        "programs": len(indices.corpus.files),
        **(stamp or {}),
    }
    return EvalReport("clone", metrics, cfg, per_query)


def alpha_sweep(
    dev: CloneBenchmark,
    indices: RetrievalIndices,
    alphas: Sequence[float] = DEFAULT_ALPHAS,
    k: int = 100,
    stamp: dict | None = None,
) -> tuple[float, EvalReport]:
    """Pick the alpha maximising dev MAP@k (first in grid order on ties)."""
    rows = []
    for a in alphas:
        rep = run_clone_eval(dev, indices, RetrievalConfig("hybrid", alpha=float(a)), k)
        rows.append({"alpha": float(a), **rep.metrics})
    key = f"map@{k}"
    best = max(rows, key=lambda r: r[key])  # max keeps the first maximum
    metrics = {f"{key}.best": best[key], "alpha.best": best["alpha"]}
    cfg = {"alphas": [float(a) for a in alphas], "k": k, "queries": len(dev.queries), **(stamp or {})}
    return best["alpha"], EvalReport("alpha-sweep", metrics, cfg, rows)


# --------------------------------------------------------------------------
# completion


def _completion_pass(
    model: LanguageModel,
    indices: RetrievalIndices | None,
    config: RetrievalConfig | None,
    line_items: Sequence[CompletionItem],
    token_items: Sequence[CompletionItem],
    line_cap: int,
) -> tuple[dict[str, float], list[dict]]:
    def retriever(item: CompletionItem):
        if config is None:
            return None
        return make_retriever(indices, config, item.path)

    ems: list[int] = []
    sims: list[float] = []
    log_probs: list[float] = []
    rows: list[dict] = []
    for item in line_items:
        res = complete_line(model, retriever(item), item.context, line_cap)
        pred, gold = render_line(res.generated), render_line(item.gold)
        em = exact_match(res.generated, item.gold)
        sim = edit_similarity(pred, gold)
        ems.append(em)
        sims.append(sim)
        rows.append({"path": item.path, "at": len(item.context), "pred": pred, "gold": gold, "em": em, "edit_sim": sim})
    for item in token_items:
        res = score_tokens(model, retriever(item), item.context, item.gold)
        log_probs.extend(res.log_probs)
        rows.append({"path": item.path, "at": len(item.context), "tokens": len(item.gold), "log_prob": float(np.sum(res.log_probs))})
    metrics = {}
    if ems:
        metrics["em"] = float(np.mean(ems))
        metrics["edit_sim"] = float(np.mean(sims))
    if log_probs:
        metrics["perplexity"] = perplexity(log_probs)
    return metrics, rows


def run_completion_eval(
    line_items: Sequence[CompletionItem],
    token_items: Sequence[CompletionItem],
    model: LanguageModel,
    indices: RetrievalIndices | None,
    config: RetrievalConfig | None,
    stamp: dict | None = None,
    line_cap: int = LINE_CAP,
) -> EvalReport:
    """Line EM / edit similarity and teacher-forced perplexity.

    ``config=None`` evaluates without retrieval only; otherwise the report
    carries both the retrieval run and the retrieval-off ablation
    (``off.*`` metrics).
    """
    if config is not None:
        if indices is None:
            raise LookupError("retrieval index")
        indices.require(config.mode)
    metrics, rows = _completion_pass(model, indices, config, line_items, token_items, line_cap)
    if config is not None:
        off, _ = _completion_pass(model, None, None, line_items, token_items, line_cap)
        metrics.update({f"off.{k}": v for k, v in off.items()})
    cfg = {
        "retrieval": "off" if config is None else config.mode,
        "alpha": None if config is None else config.alpha,
        "k": None if config is None else config.k,
        "line_cap": line_cap,
        "line_items": len(line_items),
        "token_items": len(token_items),
        **(stamp or {}),
    }
    return EvalReport("completion", metrics, cfg, rows)


def with_alpha(config: RetrievalConfig, alpha: float) -> RetrievalConfig:
    return replace(config, alpha=alpha)
