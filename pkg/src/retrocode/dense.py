"""Shared-weight dual encoder, InfoNCE training and exact dot-product index.

One parameter set encodes both (partial) queries and database fragments:
``encode(x) = P @ mean(E[s] for s in symbols(x))`` where the symbol sequence
is the code tokens, a separator, then the API names.
"""
from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .codeview import api_sequence_from_tokens
from .corpus import Corpus
from .lexer import Token
from .sparse import ScoredHit, rank_scores

log = logging.getLogger(__name__)

OOV = "<OOV>"
API_SEP = "<API>"
API_PREFIX = "@"
PARAMS_MAGIC = b"RCPARAMS"
INDEX_MAGIC = b"RCVINDEX"
FORMAT_VERSION = 1


class TrainingDiverged(RuntimeError):
    pass


def symbols(tokens: Iterable[Token], api: Iterable[str]) -> list[str]:
    return [t.text for t in tokens] + [API_SEP] + [API_PREFIX + name for name in api]


def build_vocab(sequences: Iterable[list[str]]) -> dict[str, int]:
    seen = {OOV, API_SEP}
    for seq in sequences:
        seen.update(seq)
    ordered = [OOV, API_SEP] + sorted(seen - {OOV, API_SEP})
    return {s: i for i, s in enumerate(ordered)}


@dataclass
class EncoderParams:
    vocab: dict[str, int]
    embedding: np.ndarray  # |V| x d
    projection: np.ndarray  # d x d

    @property
    def d(self) -> int:
        return self.embedding.shape[1]

    def ids(self, syms: Sequence[str]) -> np.ndarray:
        oov = self.vocab[OOV]
        return np.fromiter((self.vocab.get(s, oov) for s in syms), dtype=np.int64, count=len(syms))

    def copy(self) -> "EncoderParams":
        return EncoderParams(dict(self.vocab), self.embedding.copy(), self.projection.copy())


def init_params(vocab: dict[str, int], d: int = 64, seed: int = 0) -> EncoderParams:
    rng = np.random.default_rng(seed)
    emb = rng.uniform(-0.05, 0.05, size=(len(vocab), d))
    return EncoderParams(vocab, emb, np.eye(d))


def pooling_matrix(params: EncoderParams, seqs: Sequence[Sequence[str]]) -> sp.csr_matrix:
    """Row i averages the embedding rows of sequence i."""
    rows, cols, vals = [], [], []
    for i, seq in enumerate(seqs):
        ids = params.ids(seq)
        rows.append(np.full(len(ids), i))
        cols.append(ids)
        vals.append(np.full(len(ids), 1.0 / len(ids)))
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(len(seqs), len(params.vocab)),
    )


def encode_symbols(params: EncoderParams, seqs: Sequence[Sequence[str]]) -> np.ndarray:
    pooled = pooling_matrix(params, seqs) @ params.embedding
    return pooled @ params.projection.T


def encode(params: EncoderParams, tokens: Sequence[Token], api: Sequence[str]) -> np.ndarray:
    if not tokens:
        raise ValueError("cannot encode an empty token sequence")
    return encode_symbols(params, [symbols(tokens, api)])[0]


def info_nce_loss(query_vecs: np.ndarray, positive_vecs: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """In-batch-negative InfoNCE with dot-product similarity.

    Row i of ``positive_vecs`` is the positive for query i and a negative
    for every other query. Returns (loss, dL/dQ, dL/dC).
    """
    q = np.asarray(query_vecs, dtype=np.float64)
    c = np.asarray(positive_vecs, dtype=np.float64)
    if q.shape != c.shape or q.ndim != 2:
        raise ValueError("query and positive batches must have the same 2-D shape")
    batch = q.shape[0]
    if batch < 2:
        raise ValueError("InfoNCE needs a batch of at least 2")
    if not (np.isfinite(q).all() and np.isfinite(c).all()):
        raise ValueError("non-finite input vectors")
    sims = q @ c.T
    shifted = sims - sims.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted - log_z[:, None]
    loss = -float(np.mean(np.diag(log_probs)))
    grad_sims = np.exp(log_probs)
    grad_sims[np.diag_indices(batch)] -= 1.0
    grad_sims /= batch
    return loss, grad_sims @ c, grad_sims.T @ q


@dataclass
class TrainConfig:
    batch_size: int = 64
    learning_rate: float = 0.05
    epochs: int = 30
    seed: int = 0
    d: int = 64

    def __post_init__(self) -> None:
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (InfoNCE needs a negative)")


@dataclass
class TrainResult:
    params: EncoderParams
    epoch_losses: list[float] = field(default_factory=list)


class _Adam:
    def __init__(self, shapes: list[tuple[int, ...]], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            m_hat = m / (1 - self.beta1**self.t)
            v_hat = v / (1 - self.beta2**self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def pair_symbols(pairs: Iterable) -> tuple[list[list[str]], list[list[str]]]:
    queries, positives = [], []
    for p in pairs:
        queries.append(symbols(p.query_tokens, p.query_api))
        positives.append(symbols(p.positive_tokens, p.positive_api))
    return queries, positives


def train_encoder(
    pairs: Sequence,
    config: TrainConfig | None = None,
    vocab: dict[str, int] | None = None,
    init: EncoderParams | None = None,
) -> TrainResult:
    """Mini-batch Adam on InfoNCE; queries and positives share all weights.

    Negatives are the other positives of the same batch only.
    """
    config = config or TrainConfig()
    if len(pairs) < config.batch_size:
        raise ValueError(f"need at least batch_size={config.batch_size} pairs, got {len(pairs)}")
    q_syms, c_syms = pair_symbols(pairs)
    if init is not None:
        params = init.copy()
    else:
        params = init_params(vocab or build_vocab(q_syms + c_syms), config.d, config.seed)
    q_pool = pooling_matrix(params, q_syms)
    c_pool = pooling_matrix(params, c_syms)
    opt = _Adam([params.embedding.shape, params.projection.shape], config.learning_rate)
    rng = np.random.default_rng(config.seed)
    n = len(pairs)
    losses: list[float] = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        batches = [order[s : s + config.batch_size] for s in range(0, n, config.batch_size)]
        batches = [b for b in batches if len(b) >= 2]
        total = 0.0
        for idx in batches:
            qp, cp = q_pool[idx], c_pool[idx]
            with np.errstate(over="ignore", invalid="ignore"):
                q_mean = qp @ params.embedding
                c_mean = cp @ params.embedding
                qv = q_mean @ params.projection.T
                cv = c_mean @ params.projection.T
            if not (np.isfinite(qv).all() and np.isfinite(cv).all()):
                raise TrainingDiverged(f"non-finite encodings at epoch {epoch}")
            loss, g_q, g_c = info_nce_loss(qv, cv)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            g_proj = g_q.T @ q_mean + g_c.T @ c_mean
            g_emb = qp.T @ (g_q @ params.projection) + cp.T @ (g_c @ params.projection)
            opt.step([params.embedding, params.projection], [np.asarray(g_emb), g_proj])
            total += loss * len(idx)
        if not (np.isfinite(params.embedding).all() and np.isfinite(params.projection).all()):
            raise TrainingDiverged(f"non-finite parameters after epoch {epoch}")
        losses.append(total / sum(len(b) for b in batches))
        log.info("epoch %d loss %.4f", epoch, losses[-1])
    return TrainResult(params, losses)


def in_batch_accuracy(params: EncoderParams, pairs: Sequence) -> float:
    q_syms, c_syms = pair_symbols(pairs)
    sims = encode_symbols(params, q_syms) @ encode_symbols(params, c_syms).T
    return float(np.mean(np.argmax(sims, axis=1) == np.arange(len(pairs))))


# --------------------------------------------------------------------------
# vector index


@dataclass
class VectorIndex:
    ids: np.ndarray
    vectors: np.ndarray

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.ids)

    def scores(self, query_vec: np.ndarray) -> np.ndarray:
        return self.vectors @ query_vec


def fragment_symbols(corpus: Corpus) -> list[list[str]]:
    return [symbols(f.tokens, api_sequence_from_tokens(list(f.tokens))) for f in corpus.fragments]


def build_vector_index(params: EncoderParams, corpus: Corpus) -> VectorIndex:
    vecs = encode_symbols(params, fragment_symbols(corpus))
    return VectorIndex(np.arange(len(corpus.fragments), dtype=np.int64), vecs)


def dense_topk(
    index: VectorIndex,
    params: EncoderParams,
    query_tokens: Sequence[Token],
    query_api: Sequence[str],
    k: int,
) -> list[ScoredHit]:
    q = encode(params, query_tokens, query_api)
    return rank_scores(index.scores(q), k, index.ids)


# --------------------------------------------------------------------------
# persistence: magic, u32 header length, JSON header, raw little-endian arrays


def _write_container(path: str | Path, magic: bytes, header: dict, arrays: dict[str, np.ndarray]) -> None:
    meta = dict(header)
    meta["format_version"] = FORMAT_VERSION
    meta["arrays"] = {
        name: {"dtype": np.dtype(a.dtype).newbyteorder("<").str, "shape": list(a.shape)} for name, a in arrays.items()
    }
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for name in meta["arrays"]:
            a = arrays[name]
            fh.write(np.ascontiguousarray(a, dtype=a.dtype.newbyteorder("<")).tobytes())


def _read_container(path: str | Path, magic: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if data[: len(magic)] != magic:
        raise ValueError(f"{path}: not a {magic.decode()} container")
    (n,) = struct.unpack("<I", data[len(magic) : len(magic) + 4])
    start = len(magic) + 4
    meta = json.loads(data[start : start + n])
    if meta.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {meta.get('format_version')}")
    offset = start + n
    arrays = {}
    for name, spec in meta["arrays"].items():
        dtype = np.dtype(spec["dtype"])
        count = int(np.prod(spec["shape"])) if spec["shape"] else 1
        arrays[name] = np.frombuffer(data, dtype=dtype, count=count, offset=offset).reshape(spec["shape"]).copy()
        offset += count * dtype.itemsize
    return meta, arrays


def save_params(params: EncoderParams, path: str | Path, extra: dict | None = None) -> None:
    vocab = sorted(params.vocab, key=params.vocab.__getitem__)
    _write_container(
        path,
        PARAMS_MAGIC,
        {"vocab": vocab, **(extra or {})},
        {"embedding": params.embedding, "projection": params.projection},
    )


def load_params(path: str | Path) -> EncoderParams:
    meta, arrays = _read_container(path, PARAMS_MAGIC)
    vocab = {s: i for i, s in enumerate(meta["vocab"])}
    return EncoderParams(vocab, arrays["embedding"], arrays["projection"])


def save_vector_index(index: VectorIndex, path: str | Path, extra: dict | None = None) -> None:
    _write_container(path, INDEX_MAGIC, dict(extra or {}), {"ids": index.ids, "vectors": index.vectors})


def load_vector_index(path: str | Path) -> VectorIndex:
    _, arrays = _read_container(path, INDEX_MAGIC)
    return VectorIndex(arrays["ids"], arrays["vectors"])
