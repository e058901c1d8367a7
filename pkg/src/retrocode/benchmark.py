"""Seeded synthetic clone / completion benchmark.

Each problem is one generated program; its variants are renamed and
dead-code-augmented copies. The clone pool holds every variant, and one
variant per problem is held out as completion test material while the
remaining variants form the completion retrieval database.
"""
from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .augment import (
    DEFAULT_TEMPLATES,
    FrequencyCandidateModel,
    build_candidate_model,
    corpus_name_pool,
    derive_seed,
    insert_dead_code,
    rename_identifiers,
    truncate_query,
)
from .codeview import parse
from .corpus import Corpus, build_corpus, decode_tokens, encode_tokens
from .lexer import LANGUAGE, Token, TokenKind, tokenize
from .synth import generate_program

FORMAT_NAME = "retrocode.benchmark"
FORMAT_VERSION = 1

_LINE_PREFIX = (TokenKind.NEWLINE, TokenKind.INDENT_MARKER)


@dataclass
class BenchmarkConfig:
    num_problems: int = 100
    variants_per_problem: int = 5
    seed: int = 7
    dev_problems: int = 50
    train_programs: int = 2000
    rename_prob: float = 0.5
    dead_code_count: int = 1
    lines_per_file: int = 3
    min_context: int = 16
    fragment_length: int = 128

    def __post_init__(self) -> None:
        if self.num_problems < 1 or self.dev_problems < 0 or self.train_programs < 0:
            raise ValueError("problem and program counts must be non-negative (num_problems >= 1)")
        if self.variants_per_problem < 2:
            raise ValueError("variants_per_problem must be >= 2")


@dataclass
class CloneQuery:
    path: str
    problem_id: int
    tokens: list[Token]


@dataclass
class CloneBenchmark:
    problems: dict[int, list[str]]
    queries: list[CloneQuery]
    sources: list[tuple[str, str]]
    fragment_length: int = 128
    _pool: Corpus | None = field(default=None, repr=False, compare=False)

    @property
    def pool(self) -> Corpus:
        if self._pool is None:
            self._pool = build_corpus(self.sources, fragment_length=self.fragment_length)
        return self._pool

    def problem_of(self) -> dict[str, int]:
        return {path: pid for pid, paths in self.problems.items() for path in paths}

    def relevant(self, query: CloneQuery) -> set[str]:
        """Same-problem programs other than the query's own."""
        return {p for p in self.problems[query.problem_id] if p != query.path}


@dataclass
class CompletionItem:
    path: str
    context: list[Token]
    gold: list[Token]


@dataclass
class CompletionSet:
    db_paths: list[str]
    line_items: list[CompletionItem]
    token_items: list[CompletionItem]


@dataclass
class SyntheticBenchmark:
    config: BenchmarkConfig
    clone: CloneBenchmark
    dev: CloneBenchmark
    completion: CompletionSet
    train_sources: list[tuple[str, str]]

    def completion_db(self) -> Corpus:
        keep = set(self.completion.db_paths)
        return build_corpus([s for s in self.clone.sources if s[0] in keep], fragment_length=self.config.fragment_length)

    def train_corpus(self) -> Corpus:
        return build_corpus(self.train_sources, fragment_length=self.config.fragment_length)


# --------------------------------------------------------------------------
# construction


def _distinct_programs(count: int, seed: int, taken: set[str]) -> list[str]:
    out: list[str] = []
    i = 0
    while len(out) < count:
        text = generate_program(derive_seed(seed, i))
        i += 1
        if text not in taken:
            taken.add(text)
            out.append(text)
    return out


def _variants(
    seeds: list[str],
    prefix: str,
    config: BenchmarkConfig,
    stream: object,
) -> tuple[dict[int, list[str]], list[tuple[str, str]]]:
    seed_corpus = build_corpus([(f"{i:05d}", s) for i, s in enumerate(seeds)])
    candidates: FrequencyCandidateModel = build_candidate_model(seed_corpus)
    names = corpus_name_pool(seed_corpus)
    problems: dict[int, list[str]] = {}
    sources: list[tuple[str, str]] = []
    for pid, text in enumerate(seeds):
        tree = parse(tokenize(text))
        original = tree.tokens()
        problems[pid] = []
        for v in range(config.variants_per_problem):
            rng = random.Random(derive_seed(config.seed, stream, "variant", pid, v))
            variant, _ = rename_identifiers(tree, candidates, config.rename_prob, rng)
            for _ in range(config.dead_code_count):
                variant, _ = insert_dead_code(variant, DEFAULT_TEMPLATES, rng, names)
            if variant.tokens() == original:
                raise ValueError(f"variant {v} of problem {pid} is identical to its seed program")
            path = f"{prefix}/p{pid:04d}_v{v}.py"
            problems[pid].append(path)
            sources.append((path, variant.render()))
    return problems, sources


def _clone_benchmark(seeds: list[str], prefix: str, config: BenchmarkConfig, stream: str) -> CloneBenchmark:
    problems, sources = _variants(seeds, prefix, config, stream)
    bench = CloneBenchmark(problems, [], sources, config.fragment_length)
    by_path = dict(sources)
    for path, pid in sorted(bench.problem_of().items()):
        tokens = tokenize(by_path[path])
        rng = random.Random(derive_seed(config.seed, stream, "query", path))
        bench.queries.append(CloneQuery(path, pid, truncate_query(tokens, rng)))
    return bench


def line_starts(tokens: list[Token]) -> list[int]:
    """Index of the first content token of every logical line."""
    starts = []
    for i, tok in enumerate(tokens):
        if tok.kind in _LINE_PREFIX:
            continue
        if i == 0 or tokens[i - 1].kind in _LINE_PREFIX:
            starts.append(i)
    return starts


def line_end(tokens: list[Token], start: int) -> int:
    """Exclusive end of the line starting at ``start`` (NEWLINE included)."""
    i = start
    while i < len(tokens) and tokens[i].kind is not TokenKind.NEWLINE:
        i += 1
    return min(i + 1, len(tokens))


def _completion_items(
    sources: list[tuple[str, str]], config: BenchmarkConfig
) -> tuple[list[CompletionItem], list[CompletionItem]]:
    lines: list[CompletionItem] = []
    spans: list[CompletionItem] = []
    for path, text in sources:
        tokens = tokenize(text)
        rng = random.Random(derive_seed(config.seed, "completion", path))
        starts = [s for s in line_starts(tokens) if s >= config.min_context]
        for s in sorted(rng.sample(starts, min(config.lines_per_file, len(starts)))):
            lines.append(CompletionItem(path, tokens[:s], tokens[s : line_end(tokens, s)]))
        cut = max(config.min_context, math.ceil(0.25 * len(tokens)))
        if cut < len(tokens):
            spans.append(CompletionItem(path, tokens[:cut], tokens[cut:]))
    return lines, spans


def build_synthetic_benchmark(config: BenchmarkConfig | None = None) -> SyntheticBenchmark:
    """Deterministic benchmark for ``config.seed``."""
    config = config or BenchmarkConfig()
    taken: set[str] = set()
    main_seeds = _distinct_programs(config.num_problems, derive_seed(config.seed, "problems"), taken)
    dev_seeds = _distinct_programs(config.dev_problems, derive_seed(config.seed, "dev"), taken)
    train = _distinct_programs(config.train_programs, derive_seed(config.seed, "train"), taken)
    clone = _clone_benchmark(main_seeds, "pool", config, "main")
    dev = _clone_benchmark(dev_seeds, "dev", config, "dev") if dev_seeds else CloneBenchmark({}, [], [], config.fragment_length)
    held_out = {paths[-1] for paths in clone.problems.values()}
    db_paths = [p for p, _ in clone.sources if p not in held_out]
    line_items, token_items = _completion_items([s for s in clone.sources if s[0] in held_out], config)
    return SyntheticBenchmark(
        config,
        clone,
        dev,
        CompletionSet(db_paths, line_items, token_items),
        [(f"train/t{i:05d}.py", t) for i, t in enumerate(train)],
    )


# --------------------------------------------------------------------------
# persistence
#
# Layout: benchmark.json, the pool/, dev/ and train/ source trees, one
# corpus manifest per split (pool, dev, train, completion_db .jsonl) and
# JSONL files of clone queries and completion items.


def _dumps(obj: object) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _write_items(path: Path, kind: str, records: list[dict]) -> None:
    lines = [_dumps({"format": FORMAT_NAME, "format_version": FORMAT_VERSION, "kind": kind, "count": len(records)})]
    lines += [_dumps(r) for r in records]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _read_items(path: Path, kind: str) -> list[dict]:
    lines = path.read_text(encoding="utf-8").splitlines()
    header = json.loads(lines[0]) if lines else {}
    if header.get("format") != FORMAT_NAME or header.get("format_version") != FORMAT_VERSION or header.get("kind") != kind:
        raise ValueError(f"unsupported benchmark file: {path.name}")
    return [json.loads(line) for line in lines[1:]]


def _query_records(bench: CloneBenchmark) -> list[dict]:
    return [{"path": q.path, "problem_id": q.problem_id, "tokens": encode_tokens(q.tokens)} for q in bench.queries]


def _item_records(items: list[CompletionItem]) -> list[dict]:
    return [{"path": it.path, "context": encode_tokens(it.context), "gold": encode_tokens(it.gold)} for it in items]


def save_benchmark(bench: SyntheticBenchmark, out_dir: str | Path, stamp: dict | None = None) -> None:
    out = Path(out_dir)
    for path, text in bench.clone.sources + bench.dev.sources + bench.train_sources:
        target = out / path
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text, encoding="utf-8")
    manifest = {
        "format": FORMAT_NAME,
        "format_version": FORMAT_VERSION,
        "config": asdict(bench.config),
        "problems": {str(k): v for k, v in bench.clone.problems.items()},
        "dev_problems": {str(k): v for k, v in bench.dev.problems.items()},
        "train": [p for p, _ in bench.train_sources],
        "completion_db": bench.completion.db_paths,
        **(stamp or {}),
    }
    (out / "benchmark.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    manifests = {
        "pool.jsonl": [p for p, _ in bench.clone.sources],
        "dev.jsonl": [p for p, _ in bench.dev.sources],
        "train.jsonl": [p for p, _ in bench.train_sources],
        "completion_db.jsonl": bench.completion.db_paths,
    }
    for name, paths in manifests.items():
        (out / name).write_text("".join(_dumps({"path": p, "language": LANGUAGE}) + "\n" for p in paths), encoding="utf-8")
    _write_items(out / "clone_queries.jsonl", "clone_queries", _query_records(bench.clone))
    _write_items(out / "dev_queries.jsonl", "clone_queries", _query_records(bench.dev))
    _write_items(out / "completion_lines.jsonl", "completion_lines", _item_records(bench.completion.line_items))
    _write_items(out / "completion_tokens.jsonl", "completion_tokens", _item_records(bench.completion.token_items))


def _load_clone(out: Path, problems: dict, queries_file: str, fragment_length: int) -> CloneBenchmark:
    probs = {int(k): list(v) for k, v in problems.items()}
    paths = sorted(p for v in probs.values() for p in v)
    sources = [(p, (out / p).read_text(encoding="utf-8")) for p in paths]
    queries = [
        CloneQuery(r["path"], r["problem_id"], decode_tokens(r["tokens"]))
        for r in _read_items(out / queries_file, "clone_queries")
    ]
    return CloneBenchmark(probs, queries, sources, fragment_length)


def load_benchmark(out_dir: str | Path) -> SyntheticBenchmark:
    out = Path(out_dir)
    manifest_path = out / "benchmark.json"
    if not manifest_path.exists():
        raise FileNotFoundError(str(manifest_path))
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("format") != FORMAT_NAME or manifest.get("format_version") != FORMAT_VERSION:
        raise ValueError("unsupported benchmark format version")
    config = BenchmarkConfig(**manifest["config"])
    clone = _load_clone(out, manifest["problems"], "clone_queries.jsonl", config.fragment_length)
    dev = _load_clone(out, manifest["dev_problems"], "dev_queries.jsonl", config.fragment_length)

    def items(name: str, kind: str) -> list[CompletionItem]:
        return [
            CompletionItem(r["path"], decode_tokens(r["context"]), decode_tokens(r["gold"]))
            for r in _read_items(out / name, kind)
        ]

    completion = CompletionSet(
        list(manifest["completion_db"]),
        items("completion_lines.jsonl", "completion_lines"),
        items("completion_tokens.jsonl", "completion_tokens"),
    )
    train = [(p, (out / p).read_text(encoding="utf-8")) for p in manifest["train"]]
    return SyntheticBenchmark(config, clone, dev, completion, train)


def tree_digest(out_dir: str | Path) -> str:
    """sha256 over relative paths and bytes of every file below ``out_dir``."""
    h = hashlib.sha256()
    root = Path(out_dir)
    for p in sorted(q for q in root.rglob("*") if q.is_file()):
        h.update(p.relative_to(root).as_posix().encode() + b"\0" + p.read_bytes() + b"\0")
    return h.hexdigest()
