"""Command-line entry point: ``retrocode <command> [options]``.

Configuration resolves in this order, later winning: built-in defaults, the
JSON file given with ``--config``, the ``RETROCODE_OUT`` environment variable
(output directory only), ``--set key.path=value`` pairs, then command flags.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
from pathlib import Path
from typing import Callable, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from . import __version__
from .augment import AugmentConfig, AugmentReport, build_training_pairs, load_pairs, save_pairs
from .benchmark import BenchmarkConfig, build_synthetic_benchmark, load_benchmark, save_benchmark
from .codeview import ParseError, dump_tree, parse
from .corpus import CorpusFormatError, build_corpus, decode_tokens, encode_tokens, load_corpus, read_sources, save_corpus
from .dense import (
    TrainConfig,
    build_vector_index,
    load_params,
    load_vector_index,
    save_params,
    save_vector_index,
    train_encoder,
)
from .evaluate import DEFAULT_ALPHAS, EvalReport, alpha_sweep, fingerprint, run_clone_eval, run_completion_eval
from .generator import CopyAugmentedModel, complete_line, complete_tokens, make_retriever, train_ngram
from .hybrid import RetrievalConfig, RetrievalIndices, retrieve
from .lexer import LexError, TokenKind, render, tokenize
from .sparse import build_bm25, load_bm25, save_bm25

ENV_OUT = "RETROCODE_OUT"
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_MISSING = 3

log = logging.getLogger("retrocode")


# --------------------------------------------------------------------------
# configuration


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class CorpusSection(_Section):
    paths: list[str] = Field(default_factory=list)
    language: Literal["minipy"] = "minipy"
    fragment_length: int = Field(128, ge=8)


class AugmentSection(_Section):
    rename_prob: float = Field(0.5, ge=0.0, le=1.0)
    dead_code_count: int = Field(1, ge=0, le=16)
    pairs_per_fragment: int = Field(4, ge=1)
    truncate: bool = True


class TrainSection(_Section):
    d: int = Field(64, ge=1)
    batch_size: int = Field(64, ge=2)
    learning_rate: float = Field(0.05, ge=0.0)
    epochs: int = Field(30, ge=1)


class RetrievalSection(_Section):
    mode: Literal["sparse", "dense", "hybrid"] = "hybrid"
    alpha: float = Field(0.9, ge=0.0)
    k: int = Field(100, ge=1)
    exclude_same_file: bool = True


class GeneratorSection(_Section):
    order: int = Field(4, ge=1, le=8)
    lam: float = Field(0.5, ge=0.0, le=1.0)
    min_match: int = Field(2, ge=1)
    line_cap: int = Field(64, ge=1)
    budget: int = Field(128, ge=1)


class BenchmarkSection(_Section):
    num_problems: int = Field(100, ge=1)
    variants_per_problem: int = Field(5, ge=2)
    dev_problems: int = Field(50, ge=0)
    train_programs: int = Field(2000, ge=0)
    lines_per_file: int = Field(3, ge=1)
    min_context: int = Field(16, ge=1)


class EvalSection(_Section):
    k: int = Field(100, ge=1)
    alphas: list[float] = Field(default_factory=lambda: list(DEFAULT_ALPHAS))


class PipelineConfig(_Section):
    seed: int = Field(0, ge=0)
    output_dir: str = "out"
    corpus: CorpusSection = Field(default_factory=CorpusSection)
    augment: AugmentSection = Field(default_factory=AugmentSection)
    train: TrainSection = Field(default_factory=TrainSection)
    retrieval: RetrievalSection = Field(default_factory=RetrievalSection)
    generator: GeneratorSection = Field(default_factory=GeneratorSection)
    benchmark: BenchmarkSection = Field(default_factory=BenchmarkSection)
    eval: EvalSection = Field(default_factory=EvalSection)

    def fingerprint(self) -> str:
        """Hash of the resolved config; the output location is not part of it."""
        return fingerprint(self.model_dump(exclude={"output_dir"}))


class ConfigError(Exception):
    def __init__(self, key: str, message: str):
        super().__init__(f"config error: {key}: {message}")
        self.key = key


class MissingArtifact(Exception):
    def __init__(self, path: Path, hint: str):
        super().__init__(f"missing artifact: {path} (run `retrocode {hint}` first)")
        self.path = path


def _set_path(data: dict, dotted: str, value: object) -> None:
    node = data
    parts = dotted.split(".")
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(dotted, "not a section")
        node = child
    node[parts[-1]] = value


def _parse_value(raw: str) -> object:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def resolve_config(
    config_file: str | None,
    sets: list[str],
    overrides: dict[str, object],
    env: dict[str, str] | None = None,
) -> PipelineConfig:
    env = os.environ if env is None else env
    data: dict = {}
    if config_file:
        try:
            data = json.loads(Path(config_file).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError("--config", f"file not found: {config_file}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("--config", f"invalid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("--config", "top level must be an object")
    if env.get(ENV_OUT):
        data["output_dir"] = env[ENV_OUT]
    for item in sets:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(item, "expected key.path=value")
        _set_path(data, key, _parse_value(raw))
    for key, value in overrides.items():
        if value is not None:
            _set_path(data, key, value)
    try:
        return PipelineConfig.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        key = ".".join(str(p) for p in err["loc"]) or "<root>"
        raise ConfigError(key, err["msg"]) from None


# --------------------------------------------------------------------------
# artifact locations


class Workspace:
    def __init__(self, root: Path, cfg: PipelineConfig):
        self.root = root
        self.cfg = cfg
        self.stamp = {"fingerprint": cfg.fingerprint(), "seed": cfg.seed, "version": __version__}

    def corpus_path(self, name: str) -> Path:
        return self.root / "corpora" / f"{name}.jsonl"

    def bm25_path(self, name: str) -> Path:
        return self.root / "indices" / f"{name}.bm25.json"

    def vectors_path(self, name: str) -> Path:
        return self.root / "indices" / f"{name}.vectors.bin"

    @property
    def pairs_path(self) -> Path:
        return self.root / "pairs.jsonl"

    @property
    def encoder_path(self) -> Path:
        return self.root / "encoder.bin"

    @property
    def sweep_path(self) -> Path:
        return self.root / "reports" / "alpha-sweep.json"

    def benchmark_dir(self, given: str | None) -> Path:
        return Path(given) if given else self.root / "benchmark"

    def need(self, path: Path, hint: str) -> Path:
        if not path.exists():
            raise MissingArtifact(path, hint)
        return path

    def write(self, path: Path, text: str) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")

    def load_corpus(self, name: str):
        return load_corpus(self.need(self.corpus_path(name), f"ingest --name {name}"))

    def load_indices(self, name: str, mode: str) -> RetrievalIndices:
        corpus = self.load_corpus(name)
        indices = RetrievalIndices(corpus)
        if mode in ("sparse", "hybrid"):
            indices.bm25 = load_bm25(self.need(self.bm25_path(name), f"index --sparse --corpus {name}"))
        if mode in ("dense", "hybrid"):
            indices.params = load_params(self.need(self.encoder_path, "train"))
            indices.vectors = load_vector_index(self.need(self.vectors_path(name), f"index --dense --corpus {name}"))
            if len(indices.vectors) != len(corpus.fragments):
                raise CorpusFormatError(f"vector index for {name!r} does not match its corpus; re-run index")
        return indices

    def tuned_alpha(self) -> float:
        data = json.loads(self.need(self.sweep_path, "alpha-sweep").read_text(encoding="utf-8"))
        return float(data["metrics"]["alpha.best"])

    def save_report(self, name: str, report: EvalReport, dump_queries: bool) -> None:
        base = self.root / "reports" / name
        self.write(base.with_suffix(".json"), report.to_json())
        self.write(base.with_suffix(".txt"), report.table())
        if dump_queries:
            lines = [json.dumps(row, sort_keys=True) for row in report.per_query]
            self.write(base.with_suffix(".queries.jsonl"), "\n".join(lines) + "\n")
        sys.stdout.write(report.table())


def _retrieval_config(cfg: PipelineConfig, mode: str | None = None, alpha: float | None = None) -> RetrievalConfig:
    r = cfg.retrieval
    return RetrievalConfig(mode or r.mode, r.alpha if alpha is None else alpha, r.k, r.exclude_same_file)


# --------------------------------------------------------------------------
# commands


def cmd_gen_benchmark(ws: Workspace, args: argparse.Namespace) -> int:
    b = ws.cfg.benchmark
    config = BenchmarkConfig(
        num_problems=b.num_problems,
        variants_per_problem=b.variants_per_problem,
        seed=ws.cfg.seed,
        dev_problems=b.dev_problems,
        train_programs=b.train_programs,
        rename_prob=ws.cfg.augment.rename_prob,
        dead_code_count=ws.cfg.augment.dead_code_count,
        lines_per_file=b.lines_per_file,
        min_context=b.min_context,
        fragment_length=ws.cfg.corpus.fragment_length,
    )
    dest = ws.benchmark_dir(args.dest)
    for sub in ("pool", "dev", "train"):
        shutil.rmtree(dest / sub, ignore_errors=True)
    bench = build_synthetic_benchmark(config)
    save_benchmark(bench, dest, {"stamp": ws.stamp})
    print(
        f"benchmark: {len(bench.clone.sources)} pool programs, {len(bench.clone.queries)} queries, "
        f"{len(bench.completion.line_items)} line items, {len(bench.train_sources)} training programs -> {dest}"
    )
    return 0


def cmd_ingest(ws: Workspace, args: argparse.Namespace) -> int:
    sources_in = args.sources or ws.cfg.corpus.paths
    if not sources_in:
        raise ConfigError("corpus.paths", "no source given (pass paths or set corpus.paths)")
    sources: list[tuple[str, str]] = []
    for src in sources_in:
        sources.extend(read_sources(src, ws.cfg.corpus.language))
    corpus = build_corpus(sources, ws.cfg.corpus.language, ws.cfg.corpus.fragment_length)
    out = ws.corpus_path(args.name)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_corpus(corpus, out, {"stamp": ws.stamp})
    if args.dump_trees:
        chunks = []
        for f in corpus.files:
            try:
                text = dump_tree(parse(tokenize(f.text)))
            except ParseError as exc:
                text = f"<parse error: {exc}>\n"
            chunks.append(f"# {f.path}\n{text}")
        ws.write(out.with_suffix(".trees.txt"), "\n".join(chunks))
    print(f"ingested {len(corpus.files)} files, {len(corpus.fragments)} fragments, {len(corpus.skipped)} skipped -> {out}")
    return 0


def cmd_augment(ws: Workspace, args: argparse.Namespace) -> int:
    corpus = ws.load_corpus(args.corpus)
    a = ws.cfg.augment
    config = AugmentConfig(a.rename_prob, a.dead_code_count, a.pairs_per_fragment, ws.cfg.seed, a.truncate)
    report = AugmentReport()
    n = save_pairs(build_training_pairs(corpus, config, report), ws.pairs_path, {"stamp": ws.stamp, "corpus": args.corpus})
    print(f"augment: {n} pairs from {report.programs} programs ({report.skipped} skipped) -> {ws.pairs_path}")
    return 0


def cmd_train(ws: Workspace, args: argparse.Namespace) -> int:
    pairs = load_pairs(ws.need(ws.pairs_path, "augment"))
    t = ws.cfg.train
    result = train_encoder(pairs, TrainConfig(t.batch_size, t.learning_rate, t.epochs, ws.cfg.seed, t.d))
    save_params(result.params, ws.encoder_path, {"stamp": ws.stamp, "epoch_losses": result.epoch_losses})
    log_text = json.dumps({"stamp": ws.stamp, "epoch_losses": result.epoch_losses, "pairs": len(pairs)}, sort_keys=True, indent=1)
    ws.write(ws.root / "reports" / "train.json", log_text + "\n")
    print(f"train: {len(pairs)} pairs, final loss {result.epoch_losses[-1]:.4f} -> {ws.encoder_path}")
    return 0


def cmd_index(ws: Workspace, args: argparse.Namespace) -> int:
    build_sparse = args.sparse or not args.dense
    build_dense = args.dense or not args.sparse
    corpus = ws.load_corpus(args.corpus)
    if build_sparse:
        path = ws.bm25_path(args.corpus)
        path.parent.mkdir(parents=True, exist_ok=True)
        save_bm25(build_bm25(corpus), path, {"stamp": ws.stamp})
        print(f"index: sparse -> {path}")
    if build_dense:
        params = load_params(ws.need(ws.encoder_path, "train"))
        path = ws.vectors_path(args.corpus)
        path.parent.mkdir(parents=True, exist_ok=True)
        save_vector_index(build_vector_index(params, corpus), path, {"stamp": ws.stamp})
        print(f"index: dense -> {path}")
    return 0


def _query_tokens(args: argparse.Namespace):
    if args.query_file:
        text = Path(args.query_file).read_text(encoding="utf-8")
    elif args.query is not None:
        text = args.query
    else:
        raise ConfigError("--query", "pass --query TEXT or --query-file PATH")
    return context_tokens(text)


def context_tokens(text: str):
    """Tokens of a (possibly unfinished) prefix; end-of-input dedents are dropped."""
    tokens = tokenize(text)
    while tokens and tokens[-1].kind is TokenKind.INDENT_MARKER and tokens[-1].text == "<DEDENT>":
        tokens.pop()
    return tokens


def _emit(records: list[dict], out: str | None) -> None:
    text = "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)
    sys.stdout.write(text)
    if out:
        Path(out).write_text(text, encoding="utf-8")


def cmd_retrieve(ws: Workspace, args: argparse.Namespace) -> int:
    config = _retrieval_config(ws.cfg, args.mode, args.alpha)
    indices = ws.load_indices(args.corpus, config.mode)
    query = _query_tokens(args)
    outcome = retrieve(query, None, config, indices, args.exclude_path)
    corpus = indices.corpus
    records: list[dict] = []
    for rank, hit in enumerate(outcome.ranked[: config.k], start=1):
        frag = corpus.fragment(hit.fragment_id)
        records.append(
            {
                "record": "hit",
                "rank": rank,
                "fragment_id": hit.fragment_id,
                "path": corpus.file(frag.file_id).path,
                "ordinal": frag.ordinal,
                "score": hit.score,
                "sub_scores": outcome.sub_scores.get(hit.fragment_id, {}),
            }
        )
    aligned = outcome.aligned_fragment
    records.append(
        {
            "record": "alignment",
            "best_fragment_id": None if outcome.empty else outcome.best_hit.fragment_id,
            "aligned_fragment_id": None if aligned is None else aligned.fragment_id,
            "mode": config.mode,
            "alpha": config.alpha,
            "fingerprint": ws.stamp["fingerprint"],
        }
    )
    _emit(records, args.out_file)
    return 0


def _generator(ws: Workspace, corpus) -> CopyAugmentedModel:
    g = ws.cfg.generator
    return CopyAugmentedModel(train_ngram(corpus, g.order), g.lam, g.min_match)


def cmd_complete(ws: Workspace, args: argparse.Namespace) -> int:
    retrieval = args.retrieval or ws.cfg.retrieval.mode
    if retrieval == "off":
        corpus = ws.load_corpus(args.corpus)
        indices = None
    else:
        indices = ws.load_indices(args.corpus, retrieval)
        corpus = indices.corpus
    model = _generator(ws, corpus)
    config = None if retrieval == "off" else _retrieval_config(ws.cfg, retrieval, args.alpha)
    budget = args.budget or ws.cfg.generator.budget
    records = []
    for lineno, line in enumerate(Path(args.input).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            context = decode_tokens(rec["context_tokens"]) if "context_tokens" in rec else context_tokens(rec["context"])
        except (json.JSONDecodeError, KeyError, TypeError, LexError) as exc:
            raise ValueError(f"malformed input record at line {lineno}: {exc}") from exc
        if not context:
            raise ValueError(f"empty context at line {lineno}")
        retriever = None if config is None else make_retriever(indices, config, rec.get("path"))
        if args.mode == "line":
            res = complete_line(model, retriever, context, ws.cfg.generator.line_cap)
        else:
            res = complete_tokens(model, retriever, context, budget)
        provenance = []
        for outcome in res.retrievals:
            if outcome.empty:
                provenance.append(None)
                continue
            best = corpus.fragment(outcome.best_hit.fragment_id)
            provenance.append(
                {
                    "best_fragment_id": best.fragment_id,
                    "path": corpus.file(best.file_id).path,
                    "score": outcome.best_hit.score,
                    "aligned_fragment_id": outcome.aligned_fragment.fragment_id,
                }
            )
        records.append(
            {
                "context": render(context) if "context" not in rec else rec["context"],
                "generated": render(res.generated),
                "generated_tokens": encode_tokens(res.generated),
                "log_probs": res.log_probs,
                "provenance": provenance,
                "retrieval": retrieval,
            }
        )
    _emit(records, args.out_file)
    return 0


def _clone_bench(ws: Workspace, args: argparse.Namespace, dev: bool = False):
    bench_dir = ws.benchmark_dir(args.benchmark)
    ws.need(bench_dir / "benchmark.json", "gen-benchmark")
    bench = load_benchmark(bench_dir)
    return bench.dev if dev else bench.clone, bench


def _check_pool(bench_part, indices: RetrievalIndices, name: str) -> None:
    have = {f.path for f in indices.corpus.files}
    missing = [p for paths in bench_part.problems.values() for p in paths if p not in have]
    if missing:
        raise ValueError(f"corpus {name!r} lacks benchmark program {missing[0]} (ingest the benchmark's manifest)")


def cmd_eval_clone(ws: Workspace, args: argparse.Namespace) -> int:
    alpha = ws.tuned_alpha() if args.tuned_alpha else args.alpha
    config = _retrieval_config(ws.cfg, args.mode, alpha)
    clone, _ = _clone_bench(ws, args)
    indices = ws.load_indices(args.corpus, config.mode)
    _check_pool(clone, indices, args.corpus)
    report = run_clone_eval(clone, indices, config, ws.cfg.eval.k, {"stamp": ws.stamp, "corpus": args.corpus})
    ws.save_report(f"eval-clone-{config.mode}", report, args.dump_queries)
    return 0


def cmd_alpha_sweep(ws: Workspace, args: argparse.Namespace) -> int:
    dev, _ = _clone_bench(ws, args, dev=True)
    if not dev.queries:
        raise ConfigError("benchmark.dev_problems", "benchmark has no dev split")
    indices = ws.load_indices(args.corpus, "hybrid")
    _check_pool(dev, indices, args.corpus)
    best, report = alpha_sweep(dev, indices, ws.cfg.eval.alphas, ws.cfg.eval.k, {"stamp": ws.stamp, "corpus": args.corpus})
    ws.save_report("alpha-sweep", report, args.dump_queries)
    print(f"alpha-sweep: best alpha {best}")
    return 0


def cmd_eval_completion(ws: Workspace, args: argparse.Namespace) -> int:
    retrieval = args.retrieval or ws.cfg.retrieval.mode
    _, bench = _clone_bench(ws, args)
    if retrieval == "off":
        corpus = ws.load_corpus(args.corpus)
        indices, config = None, None
    else:
        alpha = ws.tuned_alpha() if args.tuned_alpha else args.alpha
        config = _retrieval_config(ws.cfg, retrieval, alpha)
        indices = ws.load_indices(args.corpus, retrieval)
        corpus = indices.corpus
    test_paths = {it.path for it in bench.completion.line_items + bench.completion.token_items}
    if test_paths & {f.path for f in corpus.files}:
        raise ValueError(f"corpus {args.corpus!r} contains completion test files; ingest completion_db.jsonl")
    model = _generator(ws, corpus)
    report = run_completion_eval(
        bench.completion.line_items,
        bench.completion.token_items,
        model,
        indices,
        config,
        {"stamp": ws.stamp, "corpus": args.corpus, "order": ws.cfg.generator.order, "lam": ws.cfg.generator.lam},
        ws.cfg.generator.line_cap,
    )
    ws.save_report(f"eval-completion-{retrieval}", report, args.dump_queries)
    return 0


# --------------------------------------------------------------------------
# argument parsing

Command = Callable[[Workspace, argparse.Namespace], int]


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, tuple[Command, dict[str, str]]]]:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    common.add_argument("--out", dest="output_dir", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="retrocode", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    table: dict[str, tuple[Command, dict[str, str]]] = {}

    def add(name: str, fn: Command, help: str, flags: dict[str, str] | None = None) -> argparse.ArgumentParser:
        p = sub.add_parser(name, parents=[common], help=help)
        table[name] = (fn, flags or {})
        return p

    def retrieval_flags(p: argparse.ArgumentParser, modes: tuple[str, ...], dest: str = "mode") -> None:
        p.add_argument(f"--{dest}", choices=modes)
        p.add_argument("--alpha", type=float)
        p.add_argument("--k", type=int)

    p = add("gen-benchmark", cmd_gen_benchmark, "write a seeded synthetic benchmark", {"num_problems": "benchmark.num_problems", "variants": "benchmark.variants_per_problem", "train_programs": "benchmark.train_programs", "dev_problems": "benchmark.dev_problems"})
    p.add_argument("--dest", help="benchmark directory (default OUT/benchmark)")
    p.add_argument("--num-problems", type=int)
    p.add_argument("--variants", type=int)
    p.add_argument("--train-programs", type=int)
    p.add_argument("--dev-problems", type=int)

    p = add("ingest", cmd_ingest, "build a fragment corpus", {"fragment_length": "corpus.fragment_length"})
    p.add_argument("sources", nargs="*", help="source directories or manifests")
    p.add_argument("--name", default="corpus")
    p.add_argument("--fragment-length", type=int)
    p.add_argument("--dump-trees", action="store_true", help="write parsed statement trees as indented text")

    p = add("augment", cmd_augment, "build contrastive training pairs", {"rename_prob": "augment.rename_prob", "pairs_per_fragment": "augment.pairs_per_fragment"})
    p.add_argument("--corpus", default="corpus")
    p.add_argument("--rename-prob", type=float)
    p.add_argument("--pairs-per-fragment", type=int)
    p.add_argument("--no-truncate", dest="truncate", action="store_const", const=False)

    p = add("train", cmd_train, "train the dense encoder", {"epochs": "train.epochs", "batch_size": "train.batch_size", "learning_rate": "train.learning_rate", "d": "train.d"})
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--d", type=int)

    p = add("index", cmd_index, "build sparse and/or dense indices")
    p.add_argument("--corpus", default="corpus")
    p.add_argument("--sparse", action="store_true")
    p.add_argument("--dense", action="store_true")

    p = add("retrieve", cmd_retrieve, "rank fragments for a query", {"k": "retrieval.k"})
    p.add_argument("--corpus", default="corpus")
    retrieval_flags(p, ("sparse", "dense", "hybrid"))
    p.add_argument("--query", help="query source text")
    p.add_argument("--query-file")
    p.add_argument("--exclude-path", help="exclude fragments of this corpus path")
    p.add_argument("--output", dest="out_file")

    p = add("complete", cmd_complete, "complete contexts from a JSONL file", {"k": "retrieval.k"})
    p.add_argument("--corpus", default="corpus")
    p.add_argument("--input", required=True, help='JSONL with {"context": text} or {"context_tokens": [...]}')
    p.add_argument("--mode", choices=("line", "tokens"), default="line")
    p.add_argument("--budget", type=int)
    p.add_argument("--retrieval", choices=("off", "sparse", "dense", "hybrid"))
    p.add_argument("--alpha", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--output", dest="out_file")

    for name, fn, corpus, help in (
        ("eval-clone", cmd_eval_clone, "pool", "partial-search clone detection report"),
        ("alpha-sweep", cmd_alpha_sweep, "dev", "tune the hybrid alpha on the dev split"),
        ("eval-completion", cmd_eval_completion, "db", "line and token completion report"),
    ):
        p = add(name, fn, help, {"k": "retrieval.k"})
        p.add_argument("--benchmark", help="benchmark directory (default OUT/benchmark)")
        p.add_argument("--corpus", default=corpus)
        p.add_argument("--dump-queries", action="store_true", help="also write per-query records")
        if name == "eval-clone":
            retrieval_flags(p, ("sparse", "dense", "hybrid"))
        elif name == "eval-completion":
            retrieval_flags(p, ("off", "sparse", "dense", "hybrid"), dest="retrieval")
        if name != "alpha-sweep":
            p.add_argument("--tuned-alpha", action="store_true", help="use the alpha chosen by alpha-sweep")
    return parser, table


def run_command(argv: list[str], env: dict[str, str] | None = None) -> int:
    parser, table = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    fn, flags = table[args.command]
    overrides: dict[str, object] = {"seed": args.seed, "output_dir": args.output_dir}
    for attr, key in flags.items():
        overrides[key] = getattr(args, attr, None)
    if getattr(args, "truncate", None) is False:
        overrides["augment.truncate"] = False
    try:
        cfg = resolve_config(args.config, args.set, overrides, env)
        ws = Workspace(Path(cfg.output_dir), cfg)
        ws.root.mkdir(parents=True, exist_ok=True)
        return fn(ws, args)
    except ConfigError as exc:
        print(f"retrocode: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifact as exc:
        print(f"retrocode: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (ValueError, LookupError, OSError, CorpusFormatError, LexError, ParseError) as exc:
        print(f"retrocode: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
