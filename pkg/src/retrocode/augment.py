"""Semantic-preserving program transforms and contrastive training pairs."""
from __future__ import annotations

import hashlib
import json
import math
import random
import string
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Protocol

from .codeview import (
    ParseError,
    Role,
    Statement,
    StatementTree,
    api_sequence,
    api_sequence_from_tokens,
    identifiers,
    parse,
)
from .corpus import Corpus, decode_tokens, encode_tokens
from .lexer import KEYWORDS, NEWLINE, Token, TokenKind, tokenize

TOP_CANDIDATES = 10
PAIRS_FORMAT = "retrocode.pairs"
PAIRS_FORMAT_VERSION = 1


class FreshNamePoolExhausted(ValueError):
    def __init__(self) -> None:
        super().__init__("fresh-name pool exhausted")


class UntruncatableProgram(ValueError):
    def __init__(self) -> None:
        super().__init__("untruncatable program")


@dataclass
class TransformRecord:
    kind: str  # "rename" | "dead_code"
    rng_seed: int | None = None
    rename_map: dict[str, str] = field(default_factory=dict)
    inserted_statement: str = ""
    location: list[int] = field(default_factory=list)
    statement_count: int = 0


# --------------------------------------------------------------------------
# identifier renaming


class CandidateModel(Protocol):
    def candidates(self, name: str, role: Role) -> list[str]: ...


class FrequencyCandidateModel:
    """Most frequent corpus identifiers per role, best first."""

    def __init__(self, ranked: dict[Role, list[str]]):
        self.ranked = ranked

    def candidates(self, name: str, role: Role) -> list[str]:
        ranked = self.ranked.get(role, [])
        if len(ranked) < 2:
            return []
        return [n for n in ranked if n != name][:TOP_CANDIDATES]


def program_trees(corpus: Corpus) -> Iterator[tuple[int, StatementTree | None]]:
    for f in corpus.files:
        try:
            yield f.file_id, parse(corpus.file_tokens(f.file_id))
        except ParseError:
            yield f.file_id, None


def build_candidate_model(corpus: Corpus) -> FrequencyCandidateModel:
    counts: dict[Role, Counter] = {role: Counter() for role in Role}
    for _, tree in program_trees(corpus):
        if tree is None:
            continue
        for name, entry in identifiers(tree).items():
            counts[entry.role][name] += len(entry.positions)
    # one spare entry so that excluding the queried name still leaves ten
    ranked = {
        role: [n for n, _ in sorted(c.items(), key=lambda kv: (-kv[1], kv[0]))[: TOP_CANDIDATES + 1]]
        for role, c in counts.items()
    }
    return FrequencyCandidateModel(ranked)


def _identifier_texts(tokens: Iterable[Token]) -> set[str]:
    return {t.text for t in tokens if t.kind is TokenKind.IDENTIFIER}


def rename_identifiers(
    tree: StatementTree,
    candidates: CandidateModel,
    rename_prob: float,
    rng: random.Random,
) -> tuple[StatementTree, TransformRecord]:
    """Rename each variable/function/parameter with probability ``rename_prob``.

    Candidates are tried in random order; a candidate already used anywhere
    in the program (or by an earlier rename) is skipped, which keeps the
    mapping injective and capture-free.
    """
    if not 0.0 <= rename_prob <= 1.0:
        raise ValueError("rename_prob must be in [0, 1]")
    tokens = tree.tokens()
    table = identifiers(tree)
    taken = _identifier_texts(tokens)
    mapping: dict[str, str] = {}
    for name, entry in table.items():
        if rng.random() >= rename_prob:
            continue
        options = list(candidates.candidates(name, entry.role))
        rng.shuffle(options)
        for cand in options:
            if cand not in taken and cand not in KEYWORDS and cand.isidentifier():
                mapping[name] = cand
                taken.add(cand)
                break
    if not mapping:
        return tree.copy(), TransformRecord("rename")
    new_tokens = list(tokens)
    for name, new in mapping.items():
        for pos in table[name].positions:
            new_tokens[pos] = Token(new, TokenKind.IDENTIFIER)
    return parse(new_tokens), TransformRecord("rename", rename_map=mapping)


def undo_rename(tree: StatementTree, record: TransformRecord) -> StatementTree:
    inverse = {v: k for k, v in record.rename_map.items()}
    table = identifiers(tree)
    tokens = tree.tokens()
    for new, old in inverse.items():
        for pos in table[new].positions:
            tokens[pos] = Token(old, TokenKind.IDENTIFIER)
    return parse(tokens)


# --------------------------------------------------------------------------
# dead code insertion


def _int_literal(rng: random.Random) -> str:
    return str(rng.randint(0, 99))


def _str_literal(rng: random.Random) -> str:
    return "'" + "".join(rng.choice(string.ascii_lowercase) for _ in range(rng.randint(1, 8))) + "'"


def _literal(rng: random.Random) -> str:
    return _int_literal(rng) if rng.random() < 0.5 else _str_literal(rng)


def _body(names: list[str], rng: random.Random, lines: list[str], extra: tuple[int, int]) -> list[str]:
    """Indented block of simple statements over fresh names only."""
    a, b = names[0], names[1]
    lines = list(lines)
    for _ in range(rng.randint(*extra)):
        if rng.random() < 0.5:
            lines.append(f"{b} = {a} * {_int_literal(rng)}")
        else:
            lines.append(f"{a}.bit_length()")
    return ["    " + line for line in lines]


@dataclass(frozen=True)
class DeadCodeTemplate:
    """A dead-code shape; ``slots`` fresh names are needed to instantiate it."""

    kind: str
    slots: int

    def instantiate(self, names: list[str], rng: random.Random) -> str:
        a = names[0]
        if self.kind == "declaration":
            lines = [f"{a} = {_literal(rng)}"]
        elif self.kind == "expression":
            lines = [f"{a} = []", f"{a}.append({_literal(rng)})"]
        elif self.kind == "conditional":
            op = rng.choice(["<", ">", "==", "!="])
            lines = [f"{a} = {_int_literal(rng)}", f"if {a} {op} {_int_literal(rng)}:"]
            lines += _body(names, rng, [], (1, 2))
        elif self.kind == "looping":
            lines = [f"{a} = 0", f"while {a} < {_int_literal(rng)}:"]
            lines += _body(names, rng, [f"{a} += 1"], (0, 1))
        else:
            raise ValueError(f"unknown template kind {self.kind!r}")
        return "\n".join(lines) + "\n"


DEFAULT_TEMPLATES = (
    DeadCodeTemplate("declaration", 1),
    DeadCodeTemplate("expression", 1),
    DeadCodeTemplate("conditional", 2),
    DeadCodeTemplate("looping", 2),
)


def _default_name_pool() -> list[str]:
    from .synth import PARAMETERS, VARIABLES

    return sorted(set(VARIABLES) | set(PARAMETERS))


def _insertion_points(tree: StatementTree) -> list[list[int]]:
    """Locations ``[i0, b0, i1, b1, ..., insert_at]`` after every statement
    whose token run ends in a newline (statements at EOF without one are
    not valid anchors)."""
    points: list[list[int]] = []

    def ends_with_newline(stmt: Statement) -> bool:
        toks = [t for t in stmt.tokens() if t.kind is not TokenKind.INDENT_MARKER]
        return bool(toks) and toks[-1] == NEWLINE

    def visit(stmts: list[Statement], prefix: list[int]) -> None:
        for i, stmt in enumerate(stmts):
            if ends_with_newline(stmt):
                points.append(prefix + [i + 1])
            for b, block in enumerate(stmt.blocks()):
                visit(block, prefix + [i, b])

    visit(tree.statements, [])
    return points


def _container(tree: StatementTree, location: list[int]) -> list[Statement]:
    stmts = tree.statements
    for k in range(0, len(location) - 1, 2):
        stmts = stmts[location[k]].blocks()[location[k + 1]]
    return stmts


def insert_dead_code(
    tree: StatementTree,
    templates: tuple[DeadCodeTemplate, ...] | list[DeadCodeTemplate] = DEFAULT_TEMPLATES,
    rng: random.Random | None = None,
    name_pool: Iterable[str] | None = None,
) -> tuple[StatementTree, TransformRecord]:
    """Insert one instantiated template after a uniformly chosen statement."""
    rng = rng or random.Random(0)
    host = _identifier_texts(tree.tokens())
    pool = sorted(set(name_pool if name_pool is not None else _default_name_pool()) - host - KEYWORDS)
    template = rng.choice(list(templates))
    if len(pool) < template.slots:
        raise FreshNamePoolExhausted()
    points = _insertion_points(tree)
    if not points:
        raise ValueError("program has no statement to insert after")
    names = rng.sample(pool, template.slots)
    text = template.instantiate(names, rng)
    new_stmts = parse(tokenize(text)).statements
    location = rng.choice(points)
    out = tree.copy()
    container = _container(out, location)
    container[location[-1] : location[-1]] = new_stmts
    return out, TransformRecord(
        "dead_code", inserted_statement=text, location=location, statement_count=len(new_stmts)
    )


def remove_insertion(tree: StatementTree, record: TransformRecord) -> StatementTree:
    """Delete the statements recorded by :func:`insert_dead_code`."""
    out = tree.copy()
    container = _container(out, record.location)
    at = record.location[-1]
    del container[at : at + record.statement_count]
    return out


# --------------------------------------------------------------------------
# query truncation and pair construction


def truncate_query(tokens: list[Token], rng: random.Random) -> list[Token]:
    """Random prefix with length uniform over [ceil(0.1 L), floor(0.9 L)]."""
    n = len(tokens)
    if n < 10:
        raise UntruncatableProgram()
    return list(tokens[: rng.randint(math.ceil(0.1 * n), math.floor(0.9 * n))])


@dataclass
class AugmentConfig:
    rename_prob: float = 0.5
    dead_code_count: int = 1
    pairs_per_fragment: int = 4
    seed: int = 0
    truncate: bool = True


@dataclass
class TrainingPair:
    query_tokens: list[Token]
    query_api: list[str]
    positive_tokens: list[Token]
    positive_api: list[str]
    transform_record: list[TransformRecord]
    seed: int
    file_id: int


@dataclass
class AugmentReport:
    programs: int = 0
    pairs: int = 0
    skipped: int = 0
    errors: list[str] = field(default_factory=list)


def derive_seed(*parts: object) -> int:
    digest = hashlib.sha256(":".join(map(str, parts)).encode()).digest()
    return int.from_bytes(digest[:8], "big")


def corpus_name_pool(corpus: Corpus) -> list[str]:
    names: set[str] = set()
    for _, tree in program_trees(corpus):
        if tree is not None:
            names.update(identifiers(tree))
    return sorted(names)


def make_pair(
    tree: StatementTree,
    config: AugmentConfig,
    candidates: CandidateModel,
    name_pool: list[str],
    seed: int,
    file_id: int = -1,
) -> TrainingPair:
    rng = random.Random(seed)
    original = tree.tokens()
    positive, rec = rename_identifiers(tree, candidates, config.rename_prob, rng)
    rec.rng_seed = seed
    records = [rec]
    for _ in range(config.dead_code_count):
        positive, rec = insert_dead_code(positive, DEFAULT_TEMPLATES, rng, name_pool)
        rec.rng_seed = seed
        records.append(rec)
    query = truncate_query(original, rng) if config.truncate else list(original)
    pos_tokens = positive.tokens()
    return TrainingPair(
        query_tokens=query,
        query_api=api_sequence_from_tokens(query),
        positive_tokens=pos_tokens,
        positive_api=api_sequence(positive),
        transform_record=records,
        seed=seed,
        file_id=file_id,
    )


def build_training_pairs(
    corpus: Corpus,
    config: AugmentConfig | None = None,
    report: AugmentReport | None = None,
    candidates: CandidateModel | None = None,
) -> Iterator[TrainingPair]:
    """Yield ``pairs_per_fragment`` pairs per parseable source program.

    The positive is the renamed + dead-code-augmented program; the query is
    a truncation of the untransformed original.
    """
    config = config or AugmentConfig()
    report = report if report is not None else AugmentReport()
    candidates = candidates or build_candidate_model(corpus)
    pool = corpus_name_pool(corpus)
    for file_id, tree in program_trees(corpus):
        report.programs += 1
        if tree is None:
            report.skipped += 1
            report.errors.append(f"file {file_id}: parse error")
            continue
        for j in range(config.pairs_per_fragment):
            seed = derive_seed(config.seed, file_id, j)
            try:
                pair = make_pair(tree, config, candidates, pool, seed, file_id)
            except (ValueError, ParseError) as exc:
                report.skipped += 1
                report.errors.append(f"file {file_id} pair {j}: {exc}")
                continue
            report.pairs += 1
            yield pair


def _record_dict(rec: TransformRecord) -> dict:
    return asdict(rec)


def save_pairs(pairs: Iterable[TrainingPair], path: str | Path, meta: dict | None = None) -> int:
    header = {"format": PAIRS_FORMAT, "format_version": PAIRS_FORMAT_VERSION, **(meta or {})}
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for p in pairs:
            fh.write(
                json.dumps(
                    {
                        "query_tokens": encode_tokens(p.query_tokens),
                        "query_api": p.query_api,
                        "positive_tokens": encode_tokens(p.positive_tokens),
                        "positive_api": p.positive_api,
                        "transform_record": [_record_dict(r) for r in p.transform_record],
                        "seed": p.seed,
                        "file_id": p.file_id,
                    },
                    sort_keys=True,
                    separators=(",", ":"),
                )
                + "\n"
            )
            n += 1
    return n


def load_pairs(path: str | Path) -> list[TrainingPair]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = json.loads(lines[0]) if lines else {}
    if header.get("format") != PAIRS_FORMAT or header.get("format_version") != PAIRS_FORMAT_VERSION:
        raise ValueError("unsupported pairs format version")
    out = []
    for index, line in enumerate(lines[1:], start=1):
        try:
            rec = json.loads(line)
            out.append(
                TrainingPair(
                    decode_tokens(rec["query_tokens"]),
                    rec["query_api"],
                    decode_tokens(rec["positive_tokens"]),
                    rec["positive_api"],
                    [TransformRecord(**r) for r in rec["transform_record"]],
                    rec["seed"],
                    rec["file_id"],
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ValueError(f"malformed pair record {index}: {exc}") from exc
    return out
