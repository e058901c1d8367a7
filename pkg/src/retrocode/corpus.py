"""Source ingestion, fragment splitting and the persisted retrieval database."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .lexer import LANGUAGE, SUPPORTED_LANGUAGES, LexError, Token, TokenKind, tokenize

log = logging.getLogger(__name__)

FORMAT_NAME = "retrocode.corpus"
FORMAT_VERSION = 1
DEFAULT_FRAGMENT_LENGTH = 128
MIN_FRAGMENT_LENGTH = 8
SOURCE_SUFFIXES = (".py", ".mpy")


class ConfigError(ValueError):
    pass


class EmptyCorpusError(ValueError):
    def __init__(self) -> None:
        super().__init__("empty corpus")


class CorpusFormatError(ValueError):
    pass


@dataclass(frozen=True)
class SourceFile:
    file_id: int
    path: str
    language: str
    text: str


@dataclass(frozen=True)
class Fragment:
    fragment_id: int
    file_id: int
    ordinal: int
    tokens: tuple[Token, ...]
    token_span: tuple[int, int]


@dataclass
class Corpus:
    files: list[SourceFile]
    fragments: list[Fragment]
    successor_map: dict[int, int]
    fragment_length: int = DEFAULT_FRAGMENT_LENGTH
    skipped: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._by_file: dict[int, list[int]] = {}
        for frag in self.fragments:
            self._by_file.setdefault(frag.file_id, []).append(frag.fragment_id)

    def fragment(self, fragment_id: int) -> Fragment:
        if not 0 <= fragment_id < len(self.fragments):
            raise KeyError(f"unknown fragment id {fragment_id}")
        return self.fragments[fragment_id]

    def file(self, file_id: int) -> SourceFile:
        return self.files[file_id]

    def file_fragments(self, file_id: int) -> list[Fragment]:
        return [self.fragments[i] for i in self._by_file.get(file_id, [])]

    def file_tokens(self, file_id: int) -> list[Token]:
        return [t for frag in self.file_fragments(file_id) for t in frag.tokens]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Corpus):
            return NotImplemented
        return (
            self.files == other.files
            and self.fragments == other.fragments
            and self.successor_map == other.successor_map
            and self.fragment_length == other.fragment_length
            and self.skipped == other.skipped
        )


def split_fragments(tokens: list[Token], fragment_length: int) -> list[tuple[int, int]]:
    """Contiguous [start, end) spans; only the last may be shorter."""
    return [(s, min(s + fragment_length, len(tokens))) for s in range(0, len(tokens), fragment_length)]


def build_corpus(
    sources: Iterable[tuple[str, str]],
    language: str = LANGUAGE,
    fragment_length: int = DEFAULT_FRAGMENT_LENGTH,
) -> Corpus:
    """Build a corpus from ``(path, text)`` pairs, processed in path order."""
    if fragment_length < MIN_FRAGMENT_LENGTH:
        raise ConfigError(f"fragment_length must be >= {MIN_FRAGMENT_LENGTH}, got {fragment_length}")
    if language not in SUPPORTED_LANGUAGES:
        raise ConfigError(f"unsupported language {language!r}")
    files: list[SourceFile] = []
    fragments: list[Fragment] = []
    successor: dict[int, int] = {}
    skipped: list[tuple[str, str]] = []
    for path, text in sorted(sources, key=lambda s: s[0]):
        try:
            tokens = tokenize(text, language)
        except LexError as exc:
            log.warning("skipping %s: %s", path, exc)
            skipped.append((path, str(exc)))
            continue
        if not tokens:
            continue
        file_id = len(files)
        files.append(SourceFile(file_id, path, language, text))
        prev: int | None = None
        for ordinal, (start, end) in enumerate(split_fragments(tokens, fragment_length)):
            fid = len(fragments)
            fragments.append(Fragment(fid, file_id, ordinal, tuple(tokens[start:end]), (start, end)))
            if prev is not None:
                successor[prev] = fid
            prev = fid
    if not files:
        raise EmptyCorpusError()
    return Corpus(files, fragments, successor, fragment_length, skipped)


def _read_manifest(path: Path) -> list[tuple[Path, str]]:
    entries = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            entries.append((path.parent / rec["path"], rec.get("language", LANGUAGE)))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise CorpusFormatError(f"malformed manifest record at line {lineno}: {exc}") from exc
    return entries


def read_sources(source: str | Path, language: str = LANGUAGE) -> list[tuple[str, str]]:
    """``(path, text)`` pairs from a directory of source files or a manifest.

    Paths are relative to the directory (or the manifest's location).
    """
    source = Path(source)
    if source.is_dir():
        root = source
        entries = [(p, language) for p in sorted(source.rglob("*")) if p.is_file() and p.suffix in SOURCE_SUFFIXES]
    elif source.is_file():
        root = source.parent
        entries = _read_manifest(source)
    else:
        raise FileNotFoundError(f"corpus source not found: {source}")
    for _, lang in entries:
        if lang != language:
            raise ConfigError(f"manifest language {lang!r} does not match requested {language!r}")
    return [(p.relative_to(root).as_posix() if p.is_relative_to(root) else str(p), p.read_text()) for p, _ in entries]


def ingest(
    source: str | Path,
    language: str = LANGUAGE,
    fragment_length: int = DEFAULT_FRAGMENT_LENGTH,
) -> Corpus:
    """Ingest a directory of source files or a line-delimited manifest."""
    return build_corpus(read_sources(source, language), language, fragment_length)


def successor(corpus: Corpus, fragment_id: int) -> Fragment | None:
    corpus.fragment(fragment_id)
    nxt = corpus.successor_map.get(fragment_id)
    return None if nxt is None else corpus.fragments[nxt]


# --------------------------------------------------------------------------
# persistence

_KIND_CODES = {
    TokenKind.IDENTIFIER: "id",
    TokenKind.KEYWORD: "kw",
    TokenKind.LITERAL: "lit",
    TokenKind.OPERATOR: "op",
    TokenKind.PUNCTUATION: "p",
    TokenKind.NEWLINE: "nl",
    TokenKind.INDENT_MARKER: "ind",
}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}


def encode_tokens(tokens: Iterable[Token]) -> list[list[str]]:
    return [[t.text, _KIND_CODES[t.kind]] for t in tokens]


def decode_tokens(rows: list) -> list[Token]:
    return [Token(text, _CODE_KINDS[code]) for text, code in rows]


def _dumps(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def save_corpus(corpus: Corpus, path: str | Path, meta: dict | None = None) -> None:
    header = {
        **(meta or {}),
        "format": FORMAT_NAME,
        "format_version": FORMAT_VERSION,
        "fragment_length": corpus.fragment_length,
        "counts": {"files": len(corpus.files), "fragments": len(corpus.fragments), "skipped": len(corpus.skipped)},
    }
    lines = [_dumps(header)]
    for f in corpus.files:
        lines.append(_dumps({"record": "file", "file_id": f.file_id, "path": f.path, "language": f.language, "text": f.text}))
    for frag in corpus.fragments:
        lines.append(
            _dumps(
                {
                    "record": "fragment",
                    "fragment_id": frag.fragment_id,
                    "file_id": frag.file_id,
                    "ordinal": frag.ordinal,
                    "token_span": list(frag.token_span),
                    "tokens": encode_tokens(frag.tokens),
                    "successor": corpus.successor_map.get(frag.fragment_id),
                }
            )
        )
    for p, err in corpus.skipped:
        lines.append(_dumps({"record": "skipped", "path": p, "error": err}))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_corpus(path: str | Path) -> Corpus:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    try:
        header = json.loads(lines[0])
        ok = header.get("format") == FORMAT_NAME and header.get("format_version") == FORMAT_VERSION
    except (IndexError, json.JSONDecodeError, AttributeError):
        ok = False
    if not ok:
        raise CorpusFormatError("unsupported corpus format version")
    files: list[SourceFile] = []
    fragments: list[Fragment] = []
    succ: dict[int, int] = {}
    skipped: list[tuple[str, str]] = []
    for index, line in enumerate(lines[1:], start=1):
        try:
            rec = json.loads(line)
            kind = rec["record"]
            if kind == "file":
                if rec["file_id"] != len(files):
                    raise ValueError("file ids out of order")
                files.append(SourceFile(rec["file_id"], rec["path"], rec["language"], rec["text"]))
            elif kind == "fragment":
                if rec["fragment_id"] != len(fragments):
                    raise ValueError("fragment ids out of order")
                fragments.append(
                    Fragment(
                        rec["fragment_id"],
                        rec["file_id"],
                        rec["ordinal"],
                        tuple(decode_tokens(rec["tokens"])),
                        tuple(rec["token_span"]),
                    )
                )
                if rec["successor"] is not None:
                    succ[rec["fragment_id"]] = rec["successor"]
            elif kind == "skipped":
                skipped.append((rec["path"], rec["error"]))
            else:
                raise ValueError(f"unknown record type {kind!r}")
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise CorpusFormatError(f"malformed record {index}: {exc}") from exc
    counts = header.get("counts", {})
    if counts.get("files") != len(files) or counts.get("fragments") != len(fragments):
        raise CorpusFormatError("record counts do not match header")
    corpus = Corpus(files, fragments, succ, header["fragment_length"], skipped)
    check_invariants(corpus)
    return corpus


def check_invariants(corpus: Corpus) -> None:
    """Raise CorpusFormatError when fragment/successor invariants are violated."""
    for file in corpus.files:
        frags = corpus.file_fragments(file.file_id)
        pos = 0
        for i, frag in enumerate(frags):
            if frag.ordinal != i or frag.token_span[0] != pos or len(frag.tokens) != frag.token_span[1] - pos:
                raise CorpusFormatError(f"fragment {frag.fragment_id} breaks contiguity")
            if i < len(frags) - 1 and len(frag.tokens) != corpus.fragment_length:
                raise CorpusFormatError(f"fragment {frag.fragment_id} has wrong length")
            pos = frag.token_span[1]
            expected = frags[i + 1].fragment_id if i < len(frags) - 1 else None
            if corpus.successor_map.get(frag.fragment_id) != expected:
                raise CorpusFormatError(f"fragment {frag.fragment_id} has a wrong successor")
