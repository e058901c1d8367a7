"""Lexer and canonical renderer for the mini-language.

The mini-language is a small Python-like subset (see docs/grammar.md).
Indentation is made explicit with INDENT/DEDENT marker tokens and every
physical line terminator becomes a NEWLINE token.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum


class TokenKind(str, Enum):
    IDENTIFIER = "identifier"
    KEYWORD = "keyword"
    LITERAL = "literal"
    OPERATOR = "operator"
    PUNCTUATION = "punctuation"
    NEWLINE = "newline"
    INDENT_MARKER = "indent-marker"


@dataclass(frozen=True)
class Token:
    text: str
    kind: TokenKind

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("token text must be non-empty")


class LexError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} at line {line}, column {column}")
        self.line = line
        self.column = column


LANGUAGE = "minipy"
SUPPORTED_LANGUAGES = (LANGUAGE,)

KEYWORDS = frozenset(
    "def return if else while for in and or not pass break continue True False None".split()
)
NEWLINE_TEXT = "\n"
INDENT_TEXT = "<INDENT>"
DEDENT_TEXT = "<DEDENT>"

NEWLINE = Token(NEWLINE_TEXT, TokenKind.NEWLINE)
INDENT = Token(INDENT_TEXT, TokenKind.INDENT_MARKER)
DEDENT = Token(DEDENT_TEXT, TokenKind.INDENT_MARKER)

# longest first so that "//=" wins over "//" and "/"
OPERATORS = sorted(
    "= == != < > <= >= + - * / // % += -= *= /= //= %=".split(), key=len, reverse=True
)
PUNCTUATION = frozenset("()[],:.")

_NUMBER = re.compile(r"\d+(\.\d+)?")
_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_STRING = re.compile(r"'(?:[^'\\\n]|\\.)*'|\"(?:[^\"\\\n]|\\.)*\"")


def _check_language(language: str) -> None:
    if language not in SUPPORTED_LANGUAGES:
        raise ValueError(f"unsupported language {language!r}; expected one of {SUPPORTED_LANGUAGES}")


def tokenize(text: str, language: str = LANGUAGE) -> list[Token]:
    """Split ``text`` into tokens.

    Blank lines and ``#`` comments produce no tokens. A final line without a
    trailing newline produces no NEWLINE token, but any open blocks are still
    closed with DEDENT markers. Newlines inside brackets are joined.
    """
    _check_language(language)
    tokens: list[Token] = []
    indents = [0]
    depth = 0
    lines = text.split("\n")
    for lineno, line in enumerate(lines, start=1):
        has_terminator = lineno < len(lines)
        stripped = line.lstrip(" ")
        if depth == 0:
            if not stripped or stripped.startswith("#"):
                continue
            if stripped.startswith("\t") or "\t" in line[: len(line) - len(stripped)]:
                raise LexError("tab in indentation", lineno, 1)
            width = len(line) - len(stripped)
            if width > indents[-1]:
                indents.append(width)
                tokens.append(INDENT)
            else:
                while width < indents[-1]:
                    indents.pop()
                    tokens.append(DEDENT)
                if width != indents[-1]:
                    raise LexError("inconsistent dedent", lineno, width + 1)
        col = len(line) - len(stripped)
        while col < len(line):
            ch = line[col]
            if ch in " \t":
                col += 1
                continue
            if ch == "#":
                break
            m = _NAME.match(line, col)
            if m:
                word = m.group()
                kind = TokenKind.KEYWORD if word in KEYWORDS else TokenKind.IDENTIFIER
                tokens.append(Token(word, kind))
                col = m.end()
                continue
            m = _NUMBER.match(line, col) or _STRING.match(line, col)
            if m:
                tokens.append(Token(m.group(), TokenKind.LITERAL))
                col = m.end()
                continue
            for op in OPERATORS:
                if line.startswith(op, col):
                    tokens.append(Token(op, TokenKind.OPERATOR))
                    col += len(op)
                    break
            else:
                if ch in PUNCTUATION:
                    tokens.append(Token(ch, TokenKind.PUNCTUATION))
                    if ch in "([":
                        depth += 1
                    elif ch in ")]":
                        depth = max(depth - 1, 0)
                    col += 1
                    continue
                raise LexError(f"unexpected character {ch!r}", lineno, col + 1)
        if has_terminator and depth == 0 and tokens and tokens[-1].kind in _CONTENT_KINDS:
            tokens.append(NEWLINE)
    while len(indents) > 1:
        indents.pop()
        tokens.append(DEDENT)
    return tokens


_CONTENT_KINDS = frozenset(
    {TokenKind.IDENTIFIER, TokenKind.KEYWORD, TokenKind.LITERAL, TokenKind.OPERATOR, TokenKind.PUNCTUATION}
)
_NO_SPACE_BEFORE = frozenset("),:.]")
_NO_SPACE_AFTER = frozenset("(.[")


def render(tokens: list[Token], indent: str = "    ") -> str:
    """Canonical text for a token sequence.

    ``tokenize(render(t)) == t`` for any ``t`` produced by :func:`tokenize`.
    Arbitrary slices (fragments) render for display but may not round-trip.
    """
    out: list[str] = []
    level = 0
    at_line_start = True
    prev: Token | None = None
    for tok in tokens:
        if tok.kind is TokenKind.NEWLINE:
            out.append("\n")
            at_line_start = True
            prev = None
            continue
        if tok.kind is TokenKind.INDENT_MARKER:
            level += 1 if tok.text == INDENT_TEXT else -1
            continue
        if at_line_start:
            out.append(indent * max(level, 0))
            at_line_start = False
        elif prev is not None and _needs_space(prev, tok):
            out.append(" ")
        out.append(tok.text)
        prev = tok
    return "".join(out)


def _needs_space(prev: Token, tok: Token) -> bool:
    if tok.text == "." and prev.kind is TokenKind.LITERAL:
        return True  # "1 .5" must not fuse into the float "1.5"
    if tok.text in _NO_SPACE_BEFORE or prev.text in _NO_SPACE_AFTER:
        return False
    if tok.text in ("(", "[") and (prev.kind is TokenKind.IDENTIFIER or prev.text in (")", "]")):
        return False
    return True


def render_line(tokens: list[Token]) -> str:
    """Render a single logical line without indentation or terminator."""
    body = [t for t in tokens if t.kind not in (TokenKind.NEWLINE, TokenKind.INDENT_MARKER)]
    return render(body).strip()
