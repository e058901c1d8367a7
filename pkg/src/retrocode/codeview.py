"""Statement tree, identifier table and API usage sequence for mini-language programs."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator

from .lexer import DEDENT, INDENT, Token, TokenKind, render


class StatementKind(str, Enum):
    DECLARATION = "declaration"
    EXPRESSION = "expression"
    CONDITIONAL = "conditional"
    LOOPING = "looping"
    FUNCTION_DEF = "function-def"
    RETURN = "return"
    OTHER = "other"


BLOCK_KINDS = (StatementKind.CONDITIONAL, StatementKind.LOOPING, StatementKind.FUNCTION_DEF)


class ParseError(ValueError):
    def __init__(self, message: str, statement_index: int):
        super().__init__(f"syntax error in statement {statement_index}: {message}")
        self.statement_index = statement_index


@dataclass
class Statement:
    """One statement; block-bearing kinds own their INDENT/DEDENT markers."""

    kind: StatementKind
    header: list[Token]
    body: list["Statement"] = field(default_factory=list)
    else_header: list[Token] = field(default_factory=list)
    orelse: list["Statement"] = field(default_factory=list)

    def tokens(self) -> list[Token]:
        out = list(self.header)
        if self.kind in BLOCK_KINDS:
            out.append(INDENT)
            for child in self.body:
                out.extend(child.tokens())
            out.append(DEDENT)
        if self.else_header:
            out.extend(self.else_header)
            out.append(INDENT)
            for child in self.orelse:
                out.extend(child.tokens())
            out.append(DEDENT)
        return out

    def blocks(self) -> list[list["Statement"]]:
        if self.kind not in BLOCK_KINDS:
            return []
        return [self.body, self.orelse] if self.else_header else [self.body]

    def copy(self) -> "Statement":
        return Statement(
            self.kind,
            list(self.header),
            [s.copy() for s in self.body],
            list(self.else_header),
            [s.copy() for s in self.orelse],
        )


@dataclass
class StatementTree:
    statements: list[Statement]

    def tokens(self) -> list[Token]:
        out: list[Token] = []
        for stmt in self.statements:
            out.extend(stmt.tokens())
        return out

    def render(self) -> str:
        return render(self.tokens())

    def copy(self) -> "StatementTree":
        return StatementTree([s.copy() for s in self.statements])

    def walk(self) -> Iterator[Statement]:
        """Pre-order traversal."""
        stack = list(reversed(self.statements))
        while stack:
            stmt = stack.pop()
            yield stmt
            for block in reversed(stmt.blocks()):
                stack.extend(reversed(block))

    def count(self) -> int:
        return sum(1 for _ in self.walk())


# --------------------------------------------------------------------------
# expressions (only as much structure as identifier/API analysis needs)


@dataclass
class Name:
    text: str
    pos: int


@dataclass
class Attr:
    value: object
    attr: str
    pos: int


@dataclass
class Call:
    func: object
    args: list
    paren_pos: int


@dataclass
class Subscript:
    value: object
    index: object


@dataclass
class Other:
    children: list


_COMPARE = frozenset("== != < > <= >=".split())
_ASSIGN = frozenset("= += -= *= /= //= %=".split())


class _HeaderParser:
    """Recursive-descent parser for one statement header.

    ``base`` is the absolute token offset of ``toks[0]`` so that recorded
    positions index the whole program's token stream.
    """

    def __init__(self, toks: list[Token], base: int, index: int):
        self.toks = toks
        self.base = base
        self.index = index
        self.i = 0

    def error(self, msg: str) -> ParseError:
        return ParseError(msg, self.index)

    def peek(self) -> Token | None:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def at(self, text: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.text == text and tok.kind not in (TokenKind.LITERAL,)

    def expect(self, text: str) -> Token:
        if not self.at(text):
            got = self.peek()
            raise self.error(f"expected {text!r}, got {got.text if got else 'end of line'!r}")
        self.i += 1
        return self.toks[self.i - 1]

    def name(self) -> Name:
        tok = self.peek()
        if tok is None or tok.kind is not TokenKind.IDENTIFIER:
            raise self.error("expected identifier")
        self.i += 1
        return Name(tok.text, self.base + self.i - 1)

    def end(self) -> None:
        tok = self.peek()
        if tok is not None and tok.kind is TokenKind.NEWLINE:
            self.i += 1
        if self.i != len(self.toks):
            raise self.error(f"unexpected token {self.toks[self.i].text!r}")

    # statement headers

    def statement(self) -> tuple[StatementKind, dict]:
        tok = self.peek()
        if tok is None:
            raise self.error("empty statement")
        info: dict = {"binds": [], "exprs": []}
        if tok.kind is TokenKind.KEYWORD:
            kw = tok.text
            if kw == "def":
                self.i += 1
                info["def"] = self.name()
                self.expect("(")
                params = []
                if not self.at(")"):
                    params.append(self.name())
                    while self.at(","):
                        self.i += 1
                        params.append(self.name())
                self.expect(")")
                self.expect(":")
                info["params"] = params
                self.end()
                return StatementKind.FUNCTION_DEF, info
            if kw in ("if", "while"):
                self.i += 1
                info["exprs"].append(self.expr())
                self.expect(":")
                self.end()
                return (StatementKind.CONDITIONAL if kw == "if" else StatementKind.LOOPING), info
            if kw == "for":
                self.i += 1
                info["binds"].append(self.name())
                self.expect("in")
                info["exprs"].append(self.expr())
                self.expect(":")
                self.end()
                return StatementKind.LOOPING, info
            if kw == "return":
                self.i += 1
                nxt = self.peek()
                if nxt is not None and nxt.kind is not TokenKind.NEWLINE:
                    info["exprs"].append(self.expr())
                self.end()
                return StatementKind.RETURN, info
            if kw in ("pass", "break", "continue"):
                self.i += 1
                self.end()
                return StatementKind.OTHER, info
        target = self.expr()
        tok = self.peek()
        if tok is not None and tok.kind is TokenKind.OPERATOR and tok.text in _ASSIGN:
            if isinstance(target, Name):
                info["binds"].append(target)
                if tok.text != "=":
                    info["exprs"].append(target)  # augmented assignment also reads
            elif isinstance(target, (Attr, Subscript)):
                info["exprs"].append(target)
            else:
                raise self.error("invalid assignment target")
            self.i += 1
            info["exprs"].append(self.expr())
            self.end()
            return StatementKind.DECLARATION, info
        info["exprs"].append(target)
        self.end()
        return StatementKind.EXPRESSION, info

    def else_clause(self) -> None:
        self.expect("else")
        self.expect(":")
        self.end()

    # expressions

    def expr(self) -> object:
        left = self.and_test()
        while self.at("or"):
            self.i += 1
            left = Other([left, self.and_test()])
        return left

    def and_test(self) -> object:
        left = self.not_test()
        while self.at("and"):
            self.i += 1
            left = Other([left, self.not_test()])
        return left

    def not_test(self) -> object:
        if self.at("not"):
            self.i += 1
            return Other([self.not_test()])
        return self.comparison()

    def comparison(self) -> object:
        left = self.arith()
        while True:
            tok = self.peek()
            if tok is None:
                return left
            if tok.kind is TokenKind.OPERATOR and tok.text in _COMPARE or self.at("in"):
                self.i += 1
            elif self.at("not") and self.i + 1 < len(self.toks) and self.toks[self.i + 1].text == "in":
                self.i += 2
            else:
                return left
            left = Other([left, self.arith()])

    def arith(self) -> object:
        left = self.term()
        while self._at_op("+", "-"):
            self.i += 1
            left = Other([left, self.term()])
        return left

    def term(self) -> object:
        left = self.factor()
        while self._at_op("*", "/", "//", "%"):
            self.i += 1
            left = Other([left, self.factor()])
        return left

    def _at_op(self, *ops: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.kind is TokenKind.OPERATOR and tok.text in ops

    def factor(self) -> object:
        if self._at_op("-", "+"):
            self.i += 1
            return Other([self.factor()])
        return self.postfix()

    def postfix(self) -> object:
        node = self.atom()
        while True:
            if self.at("("):
                paren = self.base + self.i
                self.i += 1
                args = self._items(")")
                node = Call(node, args, paren)
            elif self.at("."):
                self.i += 1
                attr = self.name()
                node = Attr(node, attr.text, attr.pos)
            elif self.at("["):
                self.i += 1
                index = self.expr()
                self.expect("]")
                node = Subscript(node, index)
            else:
                return node

    def _items(self, close: str) -> list:
        items = []
        while not self.at(close):
            items.append(self.expr())
            if self.at(","):
                self.i += 1
            elif not self.at(close):
                raise self.error(f"expected ',' or {close!r}")
        self.expect(close)
        return items

    def atom(self) -> object:
        tok = self.peek()
        if tok is None:
            raise self.error("unexpected end of expression")
        if tok.kind is TokenKind.IDENTIFIER:
            return self.name()
        if tok.kind is TokenKind.LITERAL or tok.text in ("True", "False", "None"):
            self.i += 1
            return Other([])
        if self.at("("):
            self.i += 1
            inner = self.expr()
            self.expect(")")
            return inner
        if self.at("["):
            self.i += 1
            return Other(self._items("]"))
        raise self.error(f"unexpected token {tok.text!r}")


# --------------------------------------------------------------------------
# statement-level parser


class _StatementParser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.i = 0
        self.count = 0

    def block(self, nested: bool) -> list[Statement]:
        out: list[Statement] = []
        while self.i < len(self.toks):
            tok = self.toks[self.i]
            if tok is DEDENT or tok == DEDENT:
                if not nested:
                    raise ParseError("unexpected dedent", self.count)
                return out
            out.append(self.statement())
        if nested:
            raise ParseError("unterminated block", self.count)
        return out

    def header(self) -> list[Token]:
        start = self.i
        while self.i < len(self.toks):
            tok = self.toks[self.i]
            if tok.kind is TokenKind.INDENT_MARKER:
                break
            self.i += 1
            if tok.kind is TokenKind.NEWLINE:
                break
        return self.toks[start : self.i]

    def statement(self) -> Statement:
        index = self.count
        self.count += 1
        if self.toks[self.i] == INDENT:
            raise ParseError("unexpected indent", index)
        header = self.header()
        kind, _ = _HeaderParser(header, 0, index).statement()
        stmt = Statement(kind, header)
        if kind in BLOCK_KINDS:
            stmt.body = self.suite(index)
            if header[0].text == "if" and self.i < len(self.toks) and self.toks[self.i].text == "else":
                else_header = self.header()
                _HeaderParser(else_header, 0, index).else_clause()
                stmt.else_header = else_header
                stmt.orelse = self.suite(index)
        return stmt

    def suite(self, index: int) -> list[Statement]:
        if not self.toks[self.i - 1].kind is TokenKind.NEWLINE or self.i >= len(self.toks) or self.toks[self.i] != INDENT:
            raise ParseError("expected an indented block", index)
        self.i += 1
        body = self.block(nested=True)
        if not body:
            raise ParseError("empty block", index)
        self.i += 1  # DEDENT
        return body


def parse(tokens: list[Token]) -> StatementTree:
    """Parse a token stream into a statement tree (raises ParseError)."""
    return StatementTree(_StatementParser(list(tokens)).block(nested=False))


# --------------------------------------------------------------------------
# analyses


def _header_infos(tree: StatementTree) -> Iterator[tuple[Statement, dict]]:
    """Yield every header's analysis with absolute token positions."""
    offset = 0

    def visit(stmts: list[Statement]) -> Iterator[tuple[Statement, dict]]:
        nonlocal offset
        for stmt in stmts:
            _, info = _HeaderParser(stmt.header, offset, 0).statement()
            offset += len(stmt.header)
            yield stmt, info
            if stmt.kind in BLOCK_KINDS:
                offset += 1
                yield from visit(stmt.body)
                offset += 1
            if stmt.else_header:
                offset += len(stmt.else_header) + 1
                yield from visit(stmt.orelse)
                offset += 1

    yield from visit(tree.statements)


def _walk_expr(node: object) -> Iterator[object]:
    stack = [node]
    while stack:
        cur = stack.pop()
        yield cur
        if isinstance(cur, Attr):
            stack.append(cur.value)
        elif isinstance(cur, Call):
            stack.append(cur.func)
            stack.extend(cur.args)
        elif isinstance(cur, Subscript):
            stack.extend([cur.value, cur.index])
        elif isinstance(cur, Other):
            stack.extend(cur.children)


def flatten_callee(node: object) -> str:
    """``os.path.join`` -> "os.path.join"; ``a.b().c`` -> "a.b().c"."""
    if isinstance(node, Name):
        return node.text
    if isinstance(node, Attr):
        return f"{flatten_callee(node.value)}.{node.attr}"
    if isinstance(node, Call):
        return f"{flatten_callee(node.func)}()"
    if isinstance(node, Subscript):
        return f"{flatten_callee(node.value)}[]"
    return "_"


class Role(str, Enum):
    VARIABLE = "variable"
    FUNCTION = "function"
    PARAMETER = "parameter"


@dataclass
class IdentifierEntry:
    role: Role
    positions: list[int]


IdentifierTable = dict[str, IdentifierEntry]

_ROLE_RANK = {Role.FUNCTION: 0, Role.PARAMETER: 1, Role.VARIABLE: 2}


def identifiers(tree: StatementTree) -> IdentifierTable:
    """Renameable names with their role and every occurrence position.

    A name is renameable when the program binds it (def, parameter,
    assignment, for target). Unbound names count as variables only when they
    are never called directly or used as an attribute base; otherwise they
    refer to builtins or external modules and are left out.
    """
    roles: dict[str, Role] = {}
    positions: dict[str, list[int]] = {}
    external_use: set[str] = set()

    def bind(name: Name, role: Role) -> None:
        current = roles.get(name.text)
        if current is None or _ROLE_RANK[role] < _ROLE_RANK[current]:
            roles[name.text] = role
        positions.setdefault(name.text, []).append(name.pos)

    for _, info in _header_infos(tree):
        if "def" in info:
            bind(info["def"], Role.FUNCTION)
            for p in info["params"]:
                bind(p, Role.PARAMETER)
        for b in info["binds"]:
            bind(b, Role.VARIABLE)
        for expr in info["exprs"]:
            for node in _walk_expr(expr):
                if isinstance(node, Call) and isinstance(node.func, Name):
                    external_use.add(node.func.text)
                elif isinstance(node, Attr) and isinstance(node.value, Name):
                    external_use.add(node.value.text)
                if isinstance(node, Name):
                    positions.setdefault(node.text, []).append(node.pos)

    table: IdentifierTable = {}
    for name, pos in positions.items():
        role = roles.get(name)
        if role is None:
            if name in external_use:
                continue
            role = Role.VARIABLE
        table[name] = IdentifierEntry(role, sorted(set(pos)))
    return dict(sorted(table.items()))


def api_sequence(tree: StatementTree) -> list[str]:
    """Called names in source order of the callee end (the call's '(')."""
    calls: list[tuple[int, str]] = []
    for _, info in _header_infos(tree):
        for expr in info["exprs"]:
            for node in _walk_expr(expr):
                if isinstance(node, Call):
                    calls.append((node.paren_pos, flatten_callee(node.func)))
    return [name for _, name in sorted(calls)]


def api_sequence_from_tokens(tokens: list[Token]) -> list[str]:
    """Lenient API extraction for token slices that need not parse.

    Agrees with :func:`api_sequence` on parseable programs whose callees are
    name/attribute/call/subscript chains rooted at a name.
    """
    out: list[str] = []
    for i, tok in enumerate(tokens):
        if tok.text != "(" or tok.kind is not TokenKind.PUNCTUATION or i == 0:
            continue
        prev = tokens[i - 1]
        if not (prev.kind is TokenKind.IDENTIFIER or prev.text in (")", "]")):
            continue
        parts: list[str] = []
        j = i - 1
        while j >= 0:
            t = tokens[j]
            if t.kind is TokenKind.IDENTIFIER:
                parts.append(t.text)
                j -= 1
                if j >= 0 and tokens[j].text == "." and tokens[j].kind is TokenKind.PUNCTUATION:
                    parts.append(".")
                    j -= 1
                    continue
                break
            if t.text in (")", "]") and t.kind is TokenKind.PUNCTUATION:
                j = _match_open(tokens, j)
                if j < 0:
                    break
                parts.append("()" if t.text == ")" else "[]")
                j -= 1
                continue
            break
        if j >= 0 and tokens[j].text == "def" and tokens[j].kind is TokenKind.KEYWORD:
            continue
        if not parts or parts[-1] in (".", "()", "[]"):
            parts.append("_")
        out.append("".join(reversed(parts)))
    return out


def _match_open(tokens: list[Token], j: int) -> int:
    close = tokens[j].text
    open_ = "(" if close == ")" else "["
    depth = 0
    while j >= 0:
        t = tokens[j]
        if t.kind is TokenKind.PUNCTUATION:
            if t.text == close:
                depth += 1
            elif t.text == open_:
                depth -= 1
                if depth == 0:
                    return j
        j -= 1
    return -1


def dump_tree(tree: StatementTree) -> str:
    """Indented debug dump, one line per statement."""
    lines: list[str] = []

    def visit(stmts: list[Statement], depth: int) -> None:
        for stmt in stmts:
            text = render([t for t in stmt.header if t.kind is not TokenKind.NEWLINE]).strip()
            lines.append(f"{'  ' * depth}{stmt.kind.value}: {text}")
            visit(stmt.body, depth + 1)
            if stmt.else_header:
                lines.append(f"{'  ' * depth}else:")
                visit(stmt.orelse, depth + 1)

    visit(tree.statements, 0)
    return "\n".join(lines)
