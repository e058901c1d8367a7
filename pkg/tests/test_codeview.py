import pytest

from retrocode.codeview import (
    ParseError,
    Role,
    StatementKind,
    api_sequence,
    api_sequence_from_tokens,
    dump_tree,
    identifiers,
    parse,
)
from retrocode.lexer import TokenKind, tokenize
from retrocode.synth import generate_program

S = StatementKind


def tree(text):
    return parse(tokenize(text))


def test_single_assignment():
    t = tree("x = 1")
    assert [s.kind for s in t.statements] == [S.DECLARATION]


def test_conditional_with_one_child():
    t = tree("if a:\n    b()\n")
    (stmt,) = t.statements
    assert stmt.kind is S.CONDITIONAL
    assert [c.kind for c in stmt.body] == [S.EXPRESSION]


def test_statement_kinds():
    src = "def f(a):\n    return a\nfor i in xs:\n    pass\nwhile n:\n    n -= 1\nif k:\n    k = 1\nelse:\n    k = 2\nprint(f(1))\n"
    assert [s.kind for s in tree(src).statements] == [S.FUNCTION_DEF, S.LOOPING, S.LOOPING, S.CONDITIONAL, S.EXPRESSION]
    assert tree(src).count() == 10


def test_parse_error_names_statement():
    with pytest.raises(ParseError) as info:
        tree("x = 1\ny = (2\nz = 3\n")
    assert info.value.statement_index >= 1
    with pytest.raises(ParseError):
        tree("if a\n    b = 1\n")


def test_render_parse_identity_generated():
    for seed in range(1000):
        toks = tokenize(generate_program(seed))
        assert parse(toks).tokens() == toks


def test_identifiers_def():
    table = identifiers(tree("def f(a):\n    return a\n"))
    assert {k: v.role for k, v in table.items()} == {"f": Role.FUNCTION, "a": Role.PARAMETER}


def test_identifiers_assignment():
    table = identifiers(tree("x = y + 1"))
    assert {k: v.role for k, v in table.items()} == {"x": Role.VARIABLE, "y": Role.VARIABLE}


def test_identifiers_skip_builtins_and_modules():
    table = identifiers(tree("n = len(xs)\nm = math.floor(n)\n"))
    assert set(table) == {"n", "xs", "m"}


def test_identifier_positions_point_at_identifiers():
    for seed in range(300):
        toks = tokenize(generate_program(seed))
        for name, entry in identifiers(parse(toks)).items():
            for pos in entry.positions:
                assert toks[pos].kind is TokenKind.IDENTIFIER and toks[pos].text == name


def test_identifiers_invariant_under_reformatting():
    a = identifiers(tree("x=f( y ,2)\n"))
    b = identifiers(tree("x = f(y, 2)\n\n# c\n"))
    assert a == b


def test_api_sequence_examples():
    assert api_sequence(tree("print(x)")) == ["print"]
    assert api_sequence(tree("a.b(c.d())")) == ["a.b", "c.d"]
    assert api_sequence(tree("x = 1\ny = x + 2\n")) == []


def test_api_sequence_keeps_duplicates_in_order():
    assert api_sequence(tree("f(1)\ng(2)\nf(3)\n")) == ["f", "g", "f"]


def test_api_sequence_chains():
    assert api_sequence(tree("x = a.b().c(d[0].e())")) == ["a.b", "a.b().c", "d[].e"]


def test_api_sequence_length_matches_call_count_and_token_extraction():
    for seed in range(1000):
        toks = tokenize(generate_program(seed))
        seq = api_sequence(parse(toks))
        calls = sum(
            1 for i, t in enumerate(toks)
            if t.text == "(" and i and (toks[i - 1].kind is TokenKind.IDENTIFIER or toks[i - 1].text in ")]")
            and not (i >= 2 and toks[i - 2].text == "def")
        )
        assert len(seq) == calls
        assert api_sequence_from_tokens(toks) == seq


def test_dump_tree_is_indented_text():
    out = dump_tree(tree("if a:\n    b = 1\nelse:\n    c()\n"))
    assert out.splitlines() == ["conditional: if a:", "  declaration: b = 1", "else:", "  expression: c()"]
