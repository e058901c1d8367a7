import pytest
from hypothesis import given, settings, strategies as st

from retrocode.lexer import DEDENT, INDENT, NEWLINE, LexError, Token, TokenKind, render, render_line, tokenize
from retrocode.synth import generate_program

K = TokenKind


def kinds(text):
    return [t.kind for t in tokenize(text)]


def test_smallest_program():
    assert tokenize("x = 1") == [Token("x", K.IDENTIFIER), Token("=", K.OPERATOR), Token("1", K.LITERAL)]


def test_def_header_kinds():
    toks = tokenize("def f(a):\n    return a\n")
    assert [t.kind for t in toks[:6]] == [K.KEYWORD, K.IDENTIFIER, K.PUNCTUATION, K.IDENTIFIER, K.PUNCTUATION, K.PUNCTUATION]


def test_newline_and_indent_markers():
    toks = tokenize("if a:\n    b()\nc = 2\n")
    assert NEWLINE in toks
    assert toks.count(INDENT) == 1 and toks.count(DEDENT) == 1
    assert toks[toks.index(INDENT) - 1] == NEWLINE


def test_unterminated_last_line_has_no_newline():
    assert tokenize("x = 1")[-1].kind is K.LITERAL
    assert tokenize("x = 1\n")[-1] == NEWLINE


def test_blank_lines_and_comments_vanish():
    assert tokenize("# note\n\nx = 1  # trailing\n\n") == tokenize("x = 1\n")


def test_dedent_at_end_of_input():
    toks = tokenize("while x:\n    x -= 1")
    assert toks[-1] == DEDENT


def test_brackets_join_lines():
    assert NEWLINE not in tokenize("x = [1,\n  2]")


def test_literals():
    toks = tokenize("s = 'a b' + \"c\" + 3.25")
    assert [t.text for t in toks if t.kind is K.LITERAL] == ["'a b'", '"c"', "3.25"]


@pytest.mark.parametrize("bad", ["x = $", "x = 'open", "if a:\n\tb = 1\n"])
def test_lex_errors_carry_position(bad):
    with pytest.raises(LexError) as info:
        tokenize(bad)
    assert info.value.line >= 1 and info.value.column >= 1


def test_unknown_language():
    with pytest.raises(ValueError):
        tokenize("x = 1", "cobol")


def test_empty_token_text_rejected():
    with pytest.raises(ValueError):
        Token("", K.IDENTIFIER)


def test_render_canonical_spacing():
    assert render(tokenize("x=f( a,b )[0].y")) == "x = f(a, b)[0].y"


def test_render_line_strips_markers():
    line = tokenize("return a + 1\n")
    assert render_line(line) == "return a + 1"


def test_round_trip_generated_programs():
    for seed in range(1000):
        toks = tokenize(generate_program(seed))
        assert tokenize(render(toks)) == toks


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from(["x", "y1", "_z", "1", "2.5", "'s'", "+", "*", "==", "(", ")", ","]), min_size=1, max_size=12))
def test_render_relexes_arbitrary_token_soup(words):
    text = " ".join(words)
    try:
        toks = tokenize(text)
    except LexError:
        return
    if toks:
        assert tokenize(render(toks)) == toks
