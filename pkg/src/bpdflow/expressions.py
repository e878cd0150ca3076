"""Condition expressions: parsing, canonical printing, typing and strict evaluation.

Grammar, lowest precedence first::

    or_expr   := and_expr ("or" and_expr)*
    and_expr  := not_expr ("and" not_expr)*
    not_expr  := "not" not_expr | compare
    compare   := primary [("==" | "!=" | "<" | "<=" | ">" | ">=") primary]
    primary   := IDENT | INTEGER | "true" | "false" | "tokens" "(" IDENT ")"
               | "(" or_expr ")"

Comparisons do not chain; ``a < b < c`` is a syntax error.
"""

from __future__ import annotations

import re
from collections.abc import Iterator, Mapping
from dataclasses import dataclass
from typing import Union

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1

KEYWORDS = frozenset({"and", "or", "not", "true", "false", "tokens"})
COMPARE_OPS = ("==", "!=", "<=", ">=", "<", ">")
IDENTIFIER = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


class ParseError(Exception):
    """Syntax or schema failure with a 1-based source position."""

    def __init__(self, line: int, column: int, expected: str, found: str, field: str | None = None) -> None:
        super().__init__(f"{line}:{column}: expected {expected}, found {found}")
        self.line = line
        self.column = column
        self.expected = expected
        self.found = found
        self.field = field


class EvaluationError(Exception):
    """Raised by :func:`eval_expression`; ``subject`` names the variable or operator at fault."""

    def __init__(self, message: str, subject: str) -> None:
        super().__init__(message)
        self.subject = subject


class ExpressionTypeError(Exception):
    def __init__(self, message: str, operator: str) -> None:
        super().__init__(message)
        self.operator = operator


@dataclass(frozen=True)
class BoolLit:
    value: bool


@dataclass(frozen=True)
class IntLit:
    value: int


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class TokenCount:
    flow: str


@dataclass(frozen=True)
class Compare:
    op: str
    lhs: Expression
    rhs: Expression


@dataclass(frozen=True)
class Not:
    operand: Expression


@dataclass(frozen=True)
class And:
    lhs: Expression
    rhs: Expression


@dataclass(frozen=True)
class Or:
    lhs: Expression
    rhs: Expression


Expression = Union[BoolLit, IntLit, Var, TokenCount, Compare, Not, And, Or]
Value = Union[bool, int]


# --------------------------------------------------------------------------
# lexing and parsing

_TOKEN = re.compile(
    r"(?P<ws>[ \t\r\n]+)"
    r"|(?P<int>-?[0-9]+)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>==|!=|<=|>=|<|>)"
    r"|(?P<lparen>\()"
    r"|(?P<rparen>\))"
)


@dataclass(frozen=True)
class _Tok:
    kind: str  # int, ident, keyword, op, lparen, rparen, eof
    text: str
    line: int
    column: int


def _describe(tok: _Tok) -> str:
    return "end of input" if tok.kind == "eof" else repr(tok.text)


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    line = 1
    pos = line_start = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise ParseError(line, col, "expression", repr(text[pos]))
        kind = m.lastgroup
        lexeme = m.group()
        if kind == "ws":
            for i, ch in enumerate(lexeme):
                if ch == "\n":
                    line += 1
                    line_start = pos + i + 1
        else:
            if kind == "ident" and lexeme in KEYWORDS:
                kind = "keyword"
            toks.append(_Tok(kind, lexeme, line, col))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text: str) -> None:
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def advance(self) -> _Tok:
        tok = self.toks[self.i]
        if tok.kind != "eof":
            self.i += 1
        return tok

    def at_keyword(self, word: str) -> bool:
        tok = self.peek()
        return tok.kind == "keyword" and tok.text == word

    def fail(self, expected: str) -> ParseError:
        tok = self.peek()
        if tok.kind == "eof" and self.i > 0:
            # point at the construct left dangling, not past the end
            last = self.toks[self.i - 1]
            return ParseError(last.line, last.column, expected, "end of input")
        return ParseError(tok.line, tok.column, expected, _describe(tok))

    def parse(self) -> Expression:
        expr = self.or_expr()
        if self.peek().kind != "eof":
            raise self.fail("end of input")
        return expr

    def or_expr(self) -> Expression:
        expr = self.and_expr()
        while self.at_keyword("or"):
            self.advance()
            expr = Or(expr, self.and_expr())
        return expr

    def and_expr(self) -> Expression:
        expr = self.not_expr()
        while self.at_keyword("and"):
            self.advance()
            expr = And(expr, self.not_expr())
        return expr

    def not_expr(self) -> Expression:
        if self.at_keyword("not"):
            self.advance()
            return Not(self.not_expr())
        return self.compare()

    def compare(self) -> Expression:
        lhs = self.primary()
        tok = self.peek()
        if tok.kind == "op":
            self.advance()
            return Compare(tok.text, lhs, self.primary())
        return lhs

    def primary(self) -> Expression:
        tok = self.peek()
        if tok.kind == "int":
            value = int(tok.text)
            if not INT64_MIN <= value <= INT64_MAX:
                raise ParseError(tok.line, tok.column, "64-bit integer", tok.text)
            self.advance()
            return IntLit(value)
        if tok.kind == "ident":
            self.advance()
            return Var(tok.text)
        if tok.kind == "keyword" and tok.text in ("true", "false"):
            self.advance()
            return BoolLit(tok.text == "true")
        if tok.kind == "keyword" and tok.text == "tokens":
            self.advance()
            self.expect("lparen", "'('")
            flow = self.peek()
            if flow.kind != "ident":
                raise self.fail("flow identifier")
            self.advance()
            self.expect("rparen", "')'")
            return TokenCount(flow.text)
        if tok.kind == "lparen":
            self.advance()
            inner = self.or_expr()
            self.expect("rparen", "')'")
            return inner
        raise self.fail("operand")

    def expect(self, kind: str, label: str) -> None:
        if self.peek().kind != kind:
            raise self.fail(label)
        self.advance()


def parse_expression(text: str) -> Expression:
    """Parse ``text`` into an expression tree or raise :class:`ParseError`."""
    return _Parser(text).parse()


# --------------------------------------------------------------------------
# printing

_PREC = {Or: 1, And: 2, Not: 3, Compare: 4}


def _prec(expr: Expression) -> int:
    return _PREC.get(type(expr), 5)


def _wrap(expr: Expression, minimum: int) -> str:
    text = format_expression(expr)
    return f"({text})" if _prec(expr) < minimum else text


def format_expression(expr: Expression) -> str:
    """Canonical text with the fewest parentheses that re-parse to the same tree."""
    if isinstance(expr, BoolLit):
        return "true" if expr.value else "false"
    if isinstance(expr, IntLit):
        return str(expr.value)
    if isinstance(expr, Var):
        return expr.name
    if isinstance(expr, TokenCount):
        return f"tokens({expr.flow})"
    if isinstance(expr, Compare):
        return f"{_wrap(expr.lhs, 5)} {expr.op} {_wrap(expr.rhs, 5)}"
    if isinstance(expr, Not):
        return f"not {_wrap(expr.operand, 3)}"
    if isinstance(expr, And):
        return f"{_wrap(expr.lhs, 2)} and {_wrap(expr.rhs, 3)}"
    if isinstance(expr, Or):
        return f"{_wrap(expr.lhs, 1)} or {_wrap(expr.rhs, 2)}"
    raise TypeError(f"not an expression: {expr!r}")


# --------------------------------------------------------------------------
# static queries

def walk(expr: Expression) -> Iterator[Expression]:
    yield expr
    if isinstance(expr, (Compare, And, Or)):
        yield from walk(expr.lhs)
        yield from walk(expr.rhs)
    elif isinstance(expr, Not):
        yield from walk(expr.operand)


def variables(expr: Expression) -> list[str]:
    """Referenced variable names, first occurrence order."""
    seen: dict[str, None] = {}
    for node in walk(expr):
        if isinstance(node, Var):
            seen.setdefault(node.name)
    return list(seen)


def token_flows(expr: Expression) -> list[str]:
    seen: dict[str, None] = {}
    for node in walk(expr):
        if isinstance(node, TokenCount):
            seen.setdefault(node.flow)
    return list(seen)


def infer_type(expr: Expression, var_types: Mapping[str, str]) -> str:
    """Static type (``"bool"`` or ``"int"``); unknown variables are the caller's concern."""
    if isinstance(expr, BoolLit):
        return "bool"
    if isinstance(expr, (IntLit, TokenCount)):
        return "int"
    if isinstance(expr, Var):
        if expr.name not in var_types:
            raise KeyError(expr.name)
        return var_types[expr.name]
    if isinstance(expr, Compare):
        lt = infer_type(expr.lhs, var_types)
        rt = infer_type(expr.rhs, var_types)
        if lt != rt:
            raise ExpressionTypeError(f"operator {expr.op} applied to {lt} and {rt}", expr.op)
        if lt == "bool" and expr.op not in ("==", "!="):
            raise ExpressionTypeError(f"operator {expr.op} is not defined on bool", expr.op)
        return "bool"
    if isinstance(expr, Not):
        if infer_type(expr.operand, var_types) != "bool":
            raise ExpressionTypeError("operator not applied to int", "not")
        return "bool"
    if isinstance(expr, (And, Or)):
        op = "and" if isinstance(expr, And) else "or"
        for side in (expr.lhs, expr.rhs):
            if infer_type(side, var_types) != "bool":
                raise ExpressionTypeError(f"operator {op} applied to int", op)
        return "bool"
    raise TypeError(f"not an expression: {expr!r}")


# --------------------------------------------------------------------------
# evaluation

def _check_int(value: int, subject: str) -> int:
    if not INT64_MIN <= value <= INT64_MAX:
        raise EvaluationError(f"integer overflow in {subject}", subject)
    return value


def _type_name(value: Value) -> str:
    return "bool" if isinstance(value, bool) else "int"


def eval_expression(
    expr: Expression,
    data: Mapping[str, Value],
    counts: Mapping[str, int] | None = None,
) -> Value:
    """Evaluate ``expr`` strictly: both operands of ``and``/``or`` are always evaluated."""
    if isinstance(expr, BoolLit):
        return expr.value
    if isinstance(expr, IntLit):
        return expr.value
    if isinstance(expr, Var):
        if expr.name not in data:
            raise EvaluationError(f"unknown variable {expr.name!r}", expr.name)
        value = data[expr.name]
        if isinstance(value, bool):
            return value
        if not isinstance(value, int):
            raise EvaluationError(f"variable {expr.name!r} holds a non bool/int value", expr.name)
        return _check_int(value, expr.name)
    if isinstance(expr, TokenCount):
        if counts is None:
            raise EvaluationError("tokens() evaluated without token counts", "tokens")
        return _check_int(counts.get(expr.flow, 0), "tokens")
    if isinstance(expr, Compare):
        lhs = eval_expression(expr.lhs, data, counts)
        rhs = eval_expression(expr.rhs, data, counts)
        lt, rt = _type_name(lhs), _type_name(rhs)
        if lt != rt:
            raise EvaluationError(f"operator {expr.op} applied to {lt} and {rt}", expr.op)
        if lt == "bool" and expr.op not in ("==", "!="):
            raise EvaluationError(f"operator {expr.op} is not defined on bool", expr.op)
        return _COMPARE[expr.op](lhs, rhs)
    if isinstance(expr, Not):
        value = eval_expression(expr.operand, data, counts)
        if not isinstance(value, bool):
            raise EvaluationError("operator not applied to int", "not")
        return not value
    if isinstance(expr, (And, Or)):
        op = "and" if isinstance(expr, And) else "or"
        lhs = eval_expression(expr.lhs, data, counts)
        rhs = eval_expression(expr.rhs, data, counts)
        if not (isinstance(lhs, bool) and isinstance(rhs, bool)):
            raise EvaluationError(f"operator {op} applied to int", op)
        return (lhs and rhs) if op == "and" else (lhs or rhs)
    raise TypeError(f"not an expression: {expr!r}")


_COMPARE = {
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}
