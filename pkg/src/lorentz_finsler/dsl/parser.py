"""Recursive-descent parser for the expression language.

Grammar::

    expr     := term (('+' | '-') term)*
    term     := factor (('*' | '/') factor)*
    factor   := ['-'] atom ['^' exponent]
    exponent := number | '(' ['-'] number ['/' number] ')'
    atom     := number | ident | '(' expr ')' | func '(' expr ')'
    func     := sqrt | exp | log | sin | cos

Identifiers are x<k>, v<k> or names in the ``parameters`` mapping, which are
substituted as constants.  Offsets in errors are byte offsets of the UTF-8
encoded source.
"""

from __future__ import annotations

import re
from fractions import Fraction
from typing import Mapping

from ..errors import ExprSyntaxError, UnknownVariable
from . import expr as E

_TOKEN = re.compile(
    r"\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)
_VAR = re.compile(r"^[xv][1-9][0-9]*$")


class _Tok:
    __slots__ = ("kind", "text", "offset")

    def __init__(self, kind: str, text: str, offset: int):
        self.kind = kind
        self.text = text
        self.offset = offset


def _tokenize(source: str) -> list[_Tok]:
    raw = source.encode("utf-8")
    # work on the decoded text but report byte offsets
    byte_at = _byte_offsets(source)
    toks: list[_Tok] = []
    pos = 0
    while True:
        m = _TOKEN.match(source, pos)
        if m is None:
            rest = source[pos:]
            stripped = len(rest) - len(rest.lstrip())
            if pos + stripped >= len(source):
                break
            bad = pos + stripped
            raise ExprSyntaxError(
                f"unexpected character {source[bad]!r}", byte_at[bad], frozenset({"number", "identifier", "operator"}), source
            )
        kind = m.lastgroup
        assert kind is not None
        text = m.group(kind)
        toks.append(_Tok(kind if kind != "op" else text, text, byte_at[m.start(kind)]))
        pos = m.end()
    toks.append(_Tok("end", "", len(raw)))
    return toks


def _byte_offsets(source: str) -> list[int]:
    out = []
    b = 0
    for ch in source:
        out.append(b)
        b += len(ch.encode("utf-8"))
    out.append(b)
    return out


_ATOM_START = frozenset({"number", "identifier", "("})


class _Parser:
    def __init__(self, source: str, parameters: Mapping[str, float]):
        self.source = source
        self.toks = _tokenize(source)
        self.i = 0
        self.parameters = parameters

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def fail(self, expected) -> ExprSyntaxError:
        t = self.peek()
        what = "end of input" if t.kind == "end" else repr(t.text)
        return ExprSyntaxError(f"unexpected {what}", t.offset, frozenset(expected), self.source)

    def expect(self, kind: str) -> _Tok:
        if self.peek().kind != kind:
            raise self.fail({kind})
        return self.take()

    def parse(self) -> E.Expr:
        e = self.expr()
        if self.peek().kind != "end":
            raise self.fail({"+", "-", "*", "/", "^", "end of input"})
        return e

    def expr(self) -> E.Expr:
        e = self.term()
        while self.peek().kind in ("+", "-"):
            op = self.take().kind
            rhs = self.term()
            e = E.add(e, rhs) if op == "+" else E.sub(e, rhs)
        return e

    def term(self) -> E.Expr:
        e = self.factor()
        while self.peek().kind in ("*", "/"):
            op = self.take().kind
            rhs = self.factor()
            e = E.mul(e, rhs) if op == "*" else E.div(e, rhs)
        return e

    def factor(self) -> E.Expr:
        negate = False
        if self.peek().kind == "-":
            self.take()
            negate = True
        e = self.atom()
        if self.peek().kind == "^":
            self.take()
            e = E.power(e, self.exponent())
        return E.neg(e) if negate else e

    def exponent(self) -> Fraction:
        t = self.peek()
        if t.kind == "number":
            return Fraction(self.take().text)
        if t.kind != "(":
            raise self.fail({"number", "("})
        self.take()
        sign = 1
        if self.peek().kind == "-":
            self.take()
            sign = -1
        num = Fraction(self.expect("number").text)
        if self.peek().kind == "/":
            self.take()
            den = Fraction(self.expect("number").text)
            if den == 0:
                raise ExprSyntaxError("zero denominator in exponent", self.toks[self.i - 1].offset, frozenset({"number"}), self.source)
            num = num / den
        self.expect(")")
        return sign * num

    def atom(self) -> E.Expr:
        t = self.peek()
        if t.kind == "number":
            self.take()
            return E.const(float(t.text))
        if t.kind == "ident":
            self.take()
            name = t.text
            if name in E.UNARY_FUNCS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return E._UNARY_BUILDERS[E.UNARY_FUNCS[name]](arg)
            if _VAR.match(name):
                return E.var(name)
            if name in self.parameters:
                return E.const(float(self.parameters[name]))
            raise UnknownVariable(name, t.offset)
        if t.kind == "(":
            self.take()
            e = self.expr()
            self.expect(")")
            return e
        raise self.fail({"number", "identifier", "("})


def parse(source: str, parameters: Mapping[str, float] | None = None) -> E.Expr:
    """Parse expression text into an interned DAG."""
    return _Parser(source, parameters or {}).parse()
