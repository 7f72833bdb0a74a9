"""Input language.

::

    # comment
    n = 60                               size variable (optional)
    Matrix A(n, 40) <SPD, FullRank>
    Vector y(n)
    Scalar alpha <Positive>
    x := inv(trans(A)*A + alpha^2 * I(40)) * trans(A) * y

Dimensions are integer literals or size variables defined earlier. ``^``
takes a non-negative integer exponent.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction

from .expr import (DimensionError, Expr, Identity, Operand, Symbol, Times, add, inv, mul, neg,
                   T)
from .problem import Assignment, Problem, ProblemError, output_symbol
from .properties import parse_property


class ParseError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, column {col}: {message}")
        self.message = message
        self.line = line
        self.col = col


_TOKEN = re.compile(r"""
    (?P<ws>[ \t]+)
  | (?P<num>\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>:=|[-+*^(),<>=/])
""", re.VERBOSE)


@dataclass
class Tok:
    kind: str
    text: str
    line: int
    col: int


def tokenize(line: str, lineno: int) -> list[Tok]:
    out = []
    pos = 0
    line = line.split("#", 1)[0].rstrip()
    while pos < len(line):
        m = _TOKEN.match(line, pos)
        if not m:
            raise ParseError(f"unexpected character {line[pos]!r}", lineno, pos + 1)
        if m.lastgroup != "ws":
            out.append(Tok(m.lastgroup, m.group(), lineno, pos + 1))
        pos = m.end()
    out.append(Tok("end", "", lineno, len(line) + 1))
    return out


class _Line:
    def __init__(self, toks: list[Tok]):
        self.toks = toks
        self.i = 0

    @property
    def tok(self) -> Tok:
        return self.toks[self.i]

    def error(self, msg, tok=None):
        t = tok or self.tok
        return ParseError(msg, t.line, t.col)

    def take(self, kind=None, text=None) -> Tok:
        t = self.tok
        if (kind and t.kind != kind) or (text and t.text != text):
            want = text or kind
            got = t.text or "end of line"
            raise self.error(f"expected {want!r}, found {got!r}")
        self.i += 1
        return t

    def accept(self, text) -> bool:
        if self.tok.text == text and self.tok.kind != "end":
            self.i += 1
            return True
        return False


class Parser:
    def __init__(self):
        self.sizes: dict[str, int] = {}
        self.symbols: dict[str, Symbol] = {}
        self.decls: dict[str, Operand] = {}
        self.assignments: list[Assignment] = []

    # ---------------------------------------------------------- lines

    def parse(self, text: str, size_overrides: dict[str, int] | None = None,
              scale: float | None = None) -> Problem:
        self.overrides = dict(size_overrides or {})
        self.scale = scale
        for n, raw in enumerate(text.splitlines(), 1):
            toks = tokenize(raw, n)
            if toks[0].kind == "end":
                continue
            ln = _Line(toks)
            head = toks[0]
            if head.text in ("Matrix", "Vector", "RowVector", "Scalar"):
                self.declaration(ln)
            elif head.kind == "name" and toks[1].text == "=":
                self.size(ln)
            elif head.kind == "name" and toks[1].text == ":=":
                self.assignment(ln)
            else:
                raise ln.error("expected a declaration, a size or an assignment")
            if ln.tok.kind != "end":
                raise ln.error(f"unexpected {ln.tok.text!r}")
        try:
            return Problem(self.decls, self.assignments)
        except ProblemError as exc:
            raise ParseError(str(exc), len(text.splitlines()), 1) from None

    def size(self, ln: _Line):
        name = ln.take("name")
        ln.take(text="=")
        value = int(ln.take("num").text)
        self._fresh(ln, name)
        if name.text in self.overrides:
            self.sizes[name.text] = self.overrides[name.text]
        else:
            self.sizes[name.text] = self._scaled(value)

    def _scaled(self, v: int) -> int:
        scale = getattr(self, "scale", None)
        return v if scale is None else max(1, math.ceil(v * scale - 1e-9))

    def _fresh(self, ln, name: Tok):
        if name.text in self.sizes or name.text in self.symbols or name.text in ("I", "inv", "trans"):
            raise ln.error(f"{name.text} is already defined", name)

    def dim(self, ln: _Line) -> int:
        t = ln.tok
        if t.kind == "num":
            ln.take()
            v = Fraction(t.text)
            if v.denominator != 1 or v < 1:
                raise ln.error("dimensions are positive integers", t)
            return self._scaled(int(v))
        if t.kind == "name":
            ln.take()
            if t.text not in self.sizes:
                raise ln.error(f"unknown size {t.text}", t)
            return self.sizes[t.text]
        raise ln.error("expected a dimension")

    def declaration(self, ln: _Line):
        kind = ln.take().text
        name = ln.take("name")
        self._fresh(ln, name)
        if kind == "Scalar":
            rows = cols = 1
        else:
            ln.take(text="(")
            rows = self.dim(ln)
            if kind == "Matrix":
                ln.take(text=",")
                cols = self.dim(ln)
            else:
                cols = 1
            ln.take(text=")")
            if kind == "RowVector":
                rows, cols = 1, rows
        props = set()
        if ln.accept("<"):
            while True:
                t = ln.take("name")
                try:
                    props.add(parse_property(t.text))
                except ValueError as exc:
                    raise ln.error(str(exc), t) from None
                if not ln.accept(","):
                    break
            ln.take(text=">")
        okind = {"Scalar": "scalar", "Matrix": "matrix"}.get(kind, "vector")
        if okind == "matrix" and (rows == 1) != (cols == 1):
            okind = "vector"
        try:
            op = Operand(name.text, rows, cols, frozenset(props), okind)
        except ValueError as exc:
            raise ln.error(str(exc), name) from None
        self.decls[op.name] = op
        self.symbols[op.name] = Symbol(op)

    def assignment(self, ln: _Line):
        name = ln.take("name")
        self._fresh(ln, name)
        ln.take(text=":=")
        rhs = self.expr(ln)
        lhs = output_symbol(name.text, rhs)
        self.assignments.append(Assignment(lhs, rhs))
        self.symbols[name.text] = lhs

    # ---------------------------------------------------------- expressions

    def _build(self, ln, tok, fn, *args):
        try:
            return fn(*args)
        except DimensionError as exc:
            raise ln.error(f"dimension mismatch: {exc}", tok) from None

    def expr(self, ln: _Line) -> Expr:
        e = self.term(ln)
        while ln.tok.text in ("+", "-") and ln.tok.kind == "op":
            op = ln.take()
            rhs = self.term(ln)
            e = self._build(ln, op, add, e, rhs if op.text == "+" else neg(rhs))
        return e

    def term(self, ln: _Line) -> Expr:
        e = self.unary(ln)
        while ln.tok.text in ("*", "/") and ln.tok.kind == "op":
            op = ln.take()
            rhs = self.unary(ln)
            if op.text == "/":
                if not rhs.scalar:
                    raise ln.error("only division by a scalar is supported", op)
                if isinstance(rhs, Times) and not rhs.scalars and not rhs.factors:
                    if rhs.coeff == 0:
                        raise ln.error("division by zero", op)
                    rhs = Times(1 / rhs.coeff)
                else:
                    rhs = inv(rhs)
            e = self._build(ln, op, mul, e, rhs)
        return e

    def unary(self, ln: _Line) -> Expr:
        if ln.tok.text == "-" and ln.tok.kind == "op":
            ln.take()
            return neg(self.unary(ln))
        return self.power(ln)

    def power(self, ln: _Line) -> Expr:
        e = self.primary(ln)
        if ln.tok.text == "^":
            op = ln.take()
            t = ln.take("num")
            k = Fraction(t.text)
            if k.denominator != 1 or k < 0:
                raise ln.error("exponents are non-negative integers", t)
            if not e.is_square:
                raise ln.error("power of a non-square operand", op)
            if k == 0:
                return Times(1) if e.scalar else Identity(e.rows)
            e = self._build(ln, op, mul, *([e] * int(k)))
        return e

    def primary(self, ln: _Line) -> Expr:
        t = ln.tok
        if t.kind == "num":
            ln.take()
            return Times(Fraction(t.text))
        if t.kind == "op" and t.text == "(":
            ln.take()
            e = self.expr(ln)
            ln.take(text=")")
            return e
        if t.kind == "name":
            ln.take()
            if t.text in ("inv", "trans"):
                ln.take(text="(")
                arg = self.expr(ln)
                ln.take(text=")")
                return self._build(ln, t, inv if t.text == "inv" else T, arg)
            if t.text == "I" and t.text not in self.symbols:
                ln.take(text="(")
                n = self.dim(ln)
                ln.take(text=")")
                return Identity(n)
            if t.text not in self.symbols:
                raise ln.error(f"undeclared symbol {t.text}", t)
            return self.symbols[t.text]
        raise ln.error(f"unexpected {t.text or 'end of line'!r}")


def parse_input(text: str, sizes: dict[str, int] | None = None,
                scale: float | None = None) -> Problem:
    """Parse a problem.

    ``sizes`` overrides size variables defined in the text; ``scale``
    multiplies every other dimension (rounded up, at least 1).
    """
    return Parser().parse(text, sizes, scale)


def size_variables(text: str) -> dict[str, int]:
    p = Parser()
    p.parse(text)
    return dict(p.sizes)


def parse_expression(text: str, symbols: dict[str, Symbol]) -> Expr:
    """Parse a bare expression over the given symbols."""
    p = Parser()
    p.symbols = dict(symbols)
    ln = _Line(tokenize(text, 1))
    e = p.expr(ln)
    if ln.tok.kind != "end":
        raise ln.error(f"unexpected {ln.tok.text!r}")
    return e
