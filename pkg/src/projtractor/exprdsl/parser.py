"""Recursive-descent parser for chart expressions.

Grammar (lowest to highest precedence)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := ("-" | "+") unary | power
    power   := atom (("^" | "**") unary)?
    atom    := NUMBER | "pi" | "e" | NAME | FUNC "(" expr ")" | "(" expr ")"

``-x^2`` parses as ``-(x^2)`` and ``a^b^c`` as ``a^(b^c)``.  Exponents must
be constant; they are folded to a float at parse time.
"""

from __future__ import annotations

import math
import re

from ..errors import ExprSyntaxError, UnknownIdentifierError
from .ast import FUNCTIONS, Add, Div, Func, Mul, Neg, Num, Pow, Sub, Var

CONSTANTS = {"pi": math.pi, "e": math.e}

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>\*\*|[-+*/^(),])
""", re.VERBOSE)


def tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos, (), text)
        kind = m.lastgroup
        if kind != "ws":
            value = m.group()
            if kind == "op":
                kind = "^" if value == "**" else value
            tokens.append((kind, value, pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text, variables):
        self.text = text
        self.tokens = tokenize(text)
        self.pos = 0
        self.variables = {name: i for i, name in enumerate(variables)}

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind):
        tok = self.peek()
        if tok[0] != kind:
            what = "end of input" if tok[0] == "end" else repr(tok[1])
            raise ExprSyntaxError(f"unexpected {what}", tok[2], (kind,), self.text)
        return self.advance()

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ExprSyntaxError(f"unexpected {tok[1]!r}", tok[2],
                                  ("+", "-", "*", "/", "^", "end of input"), self.text)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] in ("+", "-"):
            op = self.advance()[0]
            rhs = self.term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek()[0] in ("*", "/"):
            op = self.advance()[0]
            rhs = self.unary()
            node = Mul(node, rhs) if op == "*" else Div(node, rhs)
        return node

    def unary(self):
        kind = self.peek()[0]
        if kind == "-":
            self.advance()
            arg = self.unary()
            if isinstance(arg, Num):
                return Num(-arg.value)
            return Neg(arg)
        if kind == "+":
            self.advance()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "^":
            tok = self.advance()
            exponent = self.unary()
            if not exponent.is_constant():
                raise ExprSyntaxError("exponent must be a constant expression",
                                      tok[2] + len(tok[1]), (), self.text)
            from .evaluate import eval_constant
            value = eval_constant(exponent)
            if not math.isfinite(value):
                raise ExprSyntaxError("exponent is not finite", tok[2] + len(tok[1]), (), self.text)
            return Pow(base, value)
        return base

    def atom(self):
        tok = self.peek()
        kind, value, offset = tok
        if kind == "number":
            self.advance()
            return Num(float(value))
        if kind == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        if kind == "name":
            self.advance()
            if value in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Func(value, arg)
            if value in CONSTANTS:
                return Num(CONSTANTS[value])
            if value in self.variables:
                return Var(self.variables[value], value)
            raise UnknownIdentifierError(value, offset, self.text)
        what = "end of input" if kind == "end" else repr(value)
        raise ExprSyntaxError(f"unexpected {what}", offset,
                              ("number", "identifier", "("), self.text)


def parse(text, variables):
    """Parse ``text`` over the named chart variables into an :class:`Expr`."""
    for name in variables:
        if name in CONSTANTS or name in FUNCTIONS:
            raise ValueError(f"{name!r} is reserved and cannot name a variable")
    return _Parser(text, list(variables)).parse()
