"""Expression tree for scalar chart functions."""

from __future__ import annotations

from dataclasses import dataclass

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")


class Expr:
    """Base node.  Nodes are frozen dataclasses, so equality is structural."""

    def variables(self):
        return set()

    def is_constant(self):
        return not self.variables()


@dataclass(frozen=True)
class Var(Expr):
    index: int
    name: str = ""

    def variables(self):
        return {self.index}

    def __eq__(self, other):
        return isinstance(other, Var) and other.index == self.index

    def __hash__(self):
        return hash(("Var", self.index))

    def __str__(self):
        return self.name or f"x{self.index}"


@dataclass(frozen=True)
class Num(Expr):
    value: float

    def __str__(self):
        return repr(self.value) if self.value >= 0 else f"({self.value!r})"


@dataclass(frozen=True)
class _Binary(Expr):
    left: Expr
    right: Expr

    symbol = "?"

    def variables(self):
        return self.left.variables() | self.right.variables()

    def __str__(self):
        return f"({self.left} {self.symbol} {self.right})"


class Add(_Binary):
    symbol = "+"


class Sub(_Binary):
    symbol = "-"


class Mul(_Binary):
    symbol = "*"


class Div(_Binary):
    symbol = "/"


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: float

    def variables(self):
        return self.base.variables()

    def __str__(self):
        return f"({self.base})^{self.exponent!r}"


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr

    def variables(self):
        return self.arg.variables()

    def __str__(self):
        return f"(-{self.arg})"


@dataclass(frozen=True)
class Func(Expr):
    name: str
    arg: Expr

    def __post_init__(self):
        if self.name not in FUNCTIONS:
            raise ValueError(f"unsupported function {self.name!r}")

    def variables(self):
        return self.arg.variables()

    def __str__(self):
        return f"{self.name}({self.arg})"


def Sin(arg):
    return Func("sin", arg)


def Cos(arg):
    return Func("cos", arg)


def Exp(arg):
    return Func("exp", arg)


def Log(arg):
    return Func("log", arg)


def Sqrt(arg):
    return Func("sqrt", arg)
