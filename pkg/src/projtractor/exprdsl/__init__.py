"""Chart-expression language and the jet arithmetic it evaluates in."""

from .ast import Add, Cos, Div, Exp, Expr, Func, Log, Mul, Neg, Num, Pow, Sin, Sqrt, Sub, Var
from .evaluate import eval_array, eval_constant, eval_jet
from .jet import DEFAULT_MAX_ORDER, Jet, basis_size
from .parser import parse

__all__ = [
    "Add", "Cos", "Div", "Exp", "Expr", "Func", "Log", "Mul", "Neg", "Num", "Pow",
    "Sin", "Sqrt", "Sub", "Var",
    "DEFAULT_MAX_ORDER", "Jet", "basis_size",
    "eval_array", "eval_constant", "eval_jet", "parse",
]
