"""Evaluation of expression trees as jets or plain floats."""

from __future__ import annotations

import numpy as np

from ..errors import JetDomainError
from . import jet as J
from .ast import Add, Div, Func, Mul, Neg, Num, Pow, Sub, Var

_FUNCS = {
    "sin": J.sin,
    "cos": J.cos,
    "exp": J.exp,
    "log": J.log,
    "sqrt": J.sqrt,
}


def _annotate(exc, node):
    if exc.subexpr is not None:
        return exc
    return JetDomainError(exc.reason, subexpr=node)


def _walk(node, leaf):
    if isinstance(node, Var):
        return leaf(node)
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Neg):
        return -_walk(node.arg, leaf)
    if isinstance(node, (Add, Sub, Mul, Div)):
        a = _walk(node.left, leaf)
        b = _walk(node.right, leaf)
        try:
            if isinstance(node, Add):
                return a + b
            if isinstance(node, Sub):
                return a - b
            if isinstance(node, Mul):
                return a * b
            if isinstance(b, J.Jet):
                return a * J.reciprocal(b)
            return a * J.reciprocal(np.asarray(b, dtype=float))
        except JetDomainError as exc:
            raise _annotate(exc, node) from None
    if isinstance(node, Pow):
        base = _walk(node.base, leaf)
        try:
            return J.power(base, node.exponent)
        except JetDomainError as exc:
            raise _annotate(exc, node) from None
    if isinstance(node, Func):
        arg = _walk(node.arg, leaf)
        try:
            return _FUNCS[node.name](arg)
        except JetDomainError as exc:
            raise _annotate(exc, node) from None
    raise TypeError(f"not an expression node: {node!r}")


def eval_constant(node):
    """Value of a variable-free expression."""
    if node.variables():
        raise ValueError("expression depends on chart variables")
    return float(_walk(node, lambda v: None))


def eval_jet(node, point, order):
    """Degree-``order`` Taylor expansion of ``node`` at ``point``.

    ``point`` has shape ``(n,)`` or ``(P, n)`` for a batch of points; the
    returned jet has shape ``()`` or ``(P,)`` accordingly.
    """
    point = np.asarray(point, dtype=float)
    n = point.shape[-1]
    bad = [v for v in node.variables() if v >= n]
    if bad:
        raise ValueError(f"variable index {bad[0]} out of range for dimension {n}")
    xs = J.Jet.variables(point, order)
    try:
        out = _walk(node, lambda v: xs[..., v.index])
    except JetDomainError as exc:
        raise JetDomainError(exc.reason, subexpr=exc.subexpr, points=point.tolist()) from None
    if not isinstance(out, J.Jet):
        out = J.Jet.constant(np.broadcast_to(out, point.shape[:-1]), n, order)
    if not np.all(np.isfinite(out.coef)):
        raise JetDomainError("non-finite value", subexpr=node, points=point.tolist())
    return out


def eval_array(exprs, point, order):
    """Evaluate a nested list/tuple of expressions into a single jet array.

    The nesting becomes trailing shape axes after the batch axes of ``point``.
    """
    arr = np.asarray(exprs, dtype=object)
    flat = [eval_jet(e, point, order) for e in arr.ravel()]
    stacked = J.stack(flat, axis=-1)
    return stacked.reshape(stacked.shape[:-1] + arr.shape)
