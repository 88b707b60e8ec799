"""Truncated multivariate Taylor arithmetic.

A :class:`Jet` stores, for every entry of a tensor-shaped array, the Taylor
coefficients ``c_alpha = d^alpha f / alpha!`` for all multi-indices with
``|alpha| <= order``.  The coefficient axis is always the trailing axis of
``Jet.coef``; everything in front of it (batch of points, tensor indices) is
the jet's ``shape`` and broadcasts like a numpy array.

Multi-indices are stored degree-graded, so truncating to a lower order is a
slice of the coefficient axis.
"""

from __future__ import annotations

import functools
import itertools
import math
from math import comb

import numpy as np

from ..errors import JetDomainError

DEFAULT_MAX_ORDER = 6


def basis_size(n, order):
    return comb(n + order, order)


class JetBasis:
    """Index tables for jets in ``n`` variables truncated at ``order``."""

    def __init__(self, n, order):
        self.n = n
        self.order = order
        multis = []
        for d in range(order + 1):
            for combo in itertools.combinations_with_replacement(range(n), d):
                alpha = [0] * n
                for i in combo:
                    alpha[i] += 1
                multis.append(tuple(alpha))
        self.multi = np.array(multis, dtype=int).reshape(len(multis), n)
        self.size = len(multis)
        self.index = {m: i for i, m in enumerate(multis)}
        self.degree = self.multi.sum(axis=1)
        self.factorial = np.array(
            [math.prod(math.factorial(a) for a in m) for m in multis], dtype=float)

        # product table: pairs (i, j) whose degrees fit, sorted by target index
        trip = []
        for i, mi in enumerate(multis):
            for j, mj in enumerate(multis):
                if self.degree[i] + self.degree[j] <= order:
                    k = self.index[tuple(a + b for a, b in zip(mi, mj))]
                    trip.append((k, i, j))
        trip.sort()
        ks = np.array([t[0] for t in trip])
        self.pair_i = np.array([t[1] for t in trip])
        self.pair_j = np.array([t[2] for t in trip])
        self.pair_starts = np.searchsorted(ks, np.arange(self.size))

        if order > 0:
            lower = basis_size(n, order - 1)
            src = np.zeros((n, lower), dtype=int)
            fac = np.zeros((n, lower))
            for a in range(n):
                for t, m in enumerate(multis[:lower]):
                    up = list(m)
                    up[a] += 1
                    src[a, t] = self.index[tuple(up)]
                    fac[a, t] = up[a]
            self.grad_src = src
            self.grad_fac = fac


@functools.lru_cache(maxsize=None)
def get_basis(n, order):
    return JetBasis(n, order)


def _shape_axis(axis, ndim):
    """Translate an axis of ``Jet.shape`` into an axis of ``Jet.coef``."""
    if axis < 0:
        axis += ndim
    if not 0 <= axis < ndim:
        raise np.exceptions.AxisError(axis, ndim)
    return axis


class Jet:
    """Tensor of truncated Taylor expansions in ``n`` variables."""

    __array_ufunc__ = None  # make ndarray (op) Jet defer to the Jet methods

    __slots__ = ("coef", "n", "order")

    def __init__(self, coef, n, order):
        coef = np.asarray(coef, dtype=float)
        if coef.ndim == 0 or coef.shape[-1] != basis_size(n, order):
            raise ValueError(
                f"coefficient axis has length {coef.shape[-1] if coef.ndim else 0}, "
                f"expected {basis_size(n, order)} for n={n}, order={order}")
        self.coef = coef
        self.n = n
        self.order = order

    # -- construction -----------------------------------------------------

    @classmethod
    def constant(cls, value, n, order):
        value = np.asarray(value, dtype=float)
        coef = np.zeros(value.shape + (basis_size(n, order),))
        coef[..., 0] = value
        return cls(coef, n, order)

    @classmethod
    def variables(cls, point, order):
        """Coordinate functions expanded at ``point`` (shape ``(..., n)``)."""
        point = np.asarray(point, dtype=float)
        n = point.shape[-1]
        coef = np.zeros(point.shape + (basis_size(n, order),))
        coef[..., 0] = point
        if order > 0:
            for a in range(n):
                coef[..., a, 1 + a] = 1.0
        return cls(coef, n, order)

    def _like(self, coef, order=None):
        return Jet(coef, self.n, self.order if order is None else order)

    # -- shape handling ---------------------------------------------------

    @property
    def shape(self):
        return self.coef.shape[:-1]

    @property
    def ndim(self):
        return self.coef.ndim - 1

    @property
    def basis(self):
        return get_basis(self.n, self.order)

    def __len__(self):
        return self.shape[0]

    def __getitem__(self, key):
        if not isinstance(key, tuple):
            key = (key,)
        if any(k is Ellipsis for k in key):
            key = key + (slice(None),)
        return self._like(self.coef[key])

    def __repr__(self):
        return f"Jet(shape={self.shape}, n={self.n}, order={self.order})"

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return self._like(self.coef.reshape(tuple(shape) + (self.coef.shape[-1],)))

    def broadcast_to(self, shape):
        shape = tuple(shape)
        return self._like(np.broadcast_to(self.coef, shape + (self.coef.shape[-1],)))

    def swapaxes(self, a, b):
        a, b = _shape_axis(a, self.ndim), _shape_axis(b, self.ndim)
        return self._like(np.swapaxes(self.coef, a, b))

    def moveaxis(self, src, dst):
        src, dst = _shape_axis(src, self.ndim), _shape_axis(dst, self.ndim)
        return self._like(np.moveaxis(self.coef, src, dst))

    def sum(self, axis=None):
        if axis is None:
            axis = tuple(range(self.ndim))
        elif isinstance(axis, int):
            axis = (_shape_axis(axis, self.ndim),)
        else:
            axis = tuple(_shape_axis(a, self.ndim) for a in axis)
        return self._like(self.coef.sum(axis=axis))

    def copy(self):
        return self._like(self.coef.copy())

    # -- derivative access ------------------------------------------------

    @property
    def value(self):
        return self.coef[..., 0]

    def truncate(self, order):
        if order > self.order:
            raise ValueError(f"cannot raise jet order {self.order} to {order}")
        if order < 0:
            raise ValueError("jet order must be non-negative")
        return self._like(self.coef[..., :basis_size(self.n, order)], order)

    def grad(self):
        """Jet of the gradient; a new trailing shape axis of length n, order - 1."""
        if self.order == 0:
            raise ValueError("cannot differentiate an order-0 jet")
        b = self.basis
        coef = self.coef[..., b.grad_src] * b.grad_fac
        return self._like(coef, self.order - 1)

    def partial(self, alpha):
        """Value of the partial derivative d^alpha at the expansion point."""
        alpha = tuple(int(a) for a in alpha)
        if sum(alpha) > self.order:
            raise ValueError(f"derivative of degree {sum(alpha)} exceeds order {self.order}")
        b = self.basis
        i = b.index[alpha]
        return self.coef[..., i] * b.factorial[i]

    def derivative_tensor(self, k):
        """Symmetric array of all k-th partial derivatives, shape ``shape + (n,)*k``."""
        if k > self.order:
            raise ValueError(f"derivative of degree {k} exceeds order {self.order}")
        out = np.empty(self.shape + (self.n,) * k)
        for idx in itertools.product(range(self.n), repeat=k):
            alpha = [0] * self.n
            for i in idx:
                alpha[i] += 1
            out[(Ellipsis,) + idx] = self.partial(alpha)
        return out

    def hessian(self):
        return self.derivative_tensor(2)

    # -- arithmetic -------------------------------------------------------

    def _align(self, other):
        if other.n != self.n:
            raise ValueError(f"jets in {self.n} and {other.n} variables do not mix")
        order = min(self.order, other.order)
        a = self if self.order == order else self.truncate(order)
        b = other if other.order == order else other.truncate(order)
        return a, b, order

    def __add__(self, other):
        if isinstance(other, Jet):
            a, b, order = self._align(other)
            return Jet(a.coef + b.coef, self.n, order)
        c = np.asarray(other, dtype=float)
        shape = np.broadcast_shapes(self.shape, c.shape)
        coef = np.array(np.broadcast_to(self.coef, shape + (self.coef.shape[-1],)))
        coef[..., 0] += c
        return self._like(coef)

    __radd__ = __add__

    def __neg__(self):
        return self._like(-self.coef)

    def __pos__(self):
        return self

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            a, b, order = self._align(other)
            if order == 0:
                return Jet(a.coef * b.coef, self.n, 0)
            basis = get_basis(self.n, order)
            prod = a.coef[..., basis.pair_i] * b.coef[..., basis.pair_j]
            return Jet(np.add.reduceat(prod, basis.pair_starts, axis=-1), self.n, order)
        c = np.asarray(other, dtype=float)
        return self._like(self.coef * c[..., None])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * reciprocal(other)
        c = np.asarray(other, dtype=float)
        return self._like(self.coef / c[..., None])

    def __rtruediv__(self, other):
        return reciprocal(self) * other

    def __pow__(self, exponent):
        return power(self, exponent)


# -- elementary functions ----------------------------------------------------

def _nilpotent(x):
    """x minus its value: the part that vanishes at the expansion point."""
    coef = x.coef.copy()
    coef[..., 0] = 0.0
    return x._like(coef)


def _compose(x, taylor):
    """Evaluate sum_k taylor[k] * (x - x0)^k, with ``taylor`` of shape (order+1,) + x.shape."""
    if x.order == 0:
        return x._like(taylor[0][..., None] * np.ones(1))
    h = _nilpotent(x)
    r = Jet.constant(taylor[x.order], x.n, x.order)
    for k in range(x.order - 1, -1, -1):
        r = r * h + taylor[k]
    return r


def _series(x, make):
    x0 = x.value
    taylor = np.stack([make(k, x0) for k in range(x.order + 1)])
    return _compose(x, taylor)


def exp(x):
    if not isinstance(x, Jet):
        return np.exp(x)
    return _series(x, lambda k, x0: np.exp(x0) / math.factorial(k))


def sin(x):
    if not isinstance(x, Jet):
        return np.sin(x)
    cycle = (np.sin, np.cos, lambda v: -np.sin(v), lambda v: -np.cos(v))
    return _series(x, lambda k, x0: cycle[k % 4](x0) / math.factorial(k))


def cos(x):
    if not isinstance(x, Jet):
        return np.cos(x)
    cycle = (np.cos, lambda v: -np.sin(v), lambda v: -np.cos(v), np.sin)
    return _series(x, lambda k, x0: cycle[k % 4](x0) / math.factorial(k))


def log(x):
    if not isinstance(x, Jet):
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            raise JetDomainError("log of a non-positive value")
        return np.log(x)
    x0 = x.value
    if np.any(x0 <= 0):
        raise JetDomainError("log of a non-positive value")

    def term(k, v):
        if k == 0:
            return np.log(v)
        return (-1.0) ** (k - 1) / (k * v ** k)

    return _series(x, term)


def _is_integer(p):
    return float(p).is_integer()


def _gen_binom(p, k):
    out = 1.0
    for i in range(k):
        out *= (p - i) / (i + 1)
    return out


def reciprocal(x):
    if not isinstance(x, Jet):
        x = np.asarray(x, dtype=float)
        if np.any(x == 0):
            raise JetDomainError("division by zero")
        return 1.0 / x
    x0 = x.value
    if np.any(x0 == 0):
        raise JetDomainError("division by zero")
    return _series(x, lambda k, v: (-1.0) ** k / v ** (k + 1))


def power(x, p):
    """x**p for a constant real exponent p."""
    p = float(p)
    if not math.isfinite(p):
        raise JetDomainError(f"non-finite exponent {p}")
    if not isinstance(x, Jet):
        x = np.asarray(x, dtype=float)
        if not _is_integer(p) and np.any(x <= 0):
            raise JetDomainError(f"non-integer power {p:g} of a non-positive value")
        if p < 0 and np.any(x == 0):
            raise JetDomainError("division by zero")
        return x ** p
    if _is_integer(p):
        k = int(p)
        base = x if k >= 0 else reciprocal(x)
        return _int_power(base, abs(k))
    x0 = x.value
    if np.any(x0 <= 0):
        raise JetDomainError(f"non-integer power {p:g} of a non-positive value")
    return _series(x, lambda k, v: _gen_binom(p, k) * v ** (p - k))


def _int_power(x, k):
    result = None
    base = x
    while k:
        if k & 1:
            result = base if result is None else result * base
        k >>= 1
        if k:
            base = base * base
    if result is None:
        return Jet.constant(np.ones(x.shape), x.n, x.order)
    return result


def sqrt(x):
    if not isinstance(x, Jet):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise JetDomainError("sqrt of a negative value")
        return np.sqrt(x)
    if np.any(x.value <= 0) and x.order > 0:
        raise JetDomainError("sqrt of a non-positive value")
    return power(x, 0.5)


def value_of(x):
    return x.value if isinstance(x, Jet) else np.asarray(x, dtype=float)


# -- tensor algebra ----------------------------------------------------------

def _split_spec(spec):
    spec = spec.replace(" ", "")
    if "->" not in spec:
        raise ValueError("jet einsum requires an explicit '->' output")
    ins, out = spec.split("->")
    ins = ins.split(",")
    for s in ins + [out]:
        if any(c.isupper() for c in s):
            raise ValueError("uppercase subscripts are reserved for jet axes")
    return ins, out


def einsum(spec, *operands):
    """``np.einsum`` over the shape axes of any mix of jets and arrays."""
    ins, out = _split_spec(spec)
    if len(ins) != len(operands):
        raise ValueError("operand count does not match subscripts")
    if not any(isinstance(op, Jet) for op in operands):
        return np.einsum(spec, *operands)
    if len(operands) == 1:
        op = operands[0]
        return op._like(np.einsum(f"{ins[0]}Z->{out}Z", op.coef))
    if len(operands) > 2:
        needed = set("".join(ins[2:]) + out)
        letters = []
        for c in (ins[0] + ins[1]).replace(".", ""):
            if c in needed and c not in letters:
                letters.append(c)
        ell = "..." if "..." in ins[0] + ins[1] else ""
        mid = ell + "".join(letters)
        first = einsum(f"{ins[0]},{ins[1]}->{mid}", operands[0], operands[1])
        return einsum(f"{mid},{','.join(ins[2:])}->{out}", first, *operands[2:])

    a, b = operands
    if isinstance(a, Jet) and isinstance(b, Jet):
        a, b, order = a._align(b)
        if order == 0:
            return Jet(np.einsum(f"{ins[0]}Z,{ins[1]}Z->{out}Z", a.coef, b.coef), a.n, 0)
        basis = get_basis(a.n, order)
        prod = np.einsum(f"{ins[0]}Z,{ins[1]}Z->{out}Z",
                         a.coef[..., basis.pair_i], b.coef[..., basis.pair_j])
        return Jet(np.add.reduceat(prod, basis.pair_starts, axis=-1), a.n, order)
    if isinstance(a, Jet):
        return a._like(np.einsum(f"{ins[0]}Z,{ins[1]}->{out}Z", a.coef, np.asarray(b, float)))
    return b._like(np.einsum(f"{ins[0]},{ins[1]}Z->{out}Z", np.asarray(a, float), b.coef))


def _promote(items):
    jets = [x for x in items if isinstance(x, Jet)]
    if not jets:
        return None
    n = jets[0].n
    order = min(j.order for j in jets)
    out = []
    for x in items:
        if isinstance(x, Jet):
            out.append(x if x.order == order else x.truncate(order))
        else:
            out.append(Jet.constant(x, n, order))
    return out


def stack(items, axis=0):
    items = list(items)
    jets = _promote(items)
    if jets is None:
        return np.stack(items, axis=axis)
    ndim = jets[0].ndim + 1
    ax = _shape_axis(axis, ndim)
    return jets[0]._like(np.stack([j.coef for j in jets], axis=ax), jets[0].order)


def concatenate(items, axis=0):
    items = list(items)
    jets = _promote(items)
    if jets is None:
        return np.concatenate(items, axis=axis)
    ax = _shape_axis(axis, jets[0].ndim)
    return jets[0]._like(np.concatenate([j.coef for j in jets], axis=ax), jets[0].order)


def det(m):
    """Determinant over the two trailing shape axes."""
    if not isinstance(m, Jet):
        return np.linalg.det(m)
    size = m.shape[-1]
    if m.order == 0:
        return m._like(np.linalg.det(m.value)[..., None])
    total = None
    for perm in itertools.permutations(range(size)):
        inversions = sum(1 for i in range(size) for j in range(i + 1, size) if perm[i] > perm[j])
        term = m[..., 0, perm[0]]
        for row in range(1, size):
            term = term * m[..., row, perm[row]]
        if inversions % 2:
            term = -term
        total = term if total is None else total + term
    return total


def inv(m):
    """Matrix inverse over the two trailing shape axes.

    Uses the terminating Neumann series around the value matrix, so the
    value must be invertible (numpy raises LinAlgError otherwise).
    """
    if not isinstance(m, Jet):
        return np.linalg.inv(m)
    m0inv = np.linalg.inv(m.value)
    if m.order == 0:
        return m._like(m0inv[..., None])
    e = -einsum("...ij,...jk->...ik", m0inv, _nilpotent(m))
    r = Jet.constant(m0inv, m.n, m.order)
    for _ in range(m.order):
        r = einsum("...ij,...jk->...ik", e, r) + m0inv
    return r
