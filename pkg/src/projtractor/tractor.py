"""Projective tractor calculus in a chart splitting.

All slots are components relative to the working special connection's
scale.  Values may be plain numpy arrays or jets; the differential
operators need jets, the algebraic ones accept either.

Flattened layout of an S^2 T value (length N = (n+1)(n+2)/2)::

    [sigma^{00}, sigma^{01}, ..., sigma^{0,n-1}, sigma^{11}, ..., sigma^{n-1,n-1},
     mu^0, ..., mu^{n-1}, rho]

i.e. the upper triangle of sigma row by row, then mu, then rho.  The same
layout indexes every N x N matrix in the solver.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import NotInKernelError
from .exprdsl import jet as J
from .exprdsl.jet import Jet, einsum
from .geometry import nabla


def s2_rank(n):
    return (n + 1) * (n + 2) // 2


@lru_cache(maxsize=None)
def _triu(n):
    return np.triu_indices(n)


@lru_cache(maxsize=None)
def _tri_lookup(n):
    iu = _triu(n)
    idx = np.zeros((n, n), dtype=int)
    idx[iu] = np.arange(len(iu[0]))
    idx[(iu[1], iu[0])] = np.arange(len(iu[0]))
    return idx


def _take_last(x, index):
    """Fancy-index the trailing shape axis of an array or jet."""
    if isinstance(x, Jet):
        return x[..., index]
    return np.asarray(x)[..., index]


# -- value types ---------------------------------------------------------------

@dataclass
class CotractorValue:
    """(sigma, mu_b): weight-1 density and weight-1 covector."""

    sigma: object
    mu: object


@dataclass
class TractorValue:
    """(nu^b, rho): weight -1 vector and weight -1 density."""

    nu: object
    rho: object


@dataclass
class TractorS2Value:
    """(sigma^{bc}, mu^b, rho), all of weight -2."""

    sigma: object
    mu: object
    rho: object

    @property
    def n(self):
        return self.mu.shape[-1]

    def flatten(self):
        rho = self.rho if isinstance(self.rho, Jet) else np.asarray(self.rho, dtype=float)
        return J.concatenate([_flat_sigma(self.sigma, self.n), self.mu, rho[..., None]], axis=-1)

    @classmethod
    def unflatten(cls, v, n=None):
        size = v.shape[-1]
        if n is None:
            n = int(round((-3 + np.sqrt(1 + 8 * size)) / 2))
        if s2_rank(n) != size:
            raise ValueError(f"length {size} is not (n+1)(n+2)/2 for n = {n}")
        m = n * (n + 1) // 2
        sigma = _take_last(v, _tri_lookup(n))
        mu = _take_last(v, np.arange(m, m + n))
        rho = v[..., m + n]
        return cls(sigma, mu, rho)

    def matrix(self):
        """The (n+1) x (n+1) symmetric matrix [[sigma, mu], [mu^T, rho]]."""
        top = J.concatenate([self.sigma, self.mu[..., :, None]], axis=-1)
        bottom = J.concatenate([self.mu[..., None, :], self.rho[..., None, None]], axis=-1)
        return J.concatenate([top, bottom], axis=-2)

    def values(self):
        return TractorS2Value(J.value_of(self.sigma), J.value_of(self.mu), J.value_of(self.rho))

    def sup_norm(self):
        return max(_sup(self.sigma), _sup(self.mu), _sup(self.rho))


def _flat_sigma(sigma, n):
    iu = _triu(n)
    if isinstance(sigma, Jet):
        return sigma[..., iu[0], iu[1]]
    return np.asarray(sigma)[..., iu[0], iu[1]]


def _zeros_like(x):
    if isinstance(x, Jet):
        return x * 0.0
    return np.zeros_like(np.asarray(x, dtype=float))


def _sup(x):
    v = np.abs(J.value_of(x))
    return float(v.max()) if v.size else 0.0


@dataclass
class S2Form1:
    """S^2 T-valued 1-form: sigma[..., a, b, c], mu[..., a, b], rho[..., a]."""

    sigma: object
    mu: object
    rho: object

    def values(self):
        return S2Form1(J.value_of(self.sigma), J.value_of(self.mu), J.value_of(self.rho))

    def sup_norm(self):
        return max(_sup(self.sigma), _sup(self.mu), _sup(self.rho))

    def flatten(self):
        """Per form index a, the flattened S^2 T value: shape (..., n, N)."""
        return TractorS2Value(self.sigma, self.mu, self.rho).flatten()

    def __sub__(self, other):
        return S2Form1(self.sigma - other.sigma, self.mu - other.mu, self.rho - other.rho)

    def __add__(self, other):
        return S2Form1(self.sigma + other.sigma, self.mu + other.mu, self.rho + other.rho)


@dataclass
class S2Form2:
    """S^2 T-valued 2-form: sigma[..., a, b, c, d], mu[..., a, b, c], rho[..., a, b],
    antisymmetric in (a, b)."""

    sigma: object
    mu: object
    rho: object


# -- tractor connections -------------------------------------------------------

def cotractor_derivative(field, gamma, schouten):
    """nabla_a (sigma, mu_b) = (nabla_a sigma - mu_a, nabla_a mu_b + P_ab sigma)."""
    top = field.sigma.grad() - field.mu
    bottom = nabla(field.mu, gamma, "d") + schouten * field.sigma[..., None, None]
    return CotractorValue(top, bottom)


def tractor_derivative(field, gamma, schouten):
    """nabla_a (nu^b, rho) = (nabla_a nu^b + rho delta^b_a, nabla_a rho - P_ab nu^b)."""
    n = gamma.shape[-1]
    top = nabla(field.nu, gamma, "u") + field.rho[..., None, None] * np.eye(n)
    bottom = field.rho.grad() - einsum("...ab,...b->...a", schouten, field.nu)
    return TractorValue(top, bottom)


def pairing(cotractor, tractor):
    """<(sigma, mu), (nu, rho)> = sigma rho + mu_b nu^b."""
    return cotractor.sigma * tractor.rho + einsum("...b,...b->...", cotractor.mu, tractor.nu)


def s2_algebraic(v, gamma, schouten):
    """Non-derivative part of the S^2 T connection (Christoffel and slot couplings)."""
    n = gamma.shape[-1]
    delta = np.eye(n)
    top = (einsum("...bai,...ic->...abc", gamma, v.sigma)
           + einsum("...cai,...bi->...abc", gamma, v.sigma)
           + einsum("ab,...c->...abc", delta, v.mu)
           + einsum("ac,...b->...abc", delta, v.mu))
    mid = (einsum("...bai,...i->...ab", gamma, v.mu)
           + einsum("ab,...->...ab", delta, v.rho)
           - einsum("...ac,...bc->...ab", schouten, v.sigma))
    bot = -2.0 * einsum("...ab,...b->...a", schouten, v.mu)
    return S2Form1(top, mid, bot)


def _plain_gradient(v):
    return S2Form1(einsum("...bca->...abc", v.sigma.grad()),
                   einsum("...ba->...ab", v.mu.grad()),
                   v.rho.grad())


def s2_derivative(v, gamma, schouten):
    """Normal tractor connection on S^2 T applied to a jet-valued section."""
    return _plain_gradient(v) + s2_algebraic(v, gamma, schouten)


# -- Kostant codifferential ----------------------------------------------------

def kostant_codiff_1(phi):
    """T*M (x) S^2 T -> S^2 T: contract the form index through the X-action."""
    sigma = _zeros_like(phi.sigma[..., 0, :, :])
    mu = einsum("...iic->...c", phi.sigma)
    rho = 2.0 * einsum("...ii->...", phi.mu)
    return TractorS2Value(sigma, mu, rho)


def kostant_codiff_2(psi):
    """Lambda^2 T*M (x) S^2 T -> T*M (x) S^2 T with psi = 1/2 psi_ab dx^a ^ dx^b.

    Normalised by d*(u ^ w (x) v) = u (x) X(w)v - w (x) X(u)v, which gives
    (d* psi)_a = sum_b X(e^b) psi_ab.
    """
    sigma = _zeros_like(psi.sigma[..., 0, :, :, :])
    mu = einsum("...abcb->...ac", psi.sigma)
    rho = 2.0 * einsum("...abb->...a", psi.mu)
    return S2Form1(sigma, mu, rho)


def x_action(u, v):
    """Derivation action of X(u) on an S^2 T value: (0, sigma u, 2 u.mu)."""
    return TractorS2Value(_zeros_like(v.sigma),
                          einsum("...i,...ib->...b", u, v.sigma),
                          2.0 * einsum("...i,...i->...", u, v.mu))


# -- splitting operator and BGG projection ---------------------------------------

def splitting_L(sigma, gamma, schouten):
    """Unique lift of sigma to S^2 T whose covariant derivative is d*-closed.

    mu^b = -1/(n+1) nabla_i sigma^{ib};  rho = -1/n (nabla_i mu^i - P_ij sigma^{ij}).
    """
    n = gamma.shape[-1]
    div = einsum("...iib->...b", nabla(sigma, gamma, "uu"))
    mu = -div / (n + 1)
    div_mu = einsum("...ii->...", nabla(mu, gamma, "u"))
    rho = -(div_mu - einsum("...ij,...ij->...", schouten, sigma)) / n
    return TractorS2Value(sigma, mu, rho)


def trace_free(t):
    """Trace-free part of T_a^{bc} (symmetric in b, c)."""
    n = t.shape[-1]
    delta = np.eye(n)
    tr = einsum("...iic->...c", t)
    return t - (einsum("ab,...c->...abc", delta, tr) + einsum("ac,...b->...abc", delta, tr)) / (n + 1)


def bgg_project(phi, tol=1e-8):
    """Class of a d*-closed form in ker/im: the trace-free part of its top slot."""
    img = kostant_codiff_1(phi)
    res = max(_sup(img.mu), _sup(img.rho))
    if res > tol:
        raise NotInKernelError(f"form is not in ker(d*): residual {res:.3e} > {tol:.1e}")
    return trace_free(phi.sigma)
