"""Charts, metrics, affine connections and their curvature, in jet arithmetic.

Index layouts used throughout the package (batch axes always lead):

* ``gamma[..., c, a, b]``    = Gamma^c_{ab}
* ``riemann[..., a, b, c, d]`` = R_{ab}{}^c{}_d, with [nabla_a, nabla_b] v^c = R_{ab}{}^c{}_d v^d
* ``ricci[..., b, d]``       = R_{bd} = R_{ab}{}^a{}_d
* ``cotton[..., a, b, c]``   = Y_{abc} = nabla_a P_{bc} - nabla_b P_{ac}

With this sign convention the unit round sphere has Schouten tensor P = g.

Densities of weight w are stored as their component relative to the chart
volume form ``dx^1 ^ ... ^ dx^n``.  For a connection special with respect to
that volume form the density connection is the plain derivative.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .errors import SingularMetricError
from .exprdsl import Expr, eval_array, eval_jet
from .exprdsl import jet as J
from .exprdsl.jet import Jet, einsum

DET_FLOOR = 1e-12


@dataclass(frozen=True)
class ChartGeometry:
    """A single chart carrying either a metric or a torsion-free connection."""

    name: str
    variables: tuple
    domain: np.ndarray
    metric: tuple | None = None
    connection: tuple | None = None
    sigma: tuple | None = None
    samples: int = 25
    seed: int = 0
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if (self.metric is None) == (self.connection is None):
            raise ValueError("exactly one of metric or connection must be given")
        n = len(self.variables)
        if n < 2:
            raise ValueError("chart dimension must be at least 2")
        dom = np.asarray(self.domain, dtype=float)
        if dom.shape != (n, 2) or np.any(dom[:, 0] >= dom[:, 1]):
            raise ValueError("domain must be n closed intervals [lo, hi] with lo < hi")
        object.__setattr__(self, "domain", dom)
        if self.metric is not None:
            m = np.asarray(self.metric, dtype=object)
            if m.shape != (n, n):
                raise ValueError(f"metric must be {n}x{n}")
            for a in range(n):
                for b in range(a + 1, n):
                    if m[a, b] != m[b, a]:
                        raise ValueError(f"metric is not symmetric in entries ({a},{b})")
        if self.connection is not None:
            c = np.asarray(self.connection, dtype=object)
            if c.shape != (n, n, n):
                raise ValueError(f"connection must be {n}x{n}x{n}")
            for k in range(n):
                for a in range(n):
                    for b in range(a + 1, n):
                        if c[k, a, b] != c[k, b, a]:
                            raise ValueError(
                                f"Gamma^{k}_({a}{b}) is not symmetric; connections must be torsion-free")
        if self.sigma is not None:
            s = np.asarray(self.sigma, dtype=object)
            if s.shape != (n, n):
                raise ValueError(f"sigma must be {n}x{n}")
            for a in range(n):
                for b in range(a + 1, n):
                    if s[a, b] != s[b, a]:
                        raise ValueError(f"sigma is not symmetric in entries ({a},{b})")

    @property
    def n(self):
        return len(self.variables)

    @property
    def has_metric(self):
        return self.metric is not None

    def sample_points(self, count=None, seed=None):
        return sample_points(self.domain, self.samples if count is None else count,
                             self.seed if seed is None else seed)

    def center(self):
        return self.domain.mean(axis=1)

    def contains(self, points, slack=1e-12):
        p = np.asarray(points, dtype=float)
        return np.all((p >= self.domain[:, 0] - slack) & (p <= self.domain[:, 1] + slack), axis=-1)


def sample_points(domain, count, seed=0):
    """Deterministic scrambled-Halton points strictly inside the box."""
    domain = np.asarray(domain, dtype=float)
    u = qmc.Halton(d=domain.shape[0], scramble=True, seed=seed).random(count)
    return domain[:, 0] + u * (domain[:, 1] - domain[:, 0])


# -- jets of the defining data ----------------------------------------------

def metric_jets(geom, points, order):
    if geom.metric is None:
        raise ValueError(f"geometry {geom.name!r} has no metric")
    return eval_array(geom.metric, points, order)


def _check_metric(g, points=None):
    d = np.linalg.det(J.value_of(g))
    flat = np.ravel(d)
    bad = np.flatnonzero(np.abs(flat) < DET_FLOOR)
    if bad.size:
        i = int(bad[0])
        where = None
        if points is not None:
            p = np.asarray(points, dtype=float)
            where = p.reshape(-1, p.shape[-1])[i].tolist()
        raise SingularMetricError(where, float(flat[i]))
    return d


def nabla(t, gamma, kinds):
    """Covariant derivative with the new index first.

    ``kinds`` has one letter per tensor index of ``t``: ``"u"`` for an upper
    (vector) index, ``"d"`` for a lower one.  Density weights contribute
    nothing because the connection is assumed special for the chart scale.
    """
    k = len(kinds)
    letters = "bcdefgh"[:k]
    out = einsum(f"...{letters}a->...a{letters}", t.grad())
    for p, kind in enumerate(kinds):
        src = letters[:p] + "i" + letters[p + 1:]
        if kind == "u":
            out = out + einsum(f"...{letters[p]}ai,...{src}->...a{letters}", gamma, t)
        elif kind == "d":
            out = out - einsum(f"...ia{letters[p]},...{src}->...a{letters}", gamma, t)
        else:
            raise ValueError(f"index kind must be 'u' or 'd', got {kind!r}")
    return out


def christoffels_from_metric(g, points=None):
    """Levi-Civita symbols of a metric jet; order drops by one."""
    _check_metric(g, points)
    dg = g.grad()  # dg[..., i, j, k] = d_k g_ij
    s = (einsum("...dba->...dab", dg) + dg) - einsum("...abd->...dab", dg)
    return 0.5 * einsum("...cd,...dab->...cab", J.inv(g), s)


def specialize_connection(gamma):
    """Move a torsion-free connection within its projective class so the
    chart volume form is parallel (Gamma^i_{ia} = 0)."""
    n = gamma.shape[-1]
    alpha = -einsum("...iia->...a", gamma)
    delta = np.eye(n)
    shift = einsum("ca,...b->...cab", delta, alpha) + einsum("cb,...a->...cab", delta, alpha)
    return gamma + shift / (n + 1)


@dataclass
class CurvaturePack:
    riemann: object
    ricci: object
    schouten: object
    weyl: object
    cotton: object = None

    def values(self):
        """Same pack with every entry reduced to plain arrays."""
        return CurvaturePack(*(None if x is None else J.value_of(x) for x in
                               (self.riemann, self.ricci, self.schouten, self.weyl, self.cotton)))


def riemann_tensor(gamma):
    dgam = gamma.grad()  # dgam[..., c, b, d, a] = d_a Gamma^c_bd
    t1 = einsum("...cbda->...abcd", dgam)
    quad = einsum("...cai,...ibd->...abcd", gamma, gamma)
    return (t1 - t1.swapaxes(-4, -3)) + (quad - quad.swapaxes(-4, -3))


def curvature_pack(gamma, cotton=True):
    """Riemann, Ricci, projective Schouten, Weyl and (optionally) Cotton tensors."""
    n = gamma.shape[-1]
    riem = riemann_tensor(gamma)
    ric = einsum("...abad->...bd", riem)
    p = ric / (n - 1)
    delta = np.eye(n)
    weyl = riem - einsum("ca,...bd->...abcd", delta, p) + einsum("cb,...ad->...abcd", delta, p)
    y = None
    if cotton:
        if p.order < 1:
            raise ValueError("Cotton tensor needs the connection as jets of order >= 2")
        dp = nabla(p, gamma, "dd")
        y = dp - dp.swapaxes(-3, -2)
    return CurvaturePack(riem, ric, p, weyl, y)


def scalar_curvature(g, ginv=None):
    """Scalar curvature of a metric jet (order drops by two)."""
    gamma = christoffels_from_metric(g)
    ric = einsum("...abad->...bd", riemann_tensor(gamma))
    if ginv is None:
        ginv = J.inv(g)
    return einsum("...ab,...ab->...", ginv, ric)


# -- scale changes -------------------------------------------------------------

@dataclass(frozen=True)
class ScaleChange:
    """Passage between special connections, Upsilon = du."""

    u: Expr

    def jet(self, points, order):
        return eval_jet(self.u, points, order)


def _expand(factor, ndim):
    if ndim == 0:
        return factor
    return factor[(Ellipsis,) + (None,) * ndim]


def rescale_density(field_jet, u, weight):
    """Component of a weight-``weight`` density-valued field in the new scale."""
    factor = J.exp(weight * u)
    extra = field_jet.ndim - (u.ndim if isinstance(u, Jet) else np.ndim(u))
    return field_jet * _expand(factor, extra)


def apply_scale_change(gamma, u, fields=()):
    """Gamma^c_ab + delta^c_a du_b + delta^c_b du_a, plus rescaled density fields.

    ``u`` is a scalar jet; ``fields`` is a sequence of ``(jet, weight)``.
    The new connection preserves exp((n+1)u) times the old volume form.
    """
    n = gamma.shape[-1]
    ups = u.grad()
    delta = np.eye(n)
    new = gamma + einsum("ca,...b->...cab", delta, ups) + einsum("cb,...a->...cab", delta, ups)
    return new, [rescale_density(f, u, w) for f, w in fields]


# -- geometry-level helpers ----------------------------------------------------

def levi_civita(geom, points, order):
    """Levi-Civita symbols as jets of ``order`` (metric evaluated one higher)."""
    return christoffels_from_metric(metric_jets(geom, points, order + 1), points)


def special_connection(geom, points, order):
    """The chart-scale special connection of ``geom`` as jets of ``order``."""
    if geom.metric is not None:
        return specialize_connection(levi_civita(geom, points, order))
    return specialize_connection(eval_array(geom.connection, points, order))


def metric_scale(g):
    """Scale function u with exp((n+1)u) = sqrt|det g|: the Levi-Civita scale."""
    n = g.shape[-1]
    d = J.det(g)
    sign = np.sign(J.value_of(d))
    return J.log(d * sign) / (2 * (n + 1))
