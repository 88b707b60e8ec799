"""Metrizability operator, the sigma <-> g dictionary, normality and Einstein verdicts.

The dictionary between metrics and weight -2 symmetric fields, in chart
components relative to ``dx^1 ^ ... ^ dx^n``:

    tau = det(sigma),   g = (tau sigma)^{-1}

so g^{-1} = tau sigma and det(g)^{-1} = tau^n det(sigma) = tau^(n+1).
Solving for sigma gives sigma = det(g)^{1/(n+1)} g^{-1}.  For even n the
real (n+1)-th root of a negative det(g) exists and the map is a bijection
in every signature.  For odd n and det(g) < 0 no real sigma reproduces g;
we return the sigma of -g (same Levi-Civita connection, same projective
class), and ``metric_from_sigma`` then yields -g.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import AlgebraicDegeneracyError, DegenerateSigmaError, SingularSchoutenError, ZeroTauError
from .exprdsl import eval_array
from .exprdsl import jet as J
from .exprdsl.jet import Jet, einsum
from .geometry import (
    _check_metric,
    apply_scale_change,
    christoffels_from_metric,
    curvature_pack,
    metric_jets,
    nabla,
    riemann_tensor,
    specialize_connection,
)
from .tractor import (
    S2Form1,
    TractorS2Value,
    _plain_gradient,
    s2_algebraic,
    s2_derivative,
    s2_rank,
    splitting_L,
    trace_free,
)

DEFAULT_TOL = 1e-7
WITNESS_THRESHOLD = 1e-3
SIGMA_DET_FLOOR = 1e-12
ALGEBRAIC_DET_FLOOR = 1e-10


def _per_point(x, tensor_ndim):
    """Max-abs over the trailing tensor axes, leaving the batch axes."""
    v = np.abs(J.value_of(x))
    if tensor_ndim == 0:
        return v
    return v.reshape(v.shape[: v.ndim - tensor_ndim] + (-1,)).max(axis=-1)


def _sup(x):
    v = np.abs(J.value_of(x))
    return float(v.max()) if v.size else 0.0


# -- the sigma <-> g dictionary ---------------------------------------------------

def sigma_from_metric(g, points=None):
    """sigma^{ab} = det(g)^{1/(n+1)} g^{ab} (signed root for even n)."""
    _check_metric(g, points)
    n = g.shape[-1]
    d = J.det(g)
    sign = np.sign(J.value_of(d))
    magnitude = J.power(d * sign, 1.0 / (n + 1))
    factor = magnitude * sign if n % 2 == 0 else magnitude
    return factor[..., None, None] * J.inv(g)


def tau_from_sigma(sigma, log_scale=None):
    """tau^sigma as a weight-2 density component.

    Plain determinant of the components; ``log_scale`` is the scale function
    u of the working scale (volume form exp((n+1)u) dx^1^...^dx^n) when that
    is not the chart scale.
    """
    tau = J.det(sigma)
    if log_scale is not None:
        n = sigma.shape[-1]
        tau = tau * J.exp(2 * (n + 1) * log_scale)
    return tau


def metric_from_sigma(sigma, log_scale=None):
    """g^sigma = (tau^sigma sigma)^{-1}; independent of the working scale."""
    d = J.value_of(J.det(sigma))
    flat = np.ravel(d)
    bad = np.flatnonzero(np.abs(flat) <= SIGMA_DET_FLOOR)
    if bad.size:
        raise DegenerateSigmaError(float(flat[bad[0]]))
    tau = tau_from_sigma(sigma, log_scale)
    return J.inv(tau[..., None, None] * sigma)


def signature(g):
    """(positive, negative) eigenvalue counts of a symmetric matrix value."""
    ev = np.linalg.eigvalsh(J.value_of(g))
    return int(np.sum(ev > 0, axis=-1).max()), int(np.sum(ev < 0, axis=-1).max())


# -- the metrizability operator and its prolongation ---------------------------------

def D_operator(sigma, gamma):
    """trace-free(nabla_a sigma^{bc})."""
    return trace_free(nabla(sigma, gamma, "uu"))


def metrizability_residual(sigma, gamma):
    """(sup-norm, per-point max) of D(sigma)."""
    d = D_operator(sigma, gamma)
    per = _per_point(d, 3)
    return float(per.max()), per


def prolongation_terms(v, gamma, curv):
    """Algebraic part A_a v of the closed prolonged system."""
    n = gamma.shape[-1]
    base = s2_algebraic(v, gamma, curv.schouten)
    mid = base.mu + einsum("...acbd,...cd->...ab", curv.weyl, v.sigma) / n
    bot = base.rho - 2.0 * einsum("...abc,...bc->...a", curv.cotton, v.sigma) / n
    return S2Form1(base.sigma, mid, bot)


def psys_form(v, gamma, curv):
    """Left-hand side of the prolonged system for a jet-valued section v."""
    return _plain_gradient(v) + prolongation_terms(v, gamma, curv)


def psys_residual(v, gamma, curv):
    form = psys_form(v, gamma, curv)
    return form.sup_norm(), form


def prolongation_matrix(gamma, curv):
    """Matrices A_a with the system written as d_a v + A_a v = 0.

    Returns a jet (or array) of shape (..., n, N, N) in the frozen flatten
    layout; column j is A_a applied to the j-th unit vector.
    """
    n = gamma.shape[-1]
    size = s2_rank(n)
    batch = J.value_of(gamma).ndim - 3
    # all unit vectors at once on a leading axis that broadcasts against the batch
    basis = np.eye(size).reshape((size,) + (1,) * batch + (size,))
    v = TractorS2Value.unflatten(basis, n)
    cols = prolongation_terms(v, gamma, curv).flatten()
    return cols.moveaxis(0, -1) if isinstance(cols, Jet) else np.moveaxis(cols, 0, -1)


# -- normality ------------------------------------------------------------------------

def normality_form(sigma, gamma, schouten):
    """nabla L(sigma) as an S^2 T-valued 1-form."""
    return s2_derivative(splitting_L(sigma, gamma, schouten), gamma, schouten)


def normality_residual(sigma, gamma, schouten):
    form = normality_form(sigma, gamma, schouten)
    per = np.maximum.reduce([_per_point(form.sigma, 3), _per_point(form.mu, 2),
                             _per_point(form.rho, 1)])
    return float(per.max()), per


# -- Einstein and projective flatness ---------------------------------------------------

def einstein_residual(g):
    """Trace-free Ricci (n >= 3) or |grad K| (n = 2) of a metric jet.

    Needs the metric as jets of order >= 2 (n >= 3) or >= 3 (n = 2).
    Returns (sup, per-point).
    """
    n = g.shape[-1]
    gamma = christoffels_from_metric(g)
    ric = einsum("...abad->...bd", riemann_tensor(gamma))
    scal = einsum("...ab,...ab->...", J.inv(g), ric)
    if n == 2:
        grad_k = (scal / 2.0).grad()
        per = _per_point(grad_k, 1)
    else:
        phi = ric - g * (scal / n)[..., None, None]
        per = _per_point(phi, 2)
    return float(per.max()), per


def projective_flatness_residual(curv, n):
    """sup |W| for n >= 3, sup |Y| for n = 2."""
    if n == 2:
        per = _per_point(curv.cotton, 3)
    else:
        per = _per_point(curv.weyl, 4)
    return float(per.max()), per


# -- algebraic genericity and the tau correspondence -----------------------------------

def det_L(sigma, gamma, schouten):
    """Per-point determinant of the (n+1) x (n+1) matrix of L(sigma)."""
    h = splitting_L(sigma, gamma, schouten).matrix()
    return np.linalg.det(J.value_of(h))


def _check_generic(h, points=None):
    hv = J.value_of(h)
    n1 = hv.shape[-1]
    d = np.linalg.det(hv)
    scale = np.maximum(np.abs(hv).reshape(hv.shape[:-2] + (-1,)).max(axis=-1), 1e-300) ** n1
    rel = np.abs(d) / scale
    flat = np.ravel(rel)
    bad = np.flatnonzero(flat <= ALGEBRAIC_DET_FLOOR)
    if bad.size:
        i = int(bad[0])
        where = None
        if points is not None:
            p = np.asarray(points, dtype=float)
            where = p.reshape(-1, p.shape[-1])[i].tolist()
        raise AlgebraicDegeneracyError(float(np.ravel(d)[i]), where)
    return d


def mttoK_forward(sigma, gamma, schouten, points=None):
    """tau = H_AB X^A X^B with H the inverse of L(sigma).

    X^A is the last basis tractor of the chart splitting, so tau is the
    (rho, rho) entry of the inverse matrix.  Returns a jet whose order is
    that of L(sigma).
    """
    h = splitting_L(sigma, gamma, schouten).matrix()
    _check_generic(h, points)
    n = gamma.shape[-1]
    return J.inv(h)[..., n, n]


def mttoK_inverse(tau, gamma):
    """sigma = (tau P^tau)^{-1}, P^tau the Schouten tensor of the scale where tau = +-1.

    ``tau`` must be a jet of order >= 2 (the scale change differentiates it
    once and the Schouten tensor once more).
    """
    tv = J.value_of(tau)
    if np.any(np.abs(tv) <= SIGMA_DET_FLOOR):
        raise ZeroTauError(f"tau vanishes (min |tau| = {np.abs(tv).min():.3e})")
    sign = np.sign(tv)
    u = -0.5 * J.log(tau * sign)
    gamma_tau, _ = apply_scale_change(gamma, u)
    p_tau = curvature_pack(gamma_tau, cotton=False).schouten
    m = tau[..., None, None] * p_tau
    dm = np.linalg.det(J.value_of(m))
    if np.any(np.abs(dm) <= SIGMA_DET_FLOOR):
        raise SingularSchoutenError(f"tau P^tau is singular (min |det| = {np.abs(dm).min():.3e})")
    return J.inv(m)


# -- fields and verdicts ---------------------------------------------------------------

@dataclass(frozen=True)
class SigmaField:
    """A weight -2 symmetric field with its provenance."""

    provenance: str
    exprs: tuple | None = None

    @classmethod
    def for_geometry(cls, geom):
        if geom.sigma is not None:
            return cls("user-supplied", geom.sigma)
        if geom.metric is not None:
            return cls("from-metric")
        raise ValueError(f"geometry {geom.name!r} has neither a metric nor a sigma field")

    def jets(self, geom, points, order):
        if self.provenance == "from-metric":
            return sigma_from_metric(metric_jets(geom, points, order), points)
        return eval_array(self.exprs, points, order)

    def det_at(self, geom, points):
        return np.linalg.det(self.jets(geom, points, 0).value)


@dataclass
class Verdict:
    solves_metrizability: bool
    is_normal: bool
    is_einstein: bool
    is_projectively_flat: bool
    D_res: float
    normality_res: float
    einstein_res: float
    flatness_res: float
    tol: float
    witness_threshold: float
    consistent: bool
    ambiguous: list

    def as_dict(self):
        return asdict(self)


def theorem_mt_verdict(geom, points, tol=DEFAULT_TOL, witness=WITNESS_THRESHOLD):
    """Decide solution, normality and Einstein status and test their equivalence.

    Works in the chart scale.  For a metric geometry sigma = sigma(g); for a
    connection geometry with a supplied sigma the metric is g^sigma.
    """
    order = 3
    field = SigmaField.for_geometry(geom)
    if geom.metric is not None:
        g = metric_jets(geom, points, order)
        gamma = specialize_connection(christoffels_from_metric(g, points))
    else:
        from .geometry import special_connection
        gamma = special_connection(geom, points, order - 1)
        g = None
    sigma = field.jets(geom, points, order)
    if g is None or field.provenance != "from-metric":
        g = metric_from_sigma(sigma)
    curv = curvature_pack(gamma)

    d_res, _ = metrizability_residual(sigma, gamma)
    n_res, _ = normality_residual(sigma, gamma, curv.schouten)
    e_res, _ = einstein_residual(g)
    f_res, _ = projective_flatness_residual(curv, geom.n)

    residuals = {"D_res": d_res, "normality_res": n_res, "einstein_res": e_res,
                 "flatness_res": f_res}
    ambiguous = sorted(k for k, r in residuals.items() if tol < r < witness)
    is_normal = n_res <= tol
    is_einstein = e_res <= tol
    return Verdict(
        solves_metrizability=d_res <= tol,
        is_normal=is_normal,
        is_einstein=is_einstein,
        is_projectively_flat=f_res <= tol,
        tol=tol,
        witness_threshold=witness,
        consistent=is_normal == is_einstein,
        ambiguous=ambiguous,
        **residuals,
    )


einstein_check = einstein_residual
projective_flatness_check = projective_flatness_residual
