"""Finite-type analysis of the metrizability equation.

The prolonged system is a linear connection d_a v + A_a v = 0 on the trivial
rank-N bundle over the chart.  Parallel sections are exactly the solutions,
so transport, curvature and holonomy bound the solution space from above and
reconstruct solutions from a kernel vector at a base point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import KernelVectorInvalidError, OrderTooHighError, PathExitsDomainError
from .exprdsl import jet as J
from .exprdsl.jet import einsum
from .geometry import curvature_pack, special_connection
from .metrizability import prolongation_matrix
from .tractor import TractorS2Value, s2_rank, trace_free

GAP_RATIO = 1e3
REL_FLOOR = 1e-8
ZERO_TOL = 1e-9
DEFAULT_ORDER_LIMIT = 6
MIN_STEPS = 16


# -- connection-matrix fields ------------------------------------------------------

class ProlongationField:
    """A_a of the prolonged system for a chart geometry, evaluable as jets."""

    def __init__(self, geom):
        self.geom = geom
        self.n = geom.n
        self.N = s2_rank(geom.n)
        self.domain = geom.domain

    def required_order(self, order):
        """Jet order of the defining data needed for A as jets of ``order``."""
        return order + (3 if self.geom.has_metric else 2)

    def gamma(self, points, order):
        return special_connection(self.geom, points, order)

    def matrices(self, points, order=0):
        gamma = self.gamma(points, order + 2)
        curv = curvature_pack(gamma)
        if order == 0:
            gamma, curv = J.value_of(gamma), curv.values()
        return prolongation_matrix(gamma, curv)


class ConstantField:
    """Constant A_a (shape (n, N, N)); used for oracles and the flat model."""

    def __init__(self, A, domain=None):
        self.A = np.asarray(A, dtype=float)
        self.n, self.N = self.A.shape[0], self.A.shape[1]
        self.domain = None if domain is None else np.asarray(domain, dtype=float)

    def required_order(self, order):
        return order

    def matrices(self, points, order=0):
        p = np.asarray(points, dtype=float)
        a = np.broadcast_to(self.A, p.shape[:-1] + self.A.shape)
        if order == 0:
            return np.array(a)
        return J.Jet.constant(np.array(a), self.n, order)


# -- transport ----------------------------------------------------------------------

@dataclass
class TransportProblem:
    """Transport from ``x0`` along the polyline x0 -> waypoints[0] -> ... ."""

    field: object
    x0: np.ndarray
    waypoints: np.ndarray
    steps: int = 32

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        self.waypoints = np.atleast_2d(np.asarray(self.waypoints, dtype=float))
        if self.steps < MIN_STEPS:
            raise ValueError(f"step count must be >= {MIN_STEPS}")

    def vertices(self):
        return np.vstack([self.x0[None, :], self.waypoints])


@dataclass
class TransportResult:
    matrix: np.ndarray
    error_estimate: float


def _check_inside(domain, pts):
    if domain is None:
        return
    p = np.asarray(pts, dtype=float)
    ok = np.all((p >= domain[:, 0] - 1e-12) & (p <= domain[:, 1] + 1e-12), axis=-1)
    if not np.all(ok):
        bad = p.reshape(-1, p.shape[-1])[int(np.flatnonzero(~np.ravel(ok))[0])]
        raise PathExitsDomainError(f"path leaves the domain box at {bad.tolist()}")


def _rk4_segments(field, starts, ends, mats, steps):
    """Batched RK4 for dM/dt = -A_{d}(s + t d) M on t in [0, 1], d = e - s."""
    d = ends - starts
    h = 1.0 / steps

    def a_dir(t):
        return -np.einsum("pa,paij->pij", d, field.matrices(starts + t * d, 0))

    m = mats
    a0 = a_dir(0.0)
    for k in range(steps):
        t = k * h
        # the midpoint serves k2 and k3; the endpoint is reused by the next step
        am, a1 = a_dir(t + h / 2), a_dir(t + h)
        k1 = a0 @ m
        k2 = am @ (m + (h / 2) * k1)
        k3 = am @ (m + (h / 2) * k2)
        k4 = a1 @ (m + h * k3)
        m = m + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        a0 = a1
    return m


def _transport_polylines(field, vertices, steps):
    """vertices: (P, k+1, n); returns (P, N, N)."""
    P = vertices.shape[0]
    m = np.broadcast_to(np.eye(field.N), (P, field.N, field.N)).copy()
    for s in range(vertices.shape[1] - 1):
        m = _rk4_segments(field, vertices[:, s], vertices[:, s + 1], m, steps)
    return m


def transport_polylines(field, vertices, steps=32, extrapolate=False):
    """Transport along a batch of polylines with a step-halving error estimate.

    Returns (matrices, per-path max-abs error estimate of the finer run).  The
    matrices are the finer RK4 run, or with ``extrapolate`` its Richardson
    combination (16 fine - coarse) / 15, which is accurate to higher order.
    """
    vertices = np.asarray(vertices, dtype=float)
    _check_inside(getattr(field, "domain", None), vertices)
    coarse = _transport_polylines(field, vertices, steps)
    fine = _transport_polylines(field, vertices, 2 * steps)
    err = np.abs(fine - coarse).reshape(len(fine), -1).max(axis=-1) / 15.0
    if extrapolate:
        fine = fine + (fine - coarse) / 15.0
    return fine, err


def transport(problem):
    """Parallel transport matrix M(1) along the problem's polyline."""
    m, err = transport_polylines(problem.field, problem.vertices()[None], problem.steps)
    return TransportResult(m[0], float(err[0]))


def transport_chords(field, x0, targets, steps=32, extrapolate=False):
    """Straight-chord transports x0 -> x for each target; (P, N, N), (P,)."""
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), targets.shape)
    return transport_polylines(field, np.stack([x0, targets], axis=1), steps, extrapolate)


# -- curvature constraints ----------------------------------------------------------

def curvature_from_matrices(A):
    """Omega_ab = d_a A_b - d_b A_a + [A_a, A_b] from A as jets (order drops by one)."""
    dA = A.grad()  # dA[..., b, i, j, a] = d_a (A_b)_ij
    d_ab = einsum("...bija->...abij", dA)
    prod = einsum("...aij,...bjk->...abik", A, A)
    return (d_ab - d_ab.swapaxes(-4, -3)) + (prod - prod.swapaxes(-4, -3))


def derive_constraint(C, A):
    """Constraints C v = 0 on parallel v imply (d_c C - C A_c) v = 0."""
    dC = einsum("...abijc->...cabij", C.grad())
    return dC - einsum("...abij,...cjk->...cabik", C, A)


def curvature_constraints(field, points, depth=0):
    """Per-level constraint matrices at ``points`` as plain arrays.

    Level 0 is Omega with shape (..., n, n, N, N); level k prepends k
    derivative axes.
    """
    A = field.matrices(points, depth + 1)
    C = curvature_from_matrices(A)
    levels = [J.value_of(C)]
    for _ in range(depth):
        C = derive_constraint(C, A)
        levels.append(J.value_of(C))
    return levels


def _constraint_rows(level, n):
    """Rows of a constraint level at one point, form pairs a < b only: (rows, N)."""
    N = level.shape[-1]
    iu = np.triu_indices(n, 1)
    sel = level[(Ellipsis,) + iu + (slice(None), slice(None))]
    return sel.reshape(-1, N)


# -- rank and obstruction report ----------------------------------------------------

@dataclass
class RankInfo:
    rank: int
    gap: float
    floor: float
    singular_values: np.ndarray
    indeterminate: bool


def numerical_rank(M, floor=None, zero_tol=ZERO_TOL, rel_floor=REL_FLOOR, gap_ratio=GAP_RATIO):
    """Rank with an absolute/relative floor and a singular-value gap check."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    s = np.linalg.svd(M, compute_uv=False) if M.size else np.zeros(0)
    smax = float(s[0]) if s.size else 0.0
    if floor is None:
        floor = max(zero_tol, rel_floor * smax)
    r = int(np.sum(s > floor))
    if r == 0 or r == len(s):
        gap = float("inf")
    else:
        gap = float(s[r - 1] / max(s[r], 1e-300))
    return RankInfo(r, gap, float(floor), s, bool(gap < gap_ratio))


@dataclass
class ObstructionReport:
    N: int
    sources: list
    rank: int
    dim_upper_bound: int
    gap: float
    floor: float
    indeterminate: bool
    singular_values: list
    depth: int
    samples: int
    loops: int
    max_transport_error: float
    base_point: list
    constraints: np.ndarray = field(default=None, repr=False)

    def as_dict(self):
        gap = self.gap if np.isfinite(self.gap) else None
        return {
            "N": self.N,
            "rank": self.rank,
            "dim_upper_bound": self.dim_upper_bound,
            "upper_bound_only": True,
            "singular_value_gap": gap,
            "gap_threshold": GAP_RATIO,
            "rank_floor": self.floor,
            "indeterminate": self.indeterminate,
            "singular_values": [float(x) for x in self.singular_values],
            "depth": self.depth,
            "samples": self.samples,
            "loops": self.loops,
            "max_transport_error": self.max_transport_error,
            "base_point": [float(x) for x in self.base_point],
            "sources": [{"source": s, "rank_added": r} for s, r in self.sources],
        }


def default_loops(domain, x0, scales=(0.25, 0.5, 0.9)):
    """Coordinate rectangles with a corner at x0, one per axis pair and scale."""
    domain = np.asarray(domain, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    n = len(x0)
    room_hi = domain[:, 1] - x0
    room_lo = x0 - domain[:, 0]
    step = np.where(room_hi >= room_lo, room_hi, -room_lo)
    loops = []
    for a in range(n):
        for b in range(a + 1, n):
            for s in scales:
                ea = np.zeros(n)
                eb = np.zeros(n)
                ea[a] = s * step[a]
                eb[b] = s * step[b]
                loops.append((f"rect({a},{b})x{s:g}",
                              np.array([x0 + ea, x0 + ea + eb, x0 + eb, x0])))
    return loops


def dimension_bound(field, points, x0=None, loops="default", depth=1, steps=32,
                    order_limit=DEFAULT_ORDER_LIMIT, loop_steps=64):
    """Upper bound on the dimension of the space of solutions on the chart.

    Constraint rows are pulled back to x0 along straight chords; holonomy
    rows are added for each loop.  The bound is N minus the accumulated rank.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if len(points) < 1:
        raise ValueError("need at least one sample point")
    need = field.required_order(depth + 1)
    if need > order_limit:
        raise OrderTooHighError(
            f"depth {depth} needs jets of order {need}, above the limit {order_limit}")
    if x0 is None:
        x0 = field.domain.mean(axis=1)
    x0 = np.asarray(x0, dtype=float)
    if loops == "default":
        loops = default_loops(field.domain, x0) if field.domain is not None else []
    loops = list(loops or [])
    n, N = field.n, field.N

    T, terr = transport_chords(field, x0, points, steps, extrapolate=True)
    levels = curvature_constraints(field, points, depth)
    blocks = []
    for i, x in enumerate(points):
        tag = "(" + ", ".join(f"{c:.6g}" for c in x) + ")"
        for k, lev in enumerate(levels):
            rows = _constraint_rows(lev[i], n) @ T[i]
            name = "curvature" if k == 0 else f"derived-curvature[{k}]"
            blocks.append((f"{name}@{tag}", rows))
    max_err = float(terr.max()) if terr.size else 0.0
    if loops:
        verts = np.stack([np.vstack([x0[None, :], v]) for _, v in loops])
        hol, herr = transport_polylines(field, verts, loop_steps, extrapolate=True)
        max_err = max(max_err, float(herr.max()))
        for (name, _), h in zip(loops, hol):
            blocks.append((f"holonomy@{name}", h - np.eye(N)))

    stacked = np.vstack([b for _, b in blocks]) if blocks else np.zeros((0, N))
    info = numerical_rank(stacked) if stacked.size else RankInfo(0, float("inf"), ZERO_TOL, np.zeros(0), False)
    sources = []
    acc = np.zeros((0, N))
    prev = 0
    for name, rows in blocks:
        acc = np.vstack([acc, rows])
        r = numerical_rank(acc, floor=info.floor).rank
        sources.append((name, r - prev))
        prev = r
    return ObstructionReport(
        N=N, sources=sources, rank=info.rank, dim_upper_bound=N - info.rank, gap=info.gap,
        floor=info.floor, indeterminate=info.indeterminate,
        singular_values=list(info.singular_values), depth=depth, samples=len(points),
        loops=len(loops), max_transport_error=max_err, base_point=list(x0),
        constraints=stacked)


def kernel_basis(report):
    """Orthonormal basis (columns) of the numerical kernel at the base point."""
    C = report.constraints
    if C is None or C.size == 0:
        return np.eye(report.N)
    _, _, vt = np.linalg.svd(C)
    return vt[report.rank:].T


# -- reconstruction -----------------------------------------------------------------

@dataclass
class Reconstruction:
    points: np.ndarray
    sigma: np.ndarray
    values: np.ndarray
    D_residual: float
    path_discrepancy: float
    path_dependent: bool
    constraint_residual: float


def reconstruct_solution(field, x0, v0, targets, constraints=None, tol=1e-6, steps=32,
                         fd_step=1e-3, path_tol=1e-6):
    """Transport v0 from x0 to each target and read off sigma.

    ``constraints`` (rows, N) is the accumulated constraint matrix; when given,
    v0 must lie in its numerical kernel.  The D-residual is evaluated from
    central differences of transported values.
    """
    v0 = np.asarray(v0, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    n = field.n
    cres = 0.0
    if constraints is not None and np.size(constraints):
        unit = v0 / max(np.linalg.norm(v0), 1e-300)
        cres = float(np.abs(constraints @ unit).max())
        if cres > tol:
            raise KernelVectorInvalidError(cres, tol)

    T, _ = transport_chords(field, x0, targets, steps)
    vals = T @ v0
    sigma = TractorS2Value.unflatten(vals, n).sigma

    # central differences on a stencil around each target, clipped to the domain
    h = fd_step
    offsets = np.concatenate([np.eye(n) * h, -np.eye(n) * h])
    stencil = (targets[:, None, :] + offsets[None]).reshape(-1, n)
    if field.domain is not None:
        stencil = np.clip(stencil, field.domain[:, 0], field.domain[:, 1])
    Ts, _ = transport_chords(field, x0, stencil, steps)
    sv = TractorS2Value.unflatten((Ts @ v0).reshape(len(targets), 2 * n, -1), n).sigma
    st = stencil.reshape(len(targets), 2 * n, n)
    width = np.einsum("pcc->pc", st[:, :n] - st[:, n:])
    dsig = (sv[:, :n] - sv[:, n:]) / width[:, :, None, None]  # [p, a, b, c] = d_a sigma^{bc}
    gamma = J.value_of(field.gamma(targets, 0)) if hasattr(field, "gamma") else np.zeros((len(targets), n, n, n))
    nab = (dsig + np.einsum("pbai,pic->pabc", gamma, sigma)
           + np.einsum("pcai,pbi->pabc", gamma, sigma))
    d_res = float(np.abs(trace_free(nab)).max())

    # second path: axis-aligned elbow through (x_0, x0_1, ..., x0_{n-1})
    elbow = np.broadcast_to(x0, targets.shape).copy()
    elbow[:, 0] = targets[:, 0]
    verts = np.stack([np.broadcast_to(x0, targets.shape), elbow, targets], axis=1)
    T2, _ = transport_polylines(field, verts, steps)
    disc = float(np.abs(T2 @ v0 - vals).max())
    return Reconstruction(targets, sigma, vals, d_res, disc, disc > path_tol, cres)
