"""The eleven acceptance criteria, each at its stated tolerance.

Every criterion prints one PASS/FAIL line (also repeated in the pytest
terminal summary).  Run standalone with ``python tests/test_acceptance.py``.
"""

import numpy as np
import pytest

from projtractor import metrizability as M
from projtractor import solver as S
from projtractor.exprdsl import eval_array, eval_jet, parse
from projtractor.exprdsl import jet as J
from projtractor.geometry import (
    ChartGeometry,
    apply_scale_change,
    christoffels_from_metric,
    curvature_pack,
    metric_jets,
    nabla,
    scalar_curvature,
    special_connection,
    specialize_connection,
)
from projtractor.tractor import (
    bgg_project,
    kostant_codiff_1,
    kostant_codiff_2,
    s2_derivative,
    splitting_L,
    trace_free,
)

from conftest import corpus
from test_tractor import TestCodifferential, random_connection, random_s2_form2, random_sigma

RESULTS = {}


def record(k, ok, detail):
    line = f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[k] = line
    print(line)
    assert ok, line


def pipeline(geom, points, order=4):
    g = metric_jets(geom, points, order)
    gamma = specialize_connection(christoffels_from_metric(g, points))
    curv = curvature_pack(gamma)
    return g, gamma, curv, M.sigma_from_metric(g, points)


def random_metric_geometry(seed, n):
    """Polynomial metric near the identity on a small box."""
    rng = np.random.default_rng(seed)
    names = ["x", "y", "z", "w"][:n]
    mons = names + [f"{a}*{b}" for i, a in enumerate(names) for b in names[i:]]
    m = np.empty((n, n), dtype=object)
    for a in range(n):
        for b in range(a, n):
            co = rng.uniform(-0.3, 0.3, len(mons))
            base = "1" if a == b else "0"
            m[a, b] = m[b, a] = parse(base + " + " + " + ".join(
                f"({v:.6f})*{t}" for v, t in zip(co, mons)), names)
    return ChartGeometry(f"rm{seed}", tuple(names), np.array([[-0.4, 0.4]] * n),
                         metric=tuple(tuple(r) for r in m))


def test_criterion_01_einstein_metrics_are_normal():
    worst = {}
    ok = True
    for name in ("sphere", "hyperbolic"):
        geom = corpus(name)
        pts = geom.sample_points(25)
        g, gamma, curv, sigma = pipeline(geom, pts)
        d = M.metrizability_residual(sigma, gamma)[0]
        nr = M.normality_residual(sigma, gamma, curv.schouten)[0]
        er = M.einstein_check(g)[0]
        worst[name] = (d, nr, er)
        ok &= d <= 1e-9 and nr <= 1e-8 and er <= 1e-9
    detail = "; ".join(f"{k}: D {v[0]:.1e}, normality {v[1]:.1e}, Einstein {v[2]:.1e}"
                       for k, v in worst.items())
    record(1, ok, detail)


def test_criterion_02_non_einstein_witness():
    geom = corpus("noneinstein3d")
    v = M.theorem_mt_verdict(geom, geom.sample_points(25))
    ok = (v.D_res <= 1e-9 and v.normality_res >= 1e-3 and v.einstein_res >= 1e-3
          and v.consistent and not v.is_normal and not v.is_einstein)
    record(2, ok, f"D {v.D_res:.1e}, normality {v.normality_res:.3f}, Einstein {v.einstein_res:.3f}, "
                  f"consistent {v.consistent}")


def test_criterion_03_metric_dictionary_roundtrip():
    worst = 0.0
    count = 0
    # odd n: signatures with det g > 0 (see the signature note in the docs)
    for n, negs in ((2, 0), (2, 1), (3, 0), (3, 2), (4, 0), (4, 1), (4, 2)):
        rng = np.random.default_rng(1000 + 10 * n + negs)
        for _ in range(100):
            q, _ = np.linalg.qr(rng.normal(size=(n, n)))
            ev = rng.uniform(0.3, 3.0, n)
            ev[:negs] *= -1
            g = q @ np.diag(ev) @ q.T
            worst = max(worst, np.abs(M.metric_from_sigma(M.sigma_from_metric(g)) - g).max())
            count += 1
    record(3, worst <= 1e-12, f"{count} metrics, max round-trip error {worst:.1e}")


def test_criterion_04_splitting_operator():
    exact = True
    codiff = proj = 0.0
    for seed in range(50):
        n = 2 + seed % 3
        geom = random_connection(500 + seed, n)
        pts = geom.sample_points(3, seed)
        gamma = special_connection(geom, pts, 2)
        P = curvature_pack(gamma, cotton=False).schouten
        sigma = eval_array(random_sigma(500 + seed, n), pts, 3)
        L = splitting_L(sigma, gamma, P)
        exact &= np.array_equal(J.value_of(L.sigma), J.value_of(sigma))
        form = s2_derivative(L, gamma, P)
        codiff = max(codiff, kostant_codiff_1(form).sup_norm())
        diff = J.value_of(bgg_project(form.values())) - J.value_of(trace_free(nabla(sigma, gamma, "uu")))
        proj = max(proj, np.abs(diff).max())
    record(4, exact and codiff <= 1e-9 and proj <= 1e-9,
           f"50 fields: projection exact {exact}, d*(nabla L) {codiff:.1e}, BGG vs tf {proj:.1e}")


def test_criterion_05_codifferential():
    worst = 0.0
    for n in (2, 3, 4):
        rng = np.random.default_rng(7 + n)
        for _ in range(100):
            worst = max(worst, kostant_codiff_1(kostant_codiff_2(random_s2_form2(rng, n))).sup_norm())
    ranks_ok = True
    notes = []
    for n in (2, 3, 4):
        N = (n + 1) * (n + 2) // 2
        d1, d2 = TestCodifferential._maps(n)
        r1, r2 = np.linalg.matrix_rank(d1), np.linalg.matrix_rank(d2)
        h1 = n * N - r1 - r2
        ranks_ok &= r1 == n + 1 and r2 == n * n + n - 1 and h1 == n * n * (n + 1) // 2 - n
        notes.append(f"n={n}: H1 {h1}")
    record(5, worst <= 1e-13 and ranks_ok, f"d*d* {worst:.1e} on 300 forms; " + ", ".join(notes))


def test_criterion_06_contraction_identity():
    worst = 0.0
    for seed in range(20):
        n = 3 + seed % 2
        geom = random_metric_geometry(seed, n)
        pts = geom.sample_points(5, seed)
        g = metric_jets(geom, pts, 2)
        pack = curvature_pack(christoffels_from_metric(g), cotton=False)
        gi = J.inv(g)
        scal = J.einsum("...ab,...ab->...", gi, pack.ricci)
        phi = pack.ricci - g * (scal / n)[..., None, None]
        lhs = J.einsum("...acbd,...cd->...ab", pack.weyl, gi)
        rhs = J.einsum("...ac,...bc->...ab", phi, gi) * (n / (n - 1))
        worst = max(worst, np.abs(J.value_of(lhs - rhs)).max())
    record(6, worst <= 1e-9, f"20 metrics (n = 3, 4), max deviation {worst:.1e}")


def test_criterion_07_prolonged_system():
    res = {}
    for name in ("sphere", "hyperbolic", "noneinstein3d"):
        geom = corpus(name)
        _, gamma, curv, sigma = pipeline(geom, geom.sample_points(25))
        res[name] = M.psys_residual(splitting_L(sigma, gamma, curv.schouten), gamma, curv)[0]
    record(7, max(res.values()) <= 1e-8, ", ".join(f"{k} {v:.1e}" for k, v in res.items()))


def test_criterion_08_dimension_bounds():
    expected = {"flat2": 6, "flat3": 10, "sphere": 6, "perturbed": 0}
    got = {}
    ok = True
    for name, dim in expected.items():
        geom = corpus(name)
        rep = S.dimension_bound(S.ProlongationField(geom), geom.sample_points())
        got[name] = (rep.dim_upper_bound, rep.gap)
        ok &= rep.dim_upper_bound == dim and rep.gap >= 1e3 and not rep.indeterminate
    record(8, ok, ", ".join(f"{k} {d} (gap {'inf' if np.isinf(gp) else f'{gp:.1e}'})"
                            for k, (d, gp) in got.items()))


def test_criterion_09_beltrami():
    tol = M.DEFAULT_TOL
    rows = []
    ok = True
    for name, positive in (("sphere", True), ("hyperbolic", True), ("flat2", True), ("disk", True),
                           ("wavy2d", False)):
        geom = corpus(name)
        pts = geom.sample_points()
        g = metric_jets(geom, pts, 3)
        curv = curvature_pack(specialize_connection(christoffels_from_metric(g)))
        fr = M.projective_flatness_check(curv, 2)[0]
        er = M.einstein_check(g)[0]
        agree = (fr <= tol) == (er <= tol) == positive
        ok &= agree
        rows.append(f"{name} {'=' if agree else '!'}")
    record(9, ok, "flatness <=> constant curvature: " + ", ".join(rows))


def test_criterion_10_mttoK():
    notes = []
    ok = True
    for name in ("sphere", "hyperbolic"):
        geom = corpus(name)
        pts = geom.sample_points()
        _, gamma, curv, sigma = pipeline(geom, pts)
        tau = M.mttoK_forward(sigma, gamma, curv.schouten, pts)
        rt = np.abs(J.value_of(M.mttoK_inverse(tau, gamma)) - J.value_of(sigma)).max()
        dl = np.ptp(M.det_L(sigma, gamma, curv.schouten))
        ok &= rt <= 1e-6 and dl <= 1e-8
        notes.append(f"{name} roundtrip {rt:.1e}, det L spread {dl:.1e}")
    flat = corpus("flat2")
    pts = flat.sample_points()
    _, gamma, curv, sigma = pipeline(flat, pts)
    try:
        M.mttoK_forward(sigma, gamma, curv.schouten, pts)
        raised = False
    except M.AlgebraicDegeneracyError:
        raised = True
    ok &= raised
    notes.append(f"flat degenerate {raised}")
    geom = corpus("noneinstein3d")
    g, gamma, curv, sigma = pipeline(geom, geom.sample_points())
    ratio = M.det_L(sigma, gamma, curv.schouten) / J.value_of(scalar_curvature(g))
    spread = np.ptp(ratio) / abs(ratio.mean())
    ok &= spread <= 1e-6
    notes.append(f"witness det L / Scal = {ratio.mean():.6f} (spread {spread:.1e})")
    record(10, ok, "; ".join(notes))


def test_criterion_11_scale_invariance():
    drift = 0.0
    ok = True
    count = 0
    for name in ("sphere", "noneinstein3d"):
        geom = corpus(name)
        names = list(geom.variables)
        pts = geom.sample_points(10)
        _, gamma, curv, sigma = pipeline(geom, pts)
        base = (M.metrizability_residual(sigma, gamma)[0] <= M.DEFAULT_TOL,
                M.normality_residual(sigma, gamma, curv.schouten)[0] <= M.DEFAULT_TOL,
                M.projective_flatness_check(curv, geom.n)[0] <= M.DEFAULT_TOL)
        g0 = J.value_of(M.metric_from_sigma(sigma))
        for k in range(10):
            c = np.random.default_rng(100 * k + len(name)).uniform(-0.6, 0.6, 4)
            u_expr = parse(f"{c[0]}*{names[0]} + {c[1]}*{names[1]}^2 + {c[2]}*sin({names[-1]}) "
                           f"+ {c[3]}*{names[0]}*{names[1]}", names)
            u = eval_jet(u_expr, pts, 4)
            new_gamma, (new_sigma,) = apply_scale_change(gamma, u, [(sigma, -2)])
            new_curv = curvature_pack(new_gamma)
            status = (M.metrizability_residual(new_sigma, new_gamma)[0] <= M.DEFAULT_TOL,
                      M.normality_residual(new_sigma, new_gamma, new_curv.schouten)[0] <= M.DEFAULT_TOL,
                      M.projective_flatness_check(new_curv, geom.n)[0] <= M.DEFAULT_TOL)
            g1 = J.value_of(M.metric_from_sigma(new_sigma, log_scale=u))
            drift = max(drift, np.abs(g1 - g0).max())
            ok &= status == base
            count += 1
    record(11, ok and drift <= 1e-8, f"{count} scale changes, statuses unchanged {ok}, g drift {drift:.1e}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
