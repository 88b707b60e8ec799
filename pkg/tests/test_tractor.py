"""Tractor connections, the Kostant codifferential, the splitting operator and BGG projection."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import null_space

from projtractor.errors import NotInKernelError
from projtractor.exprdsl import Jet, basis_size, eval_array, parse
from projtractor.exprdsl import jet as J
from projtractor.geometry import ChartGeometry, curvature_pack, nabla, special_connection
from projtractor.tractor import (
    CotractorValue,
    S2Form1,
    S2Form2,
    TractorS2Value,
    TractorValue,
    bgg_project,
    cotractor_derivative,
    kostant_codiff_1,
    kostant_codiff_2,
    pairing,
    s2_derivative,
    s2_rank,
    splitting_L,
    trace_free,
    tractor_derivative,
    x_action,
)

NAMES = ["x", "y", "z", "w"]


def random_connection(seed, n):
    rng = np.random.default_rng(seed)
    names = NAMES[:n]
    mons = ["1"] + names + [f"{a}*{b}" for i, a in enumerate(names) for b in names[i:]]
    gam = np.empty((n, n, n), dtype=object)
    for c in range(n):
        for a in range(n):
            for b in range(a, n):
                co = rng.uniform(-0.4, 0.4, len(mons))
                gam[c, a, b] = gam[c, b, a] = parse(
                    " + ".join(f"({v:.6f})*{m}" for v, m in zip(co, mons)), names)
    return ChartGeometry(f"random{seed}", tuple(names), np.array([[-1.0, 1.0]] * n),
                         connection=tuple(tuple(tuple(r) for r in m) for m in gam))


def random_sigma(seed, n):
    """Random symmetric polynomial sigma field, as expression array."""
    rng = np.random.default_rng(seed + 10_000)
    names = NAMES[:n]
    mons = ["1"] + names + [f"{a}*{b}" for i, a in enumerate(names) for b in names[i:]]
    s = np.empty((n, n), dtype=object)
    for a in range(n):
        for b in range(a, n):
            co = rng.normal(size=len(mons))
            if a == b:
                co[0] += 3.0
            s[a, b] = s[b, a] = parse(" + ".join(f"({v:.6f})*{m}" for v, m in zip(co, mons)), names)
    return s


def random_jet(rng, shape, n, order):
    return Jet(rng.normal(size=shape + (basis_size(n, order),)), n, order)


def random_s2_form1(rng, n):
    sig = rng.normal(size=(n, n, n))
    return S2Form1(sig + sig.swapaxes(1, 2), rng.normal(size=(n, n)), rng.normal(size=n))


def random_s2_form2(rng, n):
    s = rng.normal(size=(n, n, n, n))
    s = (s - s.swapaxes(0, 1))
    s = s + s.swapaxes(2, 3)
    m = rng.normal(size=(n, n, n))
    r = rng.normal(size=(n, n))
    return S2Form2(s, m - m.swapaxes(0, 1), r - r.T)


class TestFlatten:
    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_roundtrip(self, n):
        rng = np.random.default_rng(n)
        v = rng.normal(size=s2_rank(n))
        back = TractorS2Value.unflatten(v, n)
        np.testing.assert_array_equal(back.flatten(), v)
        np.testing.assert_array_equal(back.sigma, back.sigma.T)

    def test_matrix_layout(self):
        v = TractorS2Value(np.array([[1.0, 2.0], [2.0, 3.0]]), np.array([4.0, 5.0]), np.array(6.0))
        np.testing.assert_array_equal(v.matrix(), [[1, 2, 4], [2, 3, 5], [4, 5, 6]])
        np.testing.assert_array_equal(v.flatten(), [1, 2, 3, 4, 5, 6])

    def test_bad_length(self):
        with pytest.raises(ValueError):
            TractorS2Value.unflatten(np.zeros(7), 2)


class TestCodifferential:
    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_square_is_zero_on_random_two_forms(self, n):
        rng = np.random.default_rng(100 + n)
        for _ in range(100):
            out = kostant_codiff_1(kostant_codiff_2(random_s2_form2(rng, n)))
            assert out.sup_norm() <= 1e-13

    def test_codiff_is_sum_of_x_actions(self):
        rng = np.random.default_rng(1)
        n = 3
        phi = random_s2_form1(rng, n)
        total = None
        for a in range(n):
            e = np.eye(n)[a]
            term = x_action(e, TractorS2Value(phi.sigma[a], phi.mu[a], phi.rho[a]))
            total = term if total is None else TractorS2Value(
                total.sigma + term.sigma, total.mu + term.mu, total.rho + term.rho)
        out = kostant_codiff_1(phi)
        np.testing.assert_allclose(out.mu, total.mu, atol=1e-14)
        np.testing.assert_allclose(out.rho, total.rho, atol=1e-14)

    @staticmethod
    def _maps(n):
        N = s2_rank(n)
        d1 = np.zeros((N, n * N))
        for a in range(n):
            for j in range(N):
                v = TractorS2Value.unflatten(np.eye(N)[j], n)
                phi = S2Form1(*(np.zeros((n,) + np.shape(x)) for x in (v.sigma, v.mu, v.rho)))
                phi.sigma[a], phi.mu[a], phi.rho[a] = v.sigma, v.mu, v.rho
                d1[:, a * N + j] = kostant_codiff_1(phi).flatten()
        pairs = [(a, b) for a in range(n) for b in range(a + 1, n)]
        d2 = np.zeros((n * N, len(pairs) * N))
        for k, (a, b) in enumerate(pairs):
            for j in range(N):
                v = TractorS2Value.unflatten(np.eye(N)[j], n)
                psi = S2Form2(np.zeros((n, n, n, n)), np.zeros((n, n, n)), np.zeros((n, n)))
                for s, (p, q) in ((1, (a, b)), (-1, (b, a))):
                    psi.sigma[p, q], psi.mu[p, q], psi.rho[p, q] = s * v.sigma, s * v.mu, s * v.rho
                d2[:, k * N + j] = kostant_codiff_2(psi).flatten().reshape(-1)
        return d1, d2

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_ranks_and_homology(self, n):
        N = s2_rank(n)
        d1, d2 = self._maps(n)
        np.testing.assert_allclose(d1 @ d2, 0.0, atol=1e-13)
        r1 = np.linalg.matrix_rank(d1)
        r2 = np.linalg.matrix_rank(d2)
        assert r1 == n + 1
        assert r2 == n * n + n - 1
        assert (n * N - r1) - r2 == n * n * (n + 1) // 2 - n

    @pytest.mark.parametrize("n", [2, 3])
    def test_slot_characterization(self, n):
        """ker: top and middle slots trace-free; im: top slot zero, middle trace-free."""
        N = s2_rank(n)
        d1, d2 = self._maps(n)
        ker = null_space(d1)
        img = d2 @ np.random.default_rng(0).normal(size=(d2.shape[1], 20))
        for cols in (ker.T, img.T):
            for col in cols:
                form = col.reshape(n, N)
                v = TractorS2Value.unflatten(form, n)
                assert abs(np.trace(v.mu)) < 1e-12
                assert np.abs(np.einsum("iib->b", v.sigma)).max() < 1e-12
        for col in img.T:
            assert np.abs(TractorS2Value.unflatten(col.reshape(n, N), n).sigma).max() < 1e-12
        # every kernel element with zero trace-free top slot lies in the image
        top_tf = np.array([trace_free(TractorS2Value.unflatten(c.reshape(n, N), n).sigma).ravel()
                           for c in ker.T]).T
        sub = ker @ null_space(top_tf)
        assert sub.shape[1] == np.linalg.matrix_rank(d2)
        assert np.linalg.matrix_rank(np.hstack([sub, d2])) == sub.shape[1]


class TestConnections:
    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 500), st.sampled_from([2, 3]))
    def test_pairing_leibniz(self, seed, n):
        geom = random_connection(seed, n)
        pts = geom.sample_points(3, seed)
        gamma = special_connection(geom, pts, 2)
        P = curvature_pack(gamma, cotton=False).schouten
        rng = np.random.default_rng(seed)
        co = CotractorValue(random_jet(rng, (3,), n, 2), random_jet(rng, (3, n), n, 2))
        tr = TractorValue(random_jet(rng, (3, n), n, 2), random_jet(rng, (3,), n, 2))
        lhs = pairing(co, tr).grad()
        dco = cotractor_derivative(co, gamma, P)
        dtr = tractor_derivative(tr, gamma, P)
        rhs = (dco.sigma * tr.rho.truncate(1)[..., None]
               + J.einsum("...ab,...b->...a", dco.mu, tr.nu)
               + co.sigma.truncate(1)[..., None] * dtr.rho
               + J.einsum("...b,...ab->...a", co.mu, dtr.nu))
        np.testing.assert_allclose(J.value_of(lhs), J.value_of(rhs), atol=1e-11)

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 500), st.sampled_from([2, 3]))
    def test_s2_connection_is_symmetric_square(self, seed, n):
        geom = random_connection(seed, n)
        pts = geom.sample_points(3, seed)
        gamma = special_connection(geom, pts, 2)
        P = curvature_pack(gamma, cotton=False).schouten
        rng = np.random.default_rng(seed)
        t1 = TractorValue(random_jet(rng, (3, n), n, 2), random_jet(rng, (3,), n, 2))
        t2 = TractorValue(random_jet(rng, (3, n), n, 2), random_jet(rng, (3,), n, 2))

        def sym(a, b):
            s = J.einsum("...b,...c->...bc", a.nu, b.nu)
            return TractorS2Value(
                (s + s.swapaxes(-1, -2)) * 0.5,
                (a.nu * b.rho[..., None] + b.nu * a.rho[..., None]) * 0.5,
                a.rho * b.rho)

        lhs = s2_derivative(sym(t1, t2), gamma, P)
        d1 = tractor_derivative(t1, gamma, P)
        d2 = tractor_derivative(t2, gamma, P)
        n1 = TractorValue(t1.nu.truncate(1), t1.rho.truncate(1))
        n2 = TractorValue(t2.nu.truncate(1), t2.rho.truncate(1))
        for a in range(n):
            da = TractorValue(d1.nu[..., a, :], d1.rho[..., a])
            db = TractorValue(d2.nu[..., a, :], d2.rho[..., a])
            x, y = sym(da, n2), sym(n1, db)
            np.testing.assert_allclose(J.value_of(lhs.sigma[..., a, :, :]),
                                       J.value_of(x.sigma + y.sigma), atol=1e-11)
            np.testing.assert_allclose(J.value_of(lhs.mu[..., a, :]),
                                       J.value_of(x.mu + y.mu), atol=1e-11)
            np.testing.assert_allclose(J.value_of(lhs.rho[..., a]),
                                       J.value_of(x.rho + y.rho), atol=1e-11)


SPLIT_CASES = [(seed, 2 + seed % 3) for seed in range(50)]


class TestSplittingOperator:
    @pytest.mark.parametrize("seed,n", SPLIT_CASES)
    def test_splitting_properties(self, seed, n):
        geom = random_connection(seed, n)
        pts = geom.sample_points(3, seed)
        gamma = special_connection(geom, pts, 2)
        P = curvature_pack(gamma, cotton=False).schouten
        sigma = eval_array(random_sigma(seed, n), pts, 3)
        L = splitting_L(sigma, gamma, P)
        assert L.sigma is sigma  # projection onto the top slot is the identity
        form = s2_derivative(L, gamma, P)
        assert kostant_codiff_1(form).sup_norm() <= 1e-9
        proj = bgg_project(form.values())
        direct = trace_free(nabla(sigma, gamma, "uu"))
        assert np.abs(J.value_of(proj) - J.value_of(direct)).max() <= 1e-9

    def test_sphere_origin_lift(self, sphere):
        from projtractor.geometry import christoffels_from_metric, metric_jets, specialize_connection
        from projtractor.metrizability import sigma_from_metric
        g = metric_jets(sphere, np.zeros(2), 4)
        gamma = specialize_connection(christoffels_from_metric(g))
        P = curvature_pack(gamma, cotton=False).schouten
        L = splitting_L(sigma_from_metric(g), gamma, P)
        np.testing.assert_allclose(J.value_of(L.sigma), 2 ** (-2 / 3) * np.eye(2), atol=1e-14)
        np.testing.assert_allclose(J.value_of(L.mu), 0.0, atol=1e-14)
        assert J.value_of(L.rho) == pytest.approx(2 ** (4 / 3))

    def test_bgg_project_rejects_non_closed_forms(self):
        rng = np.random.default_rng(3)
        with pytest.raises(NotInKernelError):
            bgg_project(random_s2_form1(rng, 2))
