import numpy as np
import pytest
import sympy as sp

from lorentz_finsler import core, models
from lorentz_finsler.core import ModelSpec
from lorentz_finsler.errors import DomainError, InsufficientSamples, SignatureError

from oracles import fd_hessian, levi_civita_oracle


@pytest.fixture(scope="module")
def warped_oracle():
    return levi_civita_oracle(lambda xs: sp.diag(-1, sp.exp(2 * xs[0])), 2)


def rand_pairs(model, rng, count):
    out = []
    while len(out) < count:
        x = rng.uniform(-1, 1, model.n)
        for v in core.sample_future_timelike(model, x, rng, 1):
            out.append((x, v))
    return out


def test_minkowski_metric_and_causal_classes():
    m = models.minkowski2()
    mt = core.fundamental_tensor(m, [0.3, -0.2], [1.0, 0.4])
    assert np.array_equal(mt.g, np.diag([-1.0, 1.0]))
    assert mt.det_g == pytest.approx(-1.0)
    c = core.classify_causal(m, [0, 0], [1, 0])
    assert (c.cls, c.time_orientation, c.F) == ("timelike", "future", 1.0)
    c = core.classify_causal(m, [0, 0], [1, 1])
    assert (c.cls, c.time_orientation) == ("lightlike", "future")
    c = core.classify_causal(m, [0, 0], [0, 1])
    assert (c.cls, c.time_orientation, c.F) == ("spacelike", "none", None)
    assert core.classify_causal(m, [0, 0], [-2, 1]).time_orientation == "past"
    assert core.classify_causal(m, [0, 0], [0, 0]).cls == "zero"


def test_lightlike_band_scales_with_v():
    m = models.minkowski2()
    big = 1e4
    assert core.classify_causal(m, [0, 0], [big, big * (1 + 1e-18)]).cls == "lightlike"
    assert core.classify_causal(m, [0, 0], [1.0, 1.0 - 1e-6]).cls == "timelike"


def test_warped_metric_at_origin():
    mt = core.fundamental_tensor(models.warped(), [0.0, 0.5], [1.0, 0.3])
    assert np.allclose(mt.g, np.diag([-1.0, 1.0]), atol=0)


def test_randers_metric_matches_fd_hessian():
    m = models.randers()
    mt = core.fundamental_tensor(m, [0, 0], [1.0, 0.1])
    fd = fd_hessian(lambda v: core.lagrangian(m, [0, 0], v), [1.0, 0.1], h=1e-3)
    assert np.allclose(mt.g, fd, rtol=1e-6, atol=1e-9)


def test_signature_and_domain_errors():
    bad = ModelSpec.from_strings(2, "(v1^2 + v2^2)/2", name="riemannian")
    with pytest.raises(SignatureError):
        core.fundamental_tensor(bad, [0, 0], [1, 0])
    with pytest.raises(DomainError):
        core.fundamental_tensor(models.randers(), [0, 0], [0.5, 1.0])


def test_metric_invariants_on_zoo():
    rng = np.random.default_rng(0)
    for model in (models.minkowski2(), models.warped(), models.randers(), models.finsler_perturbed(), models.product()):
        for x, v in rand_pairs(model, rng, 40):
            mt = core.fundamental_tensor(model, x, v)
            assert np.allclose(mt.g, mt.g.T, atol=0)
            assert np.allclose(mt.g @ mt.g_inv, np.eye(2), atol=1e-10)
            L = core.lagrangian(model, x, v)
            assert v @ mt.g @ v == pytest.approx(2 * L, rel=1e-10)
            mt2 = core.fundamental_tensor(model, x, 2.7 * v)
            assert np.allclose(mt2.g, mt.g, atol=1e-10 * np.abs(mt.g).max())


def test_connection_identities_on_zoo():
    rng = np.random.default_rng(1)
    for model in (models.warped(), models.randers(), models.finsler_perturbed(), models.product(), models.minkowski4()):
        for x, v in rand_pairs(model, rng, 25):
            c = core.spray_and_connections(model, x, v)
            assert np.allclose(c.gamma, c.gamma.transpose(0, 2, 1), atol=1e-12)
            assert np.allclose(c.chern, c.chern.transpose(0, 2, 1), atol=1e-12)
            assert np.allclose(np.einsum("ijk,j,k->i", c.gamma, v, v), c.spray, atol=1e-10 * (1 + np.abs(c.spray).max()))
            j = core.jet(model, x, v, 3)
            gi = np.linalg.inv(j.Lvv)
            alt = np.einsum("ijk,k->ij", c.gamma, v) - 0.5 * np.einsum("ik,klj,l->ij", gi, j.Lvvv, c.spray)
            assert np.allclose(c.nconn, alt, atol=1e-9)
            # N = 1/2 dG/dv by central differences of the spray
            h = 1e-5
            for a in range(model.n):
                e = np.zeros(model.n)
                e[a] = h
                dG = (core.spray(model, x, v + e) - core.spray(model, x, v - e)) / (2 * h)
                assert np.allclose(c.nconn[:, a], 0.5 * dG, atol=1e-7 * (1 + np.abs(dG).max()))
            # Gamma^i_jk(v) v^j = N^i_k
            assert np.allclose(np.einsum("ijk,j->ik", c.chern, v), c.nconn, atol=1e-10)


def test_flat_models_have_vanishing_connection():
    rng = np.random.default_rng(2)
    for model in (models.minkowski2(), models.randers()):
        for x, v in rand_pairs(model, rng, 20):
            c = core.spray_and_connections(model, x, v)
            for arr in (c.gamma, c.spray, c.nconn, c.chern):
                assert np.abs(arr).max() <= 1e-12
            assert np.abs(core.curvature_and_ricci(model, x, v).R).max() <= 1e-12


def test_warped_chern_matches_levi_civita(warped_oracle):
    christoffel, _, _ = warped_oracle
    rng = np.random.default_rng(3)
    m = models.warped()
    for x, v in rand_pairs(m, rng, 50):
        c = core.spray_and_connections(m, x, v)
        assert np.allclose(c.chern, christoffel(x), atol=1e-9 * np.exp(2 * abs(x[0])))
        assert np.allclose(c.chern, c.gamma, atol=1e-12 * np.exp(2 * abs(x[0])))
    c = core.spray_and_connections(m, [0.2, 0.0], [1.0, 0.1])
    assert c.chern[0, 1, 1] == pytest.approx(np.exp(0.4), rel=1e-12)
    assert c.chern[1, 0, 1] == pytest.approx(1.0, rel=1e-12)


def test_ricci_matches_classical_oracle(warped_oracle):
    _, ricci_form, jacobi = warped_oracle
    rng = np.random.default_rng(4)
    m = models.warped()
    curv = core.curvature_and_ricci(m, [0, 0], [1, 0])
    assert curv.ricci == pytest.approx(ricci_form([0, 0], [1, 0]), abs=1e-7)
    for x, v in rand_pairs(m, rng, 30):
        curv = core.curvature_and_ricci(m, x, v)
        assert curv.ricci == pytest.approx(ricci_form(x, v), rel=1e-7, abs=1e-9)
        assert np.allclose(curv.R, jacobi(x, v), rtol=1e-7, atol=1e-9)
        assert curv.ricci == pytest.approx(np.trace(curv.R), abs=1e-12 * (1 + abs(curv.ricci)))


def test_product_ricci_matches_classical_oracle():
    _, ricci_form, _ = levi_civita_oracle(lambda xs: sp.diag(-1, 1 + sp.sin(xs[1]) ** 2 / 2), 2)
    m = models.product()
    rng = np.random.default_rng(5)
    for x, v in rand_pairs(m, rng, 10):
        assert core.ricci(m, x, v) == pytest.approx(ricci_form(x, v), abs=1e-9)


def test_ricci_homogeneity():
    rng = np.random.default_rng(6)
    for model in (models.warped(), models.finsler_perturbed()):
        for x, v in rand_pairs(model, rng, 50):
            r1, r2 = core.ricci(model, x, v), core.ricci(model, x, 2 * v)
            assert r2 == pytest.approx(4 * r1, rel=1e-8, abs=1e-12)


def test_covariant_derivative():
    m = models.minkowski2()
    assert np.allclose(core.covariant_derivative(m, ["1", "0"], [0.1, 0.2], [0.3, 1], [1, 0.2]), 0)
    w = np.array([1.0, 0.1])
    x = np.array([0.3, -0.2])
    got = core.covariant_derivative(models.warped(), ["0", "1"], x, [1, 0], w)
    Gam = core.spray_and_connections(models.warped(), x, w).chern
    assert np.allclose(got, Gam[:, 0, 1], atol=1e-9)
    r = models.randers()
    rng = np.random.default_rng(7)
    field = ["x1*x2", "exp(x2)"]
    base = core.covariant_derivative(r, field, x, [0.5, 1.0], [1, 0])
    for w in core.sample_future_timelike(r, x, rng, 20):
        assert np.allclose(core.covariant_derivative(r, field, x, [0.5, 1.0], w), base, atol=1e-10)


def test_berwald_diagnostic():
    x = [0.1, -0.3]
    rep = core.berwald_diagnostic(models.minkowski2(), x, 10)
    assert rep.is_berwald_numerically and rep.max_fiber_variation == 0.0
    assert core.berwald_diagnostic(models.randers(), x, 10).is_berwald_numerically
    assert core.berwald_diagnostic(models.warped(), x, 10).is_berwald_numerically
    rep = core.berwald_diagnostic(models.finsler_perturbed(), x, 10)
    assert not rep.is_berwald_numerically and rep.max_fiber_variation > 1e-3
    with pytest.raises(InsufficientSamples):
        core.berwald_diagnostic(models.minkowski2(), x, 1)


def test_reverse_model():
    m = models.minkowski2()
    rm = core.reverse_model(m)
    rng = np.random.default_rng(8)
    for _ in range(100):
        x, v = rng.normal(size=2), rng.normal(size=2)
        assert core.lagrangian(rm, x, v) == core.lagrangian(m, x, v)
    r = models.randers()
    rr = core.reverse_model(r)
    rrr = core.reverse_model(rr)
    assert rr.lagrangian is not r.lagrangian
    count = 0
    while count < 100:
        x, v = rng.normal(size=2), rng.normal(size=2)
        if not core.in_domain(r, x, v):
            continue
        count += 1
        assert core.lagrangian(rr, x, -v) == pytest.approx(core.lagrangian(r, x, v), abs=1e-12)
        assert core.lagrangian(rrr, x, v) == pytest.approx(core.lagrangian(r, x, v), abs=1e-12)
    assert core.classify_causal(rr, [0, 0], [-1, 0]).time_orientation == "future"
