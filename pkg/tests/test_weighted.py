import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lorentz_finsler import core, duality, models, weighted
from lorentz_finsler.dynamics import integrate_geodesic
from lorentz_finsler.errors import InapplicableCurvature, NotUnitSpeed, OutOfEpsilonRange
from lorentz_finsler.fields import ExprField, NegatedField

from oracles import fd_bochner_first_terms, fd_gradient


@pytest.mark.parametrize("method", ["chain", "stencil"])
def test_psi_examples(method):
    w = weighted.psi_and_derivatives(models.minkowski2(), [0.3, 0.1], [1.0, 0.4], method)
    assert (w.psi, w.dpsi, w.ddpsi) == pytest.approx((0, 0, 0), abs=1e-9)
    w = weighted.psi_and_derivatives(models.weighted_minkowski2(), [0, 0], [1, 0], method)
    assert (w.psi, w.dpsi, w.ddpsi) == pytest.approx((0, 1, 0), abs=1e-8)
    w = weighted.psi_and_derivatives(models.gaussian_weighted_minkowski2(), [0, 0], [1, 0], method)
    assert (w.dpsi, w.ddpsi) == pytest.approx((0, 1), abs=1e-8)


def test_psi_routes_agree_and_are_homogeneous():
    rng = np.random.default_rng(0)
    for m in (models.weighted_warped(), models.randers(), models.finsler_perturbed()):
        for _ in range(5):
            x = rng.uniform(-0.5, 0.5, 2)
            v = core.sample_future_timelike(m, x, rng, 1)[0]
            a = weighted.psi_and_derivatives(m, x, v, "chain")
            b = weighted.psi_and_derivatives(m, x, v, "stencil")
            assert b.dpsi == pytest.approx(a.dpsi, abs=1e-8)
            assert b.ddpsi == pytest.approx(a.ddpsi, abs=1e-6)
            assert weighted.psi(m, x, 2.5 * v) == pytest.approx(a.psi, abs=1e-9)
            j = core.jet(m, x, v, 2)
            ref = 0.5 * math.log(-np.linalg.det(j.Lvv)) - math.log(core.weight_jet(m, x)[0])
            assert a.psi == pytest.approx(ref, abs=1e-12)


def test_weighted_ricci_examples():
    m = models.minkowski2()
    for N in (None, -2.0, 5.0, 2.0):
        assert weighted.weighted_ricci(m, [0, 0], [1, 0.2], N) == 0
    w = models.weighted_minkowski2()
    assert weighted.weighted_ricci(w, [0, 0], [1, 0], math.inf) == pytest.approx(0, abs=1e-12)
    assert weighted.weighted_ricci(w, [0, 0], [1, 0], -2.0) == pytest.approx(0.25, abs=1e-8)
    assert weighted.weighted_ricci(w, [0, 0], [1, 0], 2.0) == -math.inf
    assert weighted.weighted_ricci(w, [0, 0], [0, 0], 3.0) == 0.0


def test_weighted_ricci_monotone_in_N():
    rng = np.random.default_rng(1)
    m = models.weighted_warped()
    for _ in range(10):
        x = rng.uniform(-0.5, 0.5, 2)
        v = core.sample_future_timelike(m, x, rng, 1)[0]
        rn = weighted.weighted_ricci(m, x, v, 2.0)
        r5 = weighted.weighted_ricci(m, x, v, 5.0)
        rinf = weighted.weighted_ricci(m, x, v, None)
        rneg = weighted.weighted_ricci(m, x, v, -1.0)
        assert rn <= r5 + 1e-10 and r5 <= rinf + 1e-10 and rinf <= rneg + 1e-10


def test_weighted_ricci_reverse_consistency():
    rng = np.random.default_rng(2)
    m = models.weighted_warped()
    r = core.reverse_model(m)
    for _ in range(5):
        x = rng.uniform(-0.5, 0.5, 2)
        v = core.sample_future_timelike(m, x, rng, 1)[0]
        for N in (None, -1.0, 4.0):
            assert weighted.weighted_ricci(r, x, -v, N) == pytest.approx(weighted.weighted_ricci(m, x, v, N), abs=1e-8)


def test_epsilon_constant_examples():
    assert weighted.epsilon_constant(2, 2, 1.0).c == pytest.approx(0.5)
    assert weighted.epsilon_constant(2, math.inf, 0.0).c == pytest.approx(0.5)
    assert weighted.epsilon_constant(2, None, 0.5).c == pytest.approx(0.375)
    with pytest.raises(OutOfEpsilonRange):
        weighted.epsilon_constant(2, 1, 0.1)
    with pytest.raises(OutOfEpsilonRange):
        weighted.epsilon_constant(3, 2, 0.0)
    with pytest.raises(OutOfEpsilonRange):
        weighted.epsilon_constant(2, 4, math.sqrt(1.5))


@settings(max_examples=200, deadline=None)
@given(n=st.integers(2, 6), N=st.one_of(st.floats(-50, 1), st.floats(0, 60), st.just(math.inf)), u=st.floats(-0.999, 0.999))
def test_epsilon_constant_positive_on_admissible_pairs(n, N, u):
    if 1 < N < n:
        with pytest.raises(OutOfEpsilonRange):
            weighted.epsilon_constant(n, N, 0.0)
        return
    if N == 1:
        eps = 0.0
    elif N == n or math.isinf(N):
        eps = u
    else:
        eps = u * math.sqrt((N - 1) / (N - n))
    assert weighted.epsilon_constant(n, N, eps).c > 0


def _line(model, v=(1.0, 0.0), T=6.0):
    return integrate_geodesic(model, [0, 0], v, (-T, T))


def test_comparison_bound_examples():
    m = models.minkowski2()
    spec = weighted.epsilon_constant(2, 2, 1.0)
    eta = _line(m)
    for t in (0.5, 1.0, 2.0, 5.0):
        assert weighted.comparison_bound(m, eta, t, spec) == pytest.approx(2 / t, rel=1e-10)
        assert weighted.comparison_bound(m, eta, t, spec, reverse=True) == pytest.approx(2 / t, rel=1e-10)
    w = models.weighted_minkowski2()
    spec = weighted.epsilon_constant(2, math.inf, 0.0)
    eta = _line(w)
    for t in (0.5, 1.0, 3.0):
        closed = math.exp(-2 * t) / (spec.c * (1 - math.exp(-2 * t)) / 2)
        assert weighted.comparison_bound(w, eta, t, spec) == pytest.approx(closed, abs=1e-8)
    with pytest.raises(NotUnitSpeed):
        weighted.comparison_bound(m, integrate_geodesic(m, [0, 0], [2, 0], (0, 3)), 1.0, spec)


def test_completeness_integrand_examples():
    m = models.minkowski2()
    w = models.weighted_minkowski2()
    for T in (1.0, 4.0):
        assert weighted.completeness_integrand(m, _line(m), T, weighted.epsilon_constant(2, math.inf, 0.3)) == pytest.approx(T)
        assert weighted.completeness_integrand(w, _line(w), T, weighted.epsilon_constant(2, 2, 1.0)) == pytest.approx(T)
        val = weighted.completeness_integrand(w, _line(w), T, weighted.epsilon_constant(2, math.inf, 0.0))
        assert val == pytest.approx((1 - math.exp(-2 * T)) / 2, abs=1e-10)


def test_comparison_inequality_at_time_separation():
    m = models.minkowski2()
    rows = weighted.comparison_sweep(m, [0, 0], weighted.epsilon_constant(2, 2, 1.0), [0.5, 1, 2, 5], [[1, 0], [1.25, 0.75]])
    for r in rows:
        assert r.lhs == pytest.approx(1 / r.t, abs=1e-7)
        assert r.rhs == pytest.approx(2 / r.t, rel=1e-9)
    w = models.weighted_minkowski2()
    rng = np.random.default_rng(3)
    dirs = core.sample_future_timelike(w, [0, 0], rng, 5)
    rows = weighted.comparison_sweep(w, [0, 0], weighted.epsilon_constant(2, math.inf, 0.0), np.linspace(0.1, 3, 8), dirs)
    assert min(r.slack for r in rows) >= -1e-7


def test_tau_field_requires_flat_model():
    with pytest.raises(ValueError):
        weighted.tau_field(models.warped(), [0, 0])


# ---------------------------------------------------------------- Bochner


def test_bochner_trivial_case():
    b = weighted.bochner_residual(models.minkowski2(), "-x1", [0.2, 0.3])
    assert (b.term_div, b.term_dbox, b.term_ric, b.term_hs, b.residual) == (0, 0, 0, 0, 0)


@pytest.mark.parametrize(
    "model,f,x",
    [
        (models.minkowski2(), "x1 + 0.05*x2^2", [0.0, 0.1]),
        (models.weighted_warped(), "x1 + 0.1*x1*x2 + 0.05*x2^2", [0.2, -0.1]),
        (models.randers(), "x1 + 0.1*x1*x2 + 0.05*x2^2", [0.1, 0.2]),
    ],
    ids=["minkowski", "warped-weighted", "randers"],
)
def test_bochner_terms_against_finite_differences(model, f, x):
    b = weighted.bochner_residual(model, NegatedField(ExprField(f, model.n)), x)
    div, dbox = fd_bochner_first_terms(model, f, x)
    assert b.term_div == pytest.approx(div, rel=1e-4, abs=1e-9)
    assert b.term_dbox == pytest.approx(dbox, rel=1e-4, abs=1e-9)
    assert abs(b.residual) <= 1e-6
    assert abs(b.term_div) > 1e-4 and abs(b.term_hs) > 1e-4


def test_bochner_batch_weighted_warped():
    m = models.weighted_warped()
    h = NegatedField(ExprField("x1 + 0.1*x1*x2 + 0.05*x2^2", 2))
    rng = np.random.default_rng(4)
    worst = max(abs(weighted.bochner_residual(m, h, x).residual) for x in rng.uniform(-0.5, 0.5, (100, 2)))
    assert worst <= 1e-6


def test_hilbert_schmidt_is_hessian_square_trace():
    m = models.warped()
    h = NegatedField(ExprField("x1 + 0.1*x1*x2 + 0.05*x2^2", 2))
    b = weighted.bochner_residual(m, h, [0.1, 0.2])
    assert weighted.hilbert_schmidt(m, h, [0.1, 0.2]) == pytest.approx(b.term_hs, abs=1e-12)


def test_wylie_examples():
    c = weighted.wylie_check(models.minkowski2(), "-x1", [0, 0])
    assert c.lhs == 0 and c.rhs == 0 and c.equality and c.hessian_scalar and c.ric0_vanishes
    c = weighted.wylie_check(models.weighted_minkowski2(), "-x1", [0.3, 0.1])
    assert c.slack >= 0
    w = models.weighted_minkowski2()
    rng = np.random.default_rng(5)
    h = NegatedField(ExprField("x1 + 0.1*x1*x2 + 0.05*x2^2", 2))
    for x in rng.uniform(-0.5, 0.5, (50, 2)):
        assert weighted.wylie_check(w, h, x).slack >= -1e-8


def test_wylie_rejects_negative_ric0():
    # Ric_0 = Ric + psi'' + psi'^2/n is negative for a concave weight exponent
    m = core.ModelSpec.from_strings(2, "(-v1^2 + v2^2)/2", weight="exp(x1^2)", name="concave")
    with pytest.raises(InapplicableCurvature):
        weighted.wylie_check(m, "-x1", [0.0, 0.0])
