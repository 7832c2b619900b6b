"""Sampled invariant and identity suites shared by the command line and the tests."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    ModelSpec,
    check_signature,
    connection_from_jet,
    curvature_from_jet,
    in_domain,
    jet,
    sample_future_timelike,
    weight_jet,
)
from .duality import ellipticity_symbol, hessian_and_dalembertian, legendre_inverse, legendre_transform, reverse_cauchy_schwarz_check
from .dynamics import jacobi_frame, riccati_residual
from .errors import DomainError, LorentzFinslerError, SignatureError
from .fields import ExprField, NegatedField
from .weighted import bochner_residual, hilbert_schmidt


@dataclass(frozen=True)
class CheckRow:
    check: str
    samples: int
    max_residual: float
    threshold: float
    verdict: str  # pass | fail | skipped
    extra: dict = field(default_factory=dict)


def _row(check, samples, residual, threshold, extra=None, error=None):
    extra = dict(extra or {})
    if error:
        extra["error"] = error
        return CheckRow(check, samples, float(residual), threshold, "fail", extra)
    ok = samples > 0 and math.isfinite(residual) and residual <= threshold
    return CheckRow(check, samples, float(residual), threshold, "pass" if ok else "fail", extra)


def sample_points(model: ModelSpec, rng: np.random.Generator, count: int, box: float = 0.5) -> np.ndarray:
    return rng.uniform(-box, box, (count, model.n))


def _random_in_domain(model, x, rng, tries=200):
    for _ in range(tries):
        v = rng.normal(size=model.n)
        if in_domain(model, x, v):
            return v
    return None


def default_test_function(n: int) -> str:
    """A function f with -f temporal near the origin for every built-in model."""
    rest = " + ".join(f"x{i}^2" for i in range(2, n + 1))
    return f"x1 + 0.1*x1*x2 + 0.05*({rest})"


# ---------------------------------------------------------------- model invariants


def model_invariants(model: ModelSpec, samples: int = 200, seed: int = 0, box: float = 0.5) -> list[CheckRow]:
    """Homogeneity, signature and positivity of the weight on random in-domain samples."""
    rng = np.random.default_rng(seed)
    hom = hom_g = 0.0
    sig_fail = None
    weight_min = math.inf
    count = 0
    for x in sample_points(model, rng, samples, box):
        v = _random_in_domain(model, x, rng)
        if v is None:
            continue
        c = float(rng.uniform(0.3, 3.0))
        try:
            j1 = jet(model, x, v, 2)
            j2 = jet(model, x, c * v, 2)
        except DomainError:
            continue
        count += 1
        scale = 1.0 + abs(j1.L) * c * c
        hom = max(hom, abs(j2.L - c * c * j1.L) / scale)
        hom_g = max(hom_g, float(np.max(np.abs(j2.Lvv - j1.Lvv))) / (1.0 + float(np.max(np.abs(j1.Lvv)))))
        if j1.L < 0.0 and sig_fail is None:
            try:
                check_signature(j1.Lvv)
            except SignatureError as exc:
                sig_fail = f"SignatureError: {exc}"
        weight_min = min(weight_min, float(weight_jet(model, x)[0]))
    timelike = 0
    for x in sample_points(model, rng, max(samples // 10, 1), box):
        timelike += len(sample_future_timelike(model, x, rng, 1, max_tries=20))
    rows = [
        _row("homogeneity_L", count, hom, 1e-10),
        _row("homogeneity_g", count, hom_g, 1e-10),
    ]
    if sig_fail is None and timelike == 0:
        sig_fail = "SignatureError: no future timelike in-domain velocity with signature (-,+,...,+) was found"
    rows.append(_row("signature", count, 0.0 if sig_fail is None else 1.0, 0.0, error=sig_fail))
    rows.append(_row("weight_positive", count, 0.0 if weight_min > 0 else -weight_min, 0.0, {"min_weight": weight_min}))
    return rows


# ---------------------------------------------------------------- pointwise identities


def euler_identities(model: ModelSpec, samples: int = 1000, seed: int = 0, box: float = 0.5) -> list[CheckRow]:
    """g_v(v,v) = 2L, 0-homogeneity of g, Euler relations for L_v, G and N."""
    rng = np.random.default_rng(seed)
    worst = dict(gvv=0.0, g_hom=0.0, euler_Lv=0.0, spray_gamma=0.0, nconn=0.0)
    count = 0
    for x in sample_points(model, rng, samples, box):
        vs = sample_future_timelike(model, x, rng, 1)
        if not vs:
            continue
        v = vs[0]
        c = float(rng.uniform(0.3, 3.0))
        j = jet(model, x, v, 3)
        jc = jet(model, x, c * v, 2)
        count += 1
        s = 1.0 + abs(j.L)
        worst["gvv"] = max(worst["gvv"], abs(v @ j.Lvv @ v - 2 * j.L) / s)
        worst["euler_Lv"] = max(worst["euler_Lv"], abs(j.Lv @ v - 2 * j.L) / s)
        worst["g_hom"] = max(worst["g_hom"], float(np.max(np.abs(jc.Lvv - j.Lvv))) / (1.0 + float(np.max(np.abs(j.Lvv)))))
        con = connection_from_jet(j)
        G, gam, N = con.spray, con.gamma, con.nconn
        sG = 1.0 + float(np.max(np.abs(G)))
        worst["spray_gamma"] = max(worst["spray_gamma"], float(np.max(np.abs(G - np.einsum("ijk,j,k->i", gam, v, v)))) / sG)
        gi = np.linalg.inv(j.Lvv)
        Nref = np.einsum("ijk,k->ij", gam, v) - 0.5 * np.einsum("ik,klj,l->ij", gi, j.Lvvv, G)
        worst["nconn"] = max(worst["nconn"], float(np.max(np.abs(N - Nref))) / (1.0 + float(np.max(np.abs(N)))))
    return [_row(k, count, val, 1e-8) for k, val in worst.items()]


def duality_identities(model: ModelSpec, samples: int = 1000, seed: int = 0, box: float = 0.5) -> list[CheckRow]:
    """Legendre round trip and the reverse Cauchy-Schwarz inequality."""
    rng = np.random.default_rng(seed)
    rt = 0.0
    gap_min = math.inf
    count = 0
    for x in sample_points(model, rng, samples, box):
        vs = sample_future_timelike(model, x, rng, 2)
        if len(vs) < 2:
            continue
        v, w = vs
        count += 1
        omega = legendre_inverse(model, x, v)
        back = legendre_transform(model, x, omega).legendre
        rt = max(rt, float(np.linalg.norm(back - v) / np.linalg.norm(v)))
        gap_min = min(gap_min, reverse_cauchy_schwarz_check(model, x, w, omega).gap)
    return [
        _row("legendre_roundtrip", count, rt, 1e-8),
        _row("reverse_cauchy_schwarz", count, max(0.0, -gap_min), 1e-10, {"min_gap": gap_min}),
    ]


def operator_identities(model: ModelSpec, f: str, samples: int = 100, seed: int = 0, box: float = 0.5, ps=(-2.0, -1.0, 0.5)) -> list[CheckRow]:
    """Two routes for the weighted and p-d'Alembertian, and the ellipticity symbol."""
    rng = np.random.default_rng(seed)
    field_ = ExprField(f, model.n)
    bm = bmp = sym = 0.0
    count = 0
    for x in sample_points(model, rng, samples, box):
        try:
            ops = [hessian_and_dalembertian(model, field_, x, p) for p in ps]
        except LorentzFinslerError:
            continue
        count += 1
        bm = max(bm, abs(ops[0].box_m - ops[0].box_m_divergence) / (1.0 + abs(ops[0].box_m)))
        for op in ops:
            bmp = max(bmp, abs(op.box_mp - op.box_mp_expanded) / (1.0 + abs(op.box_mp)))
        for p in ps:
            ev = ellipticity_symbol(model, field_, x, p).eigenvalues
            ref = np.sort(np.array([1.0 - p] + [1.0] * (model.n - 1)))[::-1]
            sym = max(sym, float(np.max(np.abs(ev - ref))))
    return [
        _row("box_m_two_routes", count, bm, 1e-7),
        _row("box_mp_two_routes", count, bmp, 1e-7, {"p": list(ps)}),
        _row("symbol_eigenvalues", count, sym, 1e-9, {"p": list(ps)}),
    ]


def bochner_identity(model: ModelSpec, f: str, samples: int = 20, seed: int = 0, box: float = 0.5) -> CheckRow:
    rng = np.random.default_rng(seed)
    h = NegatedField(ExprField(f, model.n))
    worst = 0.0
    terms = dict(term_div=0.0, term_dbox=0.0, term_ric=0.0, term_hs=0.0)
    count = 0
    for x in sample_points(model, rng, samples, box):
        try:
            b = bochner_residual(model, h, x)
        except LorentzFinslerError:
            continue
        count += 1
        scale = 1.0 + max(abs(b.term_div), abs(b.term_dbox), abs(b.term_ric), abs(b.term_hs))
        worst = max(worst, abs(b.residual) / scale)
        for k in terms:
            terms[k] = max(terms[k], abs(getattr(b, k)))
    return _row("bochner", count, worst, 1e-6, terms)


def riccati_identities(model: ModelSpec, f: str, geodesics: int = 3, times: int = 10, seed: int = 0, box: float = 0.3, T: float = 1.0) -> list[CheckRow]:
    rng = np.random.default_rng(seed)
    h = NegatedField(ExprField(f, model.n))
    ric = hs = 0.0
    count = 0
    for x in sample_points(model, rng, geodesics, box):
        try:
            frame = jacobi_frame(model, h, x, (0.0, T))
        except LorentzFinslerError:
            continue
        count += 1
        for t in np.linspace(0.0, T, times):
            ric = max(ric, riccati_residual(frame, t))
        B0 = frame.B(0.0)
        hs = max(hs, abs(float(np.trace(B0 @ B0)) - hilbert_schmidt(model, h, x)))
    return [
        _row("riccati", count, ric, 1e-6, {"times": times}),
        _row("trace_B0_squared", count, hs, 1e-7),
    ]


def identity_suite(model: ModelSpec, f: str | None = None, samples: int = 200, seed: int = 0) -> list[CheckRow]:
    f = f or default_test_function(model.n)
    rows = []
    rows += euler_identities(model, samples, seed)
    rows += duality_identities(model, samples, seed + 1)
    rows += operator_identities(model, f, max(samples // 4, 1), seed + 2)
    rows.append(bochner_identity(model, f, max(samples // 10, 1), seed + 3))
    rows += riccati_identities(model, f, 3, 10, seed + 4)
    return rows


def curvature_trace_check(model: ModelSpec, samples: int = 100, seed: int = 0, box: float = 0.5) -> CheckRow:
    """Ric = tr R and Ric(cv) = c^2 Ric(v)."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    count = 0
    for x in sample_points(model, rng, samples, box):
        vs = sample_future_timelike(model, x, rng, 1)
        if not vs:
            continue
        v = vs[0]
        c = 1.7
        a = curvature_from_jet(jet(model, x, v, 4))
        b = curvature_from_jet(jet(model, x, c * v, 4))
        count += 1
        worst = max(worst, abs(a.ricci - np.trace(a.R)), abs(b.ricci - c * c * a.ricci) / (1.0 + abs(b.ricci)))
    return _row("ricci_trace_homogeneity", count, worst, 1e-8)
