"""Weighted geometry: psi, weighted Ricci curvature, epsilon-range, comparison bounds,
the Bochner-type identity and the Ric_0 variant."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from . import _weight
from .core import ModelSpec, _as_vec, curvature_from_jet, jet, sample_future_timelike, weight_jet
from .dsl import expr as E
from .duality import GradientJet, hessian_and_dalembertian, hessian_from_gradient_jet, orthonormal_frame
from .errors import InapplicableCurvature, NotUnitSpeed, OutOfEpsilonRange
from .fields import ExprField, as_field

log = logging.getLogger(__name__)

INF = math.inf


@dataclass(frozen=True)
class WeightAt:
    x: np.ndarray
    v: np.ndarray
    psi: float
    dpsi: float
    ddpsi: float


def psi_and_derivatives(model: ModelSpec, x, v, method: str = "chain") -> WeightAt:
    """psi(v) and its first two derivatives along the geodesic with initial velocity v.

    ``method="chain"`` differentiates through the jets of L (exact up to
    rounding); ``method="stencil"`` samples psi on the integrated geodesic with a
    five-point stencil and serves as an independent cross-check.
    """
    x = _as_vec(x, model.n, "x")
    v = _as_vec(v, model.n, "v")
    if method == "chain":
        psi, d1, d2 = _weight.psi_along_geodesic(model, x, v, order=2)
        return WeightAt(x, v, psi, d1, d2)
    if method != "stencil":
        raise ValueError("method is 'chain' or 'stencil'")
    from .dynamics import integrate_geodesic

    L = jet(model, x, v, 0).L
    h = 1e-3 / math.sqrt(max(-2.0 * L, 1e-300))
    path = integrate_geodesic(model, x, v, (-2 * h, 2 * h), tol=1e-13)
    vals = []
    for t in (-2 * h, -h, 0.0, h, 2 * h):
        p, vel = path.state(t)
        j = jet(model, p, vel, 2)
        vals.append(_weight.psi_value(j, weight_jet(model, p)[1]))
    fm2, fm1, f0, fp1, fp2 = vals
    d1 = (fm2 - 8 * fm1 + 8 * fp1 - fp2) / (12 * h)
    d2 = (-fm2 + 16 * fm1 - 30 * f0 + 16 * fp1 - fp2) / (12 * h * h)
    return WeightAt(x, v, f0, d1, d2)


def psi(model: ModelSpec, x, v) -> float:
    j = jet(model, x, v, 2)
    return _weight.psi_value(j, weight_jet(model, x)[1])


def _is_inf(N) -> bool:
    return N is None or (isinstance(N, float) and math.isinf(N) and N > 0)


def weighted_ricci(model: ModelSpec, x, v, N: float) -> float:
    """Ric_N(v) = Ric(v) + psi'' - psi'^2/(N - n); N = inf drops the last term."""
    v = _as_vec(v, model.n, "v")
    if not np.any(v):
        return 0.0
    j = jet(model, x, v, 4)
    ric = curvature_from_jet(j).ricci
    _, d1, d2 = _weight.psi_along_geodesic(model, x, v, order=2)
    if _is_inf(N):
        return ric + d2
    n = model.n
    if N == n:
        if abs(d1) <= 1e-12 * (1.0 + abs(d2)):
            return ric + d2
        log.warning("Ric_n diverges at x=%s v=%s since psi'=%g != 0", list(x), list(v), d1)
        return -INF
    return ric + d2 - d1 * d1 / (N - n)


@dataclass(frozen=True)
class EpsilonSpec:
    N: float
    epsilon: float
    c: float
    n: int


def epsilon_constant(n: int, N: float, epsilon: float) -> EpsilonSpec:
    """Check (N, epsilon) against the epsilon-range and return c(N, epsilon)."""
    eps = float(epsilon)
    if _is_inf(N):
        if abs(eps) >= 1.0:
            raise OutOfEpsilonRange(f"N=inf requires |epsilon| < 1, got {eps}")
        return EpsilonSpec(INF, eps, (1.0 - eps * eps) / n, n)
    N = float(N)
    if 1.0 < N < n:
        raise OutOfEpsilonRange(f"N={N} is not in (-inf, 1] or [n, inf] for n={n}")
    if N == 1.0:
        if eps != 0.0:
            raise OutOfEpsilonRange(f"N=1 requires epsilon = 0, got {eps}")
        return EpsilonSpec(N, eps, 1.0 / n, n)
    if N == n:
        return EpsilonSpec(N, eps, 1.0 / n, n)
    bound = math.sqrt((N - 1.0) / (N - n))
    if not abs(eps) < bound:
        raise OutOfEpsilonRange(f"|epsilon| must be < {bound:.12g} for N={N}, n={n}; got {eps}")
    c = (1.0 - eps * eps * (N - n) / (N - 1.0)) / n
    return EpsilonSpec(N, eps, c, n)


def _check_unit(model, path, t=0.0):
    x, v = path.state(t)
    F = math.sqrt(max(-2.0 * jet(model, x, v, 0).L, 0.0))
    if abs(F - 1.0) > 1e-8:
        raise NotUnitSpeed(f"geodesic speed F = {F!r} at t={t}")


def _kernel(model: ModelSpec, path, spec: EpsilonSpec):
    a = 2.0 * (spec.epsilon - 1.0) / (model.n - 1)

    def k(s):
        x, v = path.state(s)
        return math.exp(a * psi(model, x, v))

    return k


def _integrate(k, a, b):
    val, _ = quad(k, a, b, epsabs=1e-13, epsrel=1e-11, limit=200)
    return val


def comparison_bound(model: ModelSpec, geod, t: float, spec: EpsilonSpec, reverse: bool = False) -> float:
    """Right side of the d'Alembertian comparison estimate at eta(t) (or eta(-t) if reverse)."""
    if t <= 0:
        raise ValueError("t must be positive")
    _check_unit(model, geod)
    k = _kernel(model, geod, spec)
    if reverse:
        return k(-t) / (spec.c * _integrate(k, -t, 0.0))
    return k(t) / (spec.c * _integrate(k, 0.0, t))


def completeness_integrand(model: ModelSpec, geod, T: float, spec: EpsilonSpec) -> float:
    """Integral over [0, T] of exp(2(eps-1) psi / (n-1)) along a unit-speed geodesic."""
    _check_unit(model, geod)
    return _integrate(_kernel(model, geod, spec), 0.0, T)


def tau_field(model: ModelSpec, z) -> ExprField:
    """x -> tau(z, x) = F(x - z) as a symbolic field (position-independent models only)."""
    if not model.is_position_independent:
        raise ValueError("a closed-form time separation needs a position-independent Lagrangian")
    z = _as_vec(z, model.n, "z")
    shift = {f"v{i + 1}": E.sub(E.var(f"x{i + 1}"), E.const(float(z[i]))) for i in range(model.n)}
    L = E.substitute(model.lagrangian, shift)
    return ExprField(E.sqrt(E.mul(E.const(-2.0), L)), model.n)


@dataclass(frozen=True)
class ComparisonRow:
    t: float
    x: np.ndarray
    lhs: float
    rhs: float

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs


def comparison_sweep(model: ModelSpec, z, spec: EpsilonSpec, ts, directions) -> list[ComparisonRow]:
    """Weighted d'Alembertian of tau_z along unit geodesics from z against the comparison bound."""
    from .dynamics import integrate_geodesic

    z = _as_vec(z, model.n, "z")
    f = tau_field(model, z)
    tmax = max(ts)
    rows = []
    for u in directions:
        u = _as_vec(u, model.n, "direction")
        u = u / math.sqrt(-2.0 * jet(model, z, u, 0).L)
        geod = integrate_geodesic(model, z, u, (0.0, tmax))
        for t in ts:
            x = geod.position(t)
            lhs = hessian_and_dalembertian(model, f, x).box_m
            rows.append(ComparisonRow(float(t), x, float(lhs), comparison_bound(model, geod, t, spec)))
    return rows


# ---------------------------------------------------------------- Bochner


@dataclass(frozen=True)
class BochnerTerms:
    term_div: float
    term_dbox: float
    term_ric: float
    term_hs: float
    residual: float
    box_m: float
    dpsi: float
    F: float


def _bochner_parts(model: ModelSpec, h, x):
    u = as_field(h, model.n)
    gj = GradientJet(model, u, x, order=2, jet_order=4)
    n = model.n
    V, DV, D2V, gi = gj.V, gj.DV, gj.D2V, gj.gi
    j = gj.j
    _, _, dphi, ddphi = weight_jet(model, gj.x)
    # q = F(V)^2 / 2 = -L(x, V(x)) and its first two coordinate derivatives
    dq = -(j.Lx + gj.du @ DV)
    ddq = -(
        j.Lxx
        + np.einsum("jl,jk->lk", j.Lvx, DV)
        + np.einsum("jk,jl->lk", gj.Hu, DV)
        + np.einsum("j,jlk->lk", gj.du, D2V)
    )
    ddq = 0.5 * (ddq + ddq.T)
    # Y = g^{-1}(x, V(x)) dq and its measure divergence
    dg = gj.metric_derivative()
    dgi = -np.einsum("ia,abk,bj->ijk", gi, dg, gi)
    Y = gi @ dq
    term_div = float(np.einsum("iji,j->", dgi, dq) + np.einsum("ij,ji->", gi, ddq) + Y @ dphi)
    # d(box_m h)(V) with box_m h = div_m V
    dbox = np.einsum("iik->k", D2V) + DV.T @ dphi + ddphi @ V
    term_dbox = float(dbox @ V)
    curv = curvature_from_jet(j)
    _, d1, d2 = _weight.psi_along_geodesic(model, gj.x, V, order=2)
    term_ric = curv.ricci + d2
    H = hessian_from_gradient_jet(gj)
    term_hs = float(np.trace(H @ H))
    box_m = float(np.trace(DV) + V @ dphi)
    return gj, dict(
        term_div=term_div, term_dbox=term_dbox, term_ric=term_ric, term_hs=term_hs,
        box_m=box_m, dpsi=d1, ddpsi=d2, ric=curv.ricci, dq=dq, H=H,
    )


def bochner_residual(model: ModelSpec, h, x) -> BochnerTerms:
    """All four terms of the Bochner-type identity for h with -h temporal, and their sum."""
    gj, t = _bochner_parts(model, h, x)
    res = t["term_div"] + t["term_dbox"] + t["term_ric"] + t["term_hs"]
    return BochnerTerms(t["term_div"], t["term_dbox"], t["term_ric"], t["term_hs"], res, t["box_m"], t["dpsi"], gj.F)


def hilbert_schmidt(model: ModelSpec, h, x) -> float:
    """sum_ij g(Hess h e_i, e_j)^2 g(e_i,e_i) g(e_j,e_j) in a g_{grad h}-orthonormal frame."""
    gj = GradientJet(model, as_field(h, model.n), x, order=1, jet_order=3)
    H = hessian_from_gradient_jet(gj)
    E = orthonormal_frame(gj.j.Lvv, gj.V)
    g = gj.j.Lvv
    eps = np.array([-1.0] + [1.0] * (model.n - 1))
    M = (H @ E).T @ g @ E  # M[i, j] = g(H e_i, e_j)
    return float(np.einsum("ij,i,j->", M * M, eps, eps))


@dataclass(frozen=True)
class WylieCheck:
    lhs: float
    rhs: float
    slack: float
    ric0: float
    F_constant: bool
    ric0_vanishes: bool
    hessian_scalar: bool
    equality: bool


def wylie_check(model: ModelSpec, h, x, direction_samples: int = 8, seed: int = 0) -> WylieCheck:
    """Both sides of the Ric_0 >= 0 inequality at x (raises if Ric_0 < 0 is sampled)."""
    gj, t = _bochner_parts(model, h, x)
    n = model.n
    ric0 = t["ric"] + t["ddpsi"] + t["dpsi"] ** 2 / n
    if ric0 < -1e-10:
        raise InapplicableCurvature(f"Ric_0(grad h) = {ric0:g} < 0 at {gj.x.tolist()}", (gj.x, gj.V))
    rng = np.random.default_rng(seed)
    for v in sample_future_timelike(model, gj.x, rng, direction_samples):
        r0 = weighted_ricci(model, gj.x, v, 0.0)
        if r0 < -1e-10:
            raise InapplicableCurvature(f"Ric_0 = {r0:g} < 0 at x={gj.x.tolist()}, v={v.tolist()}", (gj.x, v))
    psi0 = _weight.psi_along_geodesic(model, gj.x, gj.V, order=1)[0]
    w = math.exp(2.0 * psi0 / n)
    box_m, dpsi = t["box_m"], t["dpsi"]
    lhs = w * t["term_div"] + w * t["term_dbox"] + 2.0 * w * dpsi / n * box_m + w * box_m**2 / n
    E = orthonormal_frame(gj.j.Lvv, gj.V)
    dF2 = 2.0 * t["dq"]
    F2 = gj.F**2
    rhs = w / (2.0 * F2) * float(sum((dF2 @ E[:, a]) ** 2 for a in range(1, n)))
    slack = rhs - lhs
    F_const = float(np.linalg.norm(dF2)) <= 1e-9
    H = t["H"]
    c = np.trace(H) / n
    hess_scalar = float(np.max(np.abs(H - c * np.eye(n)))) <= 1e-9
    ric0_zero = abs(ric0) <= 1e-9
    return WylieCheck(lhs, rhs, slack, ric0, F_const, ric0_zero, hess_scalar, abs(slack) <= 1e-8)
