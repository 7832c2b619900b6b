"""Legendre duality, gradients and Hessians of temporal functions, d'Alembertians.

Throughout, operators act on ``-f``: with ``u = -f`` the gradient is
V = L*(du), the Legendre image of the covector du, which must lie in the
polar cone.  Differentiating the defining relation dL/dv(x, V(x)) = du(x)
gives the coordinate derivatives of V used by the Hessian and all
divergence-type quantities.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _weight
from .core import (
    ModelSpec,
    _as_vec,
    check_signature,
    connection_from_jet,
    in_domain,
    is_future_causal,
    is_future_timelike,
    jet,
    orientation_at,
    weight_jet,
)
from .errors import DomainError, NotInPolarCone, NotTemporal, SignatureError
from .fields import NegatedField, as_field

NEWTON_MAX_ITER = 100


@dataclass(frozen=True)
class DualAt:
    base: np.ndarray
    omega: np.ndarray
    L_star: float
    F_star: float
    legendre: np.ndarray
    gstar: np.ndarray
    iterations: int


def _seed(model: ModelSpec, x: np.ndarray, omega: np.ndarray) -> list[np.ndarray]:
    X = orientation_at(model, x)
    seeds = []
    try:
        jX = jet(model, x, X, 2)
        v0 = np.linalg.solve(jX.Lvv, omega)
        if float(jX.Lv @ v0) > 0:  # wrong time orientation; flip
            v0 = -v0
        seeds.append(v0)
        # along the ray through X: omega(cX) = 2 L(cX) fixes c
        c = float(omega @ X) / (2.0 * jX.L)
        if c > 0:
            seeds.append(c * X)
    except (DomainError, np.linalg.LinAlgError):
        pass
    seeds.append(X)
    return seeds


def _newton(model, x, omega, v):
    scale = 1.0 + float(np.linalg.norm(omega))
    j = jet(model, x, v, 2)
    res = j.Lv - omega
    for it in range(1, NEWTON_MAX_ITER + 1):
        rn = float(np.linalg.norm(res))
        if rn <= 1e-14 * scale:
            return v, j, it - 1
        step = np.linalg.solve(j.Lvv, res)
        lam = 1.0
        for _ in range(40):
            cand = v - lam * step
            if in_domain(model, x, cand):
                try:
                    jc = jet(model, x, cand, 2)
                except DomainError:
                    jc = None
                if jc is not None and jc.L < 0:
                    rc = jc.Lv - omega
                    if np.linalg.norm(rc) < rn or lam < 1e-6:
                        break
            lam *= 0.5
        else:
            raise NotInPolarCone(f"Newton step could not stay in the cone at x={x.tolist()}")
        v, j, res = cand, jc, rc
        if float(np.linalg.norm(lam * step)) <= 1e-16 * (1 + float(np.linalg.norm(v))):
            if float(np.linalg.norm(res)) <= 1e-10 * scale:
                return v, j, it
    if float(np.linalg.norm(res)) <= 1e-10 * scale:
        return v, j, NEWTON_MAX_ITER
    raise NotInPolarCone(f"Legendre solve did not converge for omega={omega.tolist()}")


def legendre_transform(model: ModelSpec, x, omega) -> DualAt:
    """Solve dL/dv(v) = omega for the future timelike v = L*(omega)."""
    n = model.n
    x = _as_vec(x, n, "x")
    omega = _as_vec(omega, n, "omega")
    last: Exception | None = None
    for v0 in _seed(model, x, omega):
        if not in_domain(model, x, v0):
            continue
        try:
            v, j, its = _newton(model, x, omega, v0)
        except (NotInPolarCone, np.linalg.LinAlgError) as exc:
            last = exc
            continue
        if not is_future_timelike(model, x, v):
            last = NotInPolarCone(f"Legendre image {v.tolist()} is not future timelike")
            continue
        try:
            check_signature(j.Lvv)
        except SignatureError as exc:
            last = NotInPolarCone(str(exc))
            continue
        Ls = float(j.L)
        return DualAt(x, omega, Ls, float(np.sqrt(-2.0 * Ls)), v, np.linalg.inv(j.Lvv), its)
    raise NotInPolarCone(f"covector {omega.tolist()} at {x.tolist()} is not in the polar cone") from last


def dual_norm(model: ModelSpec, x, omega) -> float:
    return legendre_transform(model, x, omega).F_star


def legendre_inverse(model: ModelSpec, x, v) -> np.ndarray:
    """dL/dv(v), the covector of a future timelike v."""
    return jet(model, x, v, 1).Lv


@dataclass(frozen=True)
class CauchySchwarzGap:
    gap: float
    proportionality_defect: float
    equality: bool


def proportionality_defect(v, w) -> float:
    """Distance between the normalized directions of v and w (0 iff positively proportional)."""
    v = np.asarray(v, float)
    w = np.asarray(w, float)
    return float(np.linalg.norm(v / np.linalg.norm(v) - w / np.linalg.norm(w)))


def reverse_cauchy_schwarz_check(model: ModelSpec, x, v, omega) -> CauchySchwarzGap:
    """-omega(v) - F*(omega) F(v), nonnegative for future causal v and polar omega."""
    x = _as_vec(x, model.n, "x")
    v = _as_vec(v, model.n, "v")
    omega = _as_vec(omega, model.n, "omega")
    if not is_future_causal(model, x, v):
        raise ValueError("v must be future causal")
    d = legendre_transform(model, x, omega)
    L = jet(model, x, v, 0).L
    F = float(np.sqrt(max(-2.0 * L, 0.0)))
    gap = float(-omega @ v - d.F_star * F)
    defect = proportionality_defect(v, d.legendre)
    return CauchySchwarzGap(gap, defect, gap <= 1e-8)


# ---------------------------------------------------------------- temporal functions


class GradientJet:
    """V = L*(du) and its coordinate derivatives at x, for u = -f."""

    def __init__(self, model: ModelSpec, u, x, order: int = 1, jet_order: int = 3):
        n = model.n
        self.model = model
        self.x = x = _as_vec(x, n, "x")
        val, du, Hu, Tu = u.derivatives(x, max(order + 1, 1))
        self.u, self.du, self.Hu, self.Tu = val, du, Hu, Tu
        try:
            d = legendre_transform(model, x, du)
        except NotInPolarCone as exc:
            raise NotTemporal(f"-df at {x.tolist()} is not in the polar cone", x) from exc
        self.dual = d
        self.V = V = d.legendre
        self.j = j = jet(model, x, V, jet_order)
        self.gi = gi = d.gstar
        self.F = d.F_star
        self.DV = self.D2V = None
        if order >= 1:
            self.DV = gi @ (Hu - j.Lvx)
        if order >= 2:
            DV = self.DV
            rhs = (
                Tu
                - j.Lvxx
                - np.einsum("imk,ml->ikl", j.Lvvx, DV)
                - np.einsum("iml,mk->ikl", j.Lvvx, DV)
                - np.einsum("imj,jl,mk->ikl", j.Lvvv, DV, DV)
            )
            self.D2V = np.einsum("ij,jkl->ikl", gi, rhs)

    def metric_derivative(self) -> np.ndarray:
        """d/dx^k of g_ij(x, V(x)), layout [i, j, k]."""
        return self.j.Lvvx + np.einsum("ijm,mk->ijk", self.j.Lvvv, self.DV)

    def lapse_derivative(self) -> np.ndarray:
        """d/dx^k of s = F*(du)^2 = -2 L(x, V(x))."""
        return -2.0 * (self.j.Lx + self.du @ self.DV)


@dataclass(frozen=True)
class OperatorAt:
    base: np.ndarray
    f_value: float
    grad: np.ndarray
    F_star: float
    hess: np.ndarray | None = None
    box: float | None = None
    box_m: float | None = None
    box_m_divergence: float | None = None
    box_mp: float | None = None
    box_mp_expanded: float | None = None
    p: float | None = None
    dpsi: float | None = None


def _potential(model: ModelSpec, f):
    return NegatedField(as_field(f, model.n))


def gradient(model: ModelSpec, f, x) -> OperatorAt:
    """grad(-f)(x) = L*(-df(x))."""
    u = _potential(model, f)
    gj = GradientJet(model, u, x, order=0, jet_order=0)
    return OperatorAt(gj.x, -gj.u, gj.V, gj.F)


def hessian_from_gradient_jet(gj: GradientJet) -> np.ndarray:
    """Matrix H with H w = D_w^V V (the spacetime Hessian of u applied to w)."""
    chern = connection_from_jet(gj.j).chern
    return gj.DV + np.einsum("ijk,k->ij", chern, gj.V)


def hessian_and_dalembertian(model: ModelSpec, f, x, p: float = -2.0) -> OperatorAt:
    u = _potential(model, f)
    gj = GradientJet(model, u, x, order=1, jet_order=3)
    return _operators(model, gj, p, f_value=-gj.u)


def _operators(model: ModelSpec, gj: GradientJet, p: float, f_value: float) -> OperatorAt:
    V, DV = gj.V, gj.DV
    H = hessian_from_gradient_jet(gj)
    box = float(np.trace(H))
    _, dpsi, _ = _weight.psi_along_geodesic(model, gj.x, V, order=1)
    box_m = box - dpsi
    _, _, dphi, _ = weight_jet(model, gj.x)
    box_m_div = float(np.trace(DV) + V @ dphi)
    s = gj.F ** 2
    ds = gj.lapse_derivative()
    box_mp = s ** ((p - 2) / 2) * box_m_div + (p - 2) / 2 * s ** ((p - 4) / 2) * float(ds @ V)
    g = gj.j.Lvv
    gHVV = float((H @ V) @ g @ V)
    box_mp_exp = s ** ((p - 2) / 2) * (box_m - (p - 2) * gHVV / s)
    return OperatorAt(gj.x, f_value, V, gj.F, H, box, box_m, box_m_div, box_mp, box_mp_exp, p, dpsi)


# ---------------------------------------------------------------- q/p pair


def q_lagrangian(model: ModelSpec, x, v, q: float) -> float:
    """L_q(v) = -F(v)^q / q on future causal v, +inf elsewhere."""
    _check_q(q)
    if not is_future_causal(model, x, v):
        return float("inf")
    L = jet(model, x, v, 0).L
    return -float(np.sqrt(max(-2.0 * L, 0.0))) ** q / q


def conjugate_exponent(q: float) -> float:
    return q / (q - 1.0)


def p_hamiltonian(model: ModelSpec, x, omega, p: float) -> float:
    """H_p(omega) = -F*(omega)^p / p on the polar cone, +inf elsewhere."""
    try:
        Fs = legendre_transform(model, x, omega).F_star
    except NotInPolarCone:
        return float("inf")
    return -(Fs ** p) / p


def q_lagrangian_p_hamiltonian(model: ModelSpec, x, v=None, omega=None, q: float = 0.5):
    """(L_q(v), H_p(omega)) with p = q/(q-1); either argument may be omitted."""
    _check_q(q)
    Lq = q_lagrangian(model, x, v, q) if v is not None else None
    Hp = p_hamiltonian(model, x, omega, conjugate_exponent(q)) if omega is not None else None
    return Lq, Hp


def _check_q(q: float):
    if not 0.0 < q < 1.0:
        raise ValueError("q must lie in (0, 1)")


# ---------------------------------------------------------------- ellipticity


def orthonormal_frame(g: np.ndarray, e1: np.ndarray) -> np.ndarray:
    """Columns e_i with g(e_i, e_j) = diag(-1, 1, ..., 1); e1 must be timelike."""
    n = len(e1)
    frame = [e1 / np.sqrt(-float(e1 @ g @ e1))]
    signs = [-1.0]
    cands = list(np.eye(n))
    while len(frame) < n:
        best, bestnorm = None, 0.0
        for b in cands:
            w = b.copy()
            for e, s in zip(frame, signs):
                w = w - s * float(e @ g @ b) * e
            nn = float(w @ g @ w)
            if nn > bestnorm:
                best, bestnorm = w, nn
        if best is None:
            raise ValueError("could not complete the frame")
        frame.append(best / np.sqrt(bestnorm))
        signs.append(1.0)
    return np.column_stack(frame)


@dataclass(frozen=True)
class SymbolAt:
    matrix: np.ndarray  # symbol in the dual orthonormal frame, normalized by F*^(p-2)
    eigenvalues: np.ndarray
    coordinate_symbol: np.ndarray  # un-normalized symbol on coordinate covectors
    frame: np.ndarray


def ellipticity_symbol(model: ModelSpec, f, x, p: float) -> SymbolAt:
    """Principal symbol of the p-d'Alembertian of -f at x."""
    u = _potential(model, f)
    gj = GradientJet(model, u, x, order=0, jet_order=2)
    V, Fs, gi = gj.V, gj.F, gj.gi
    # d/d(omega) of F*(omega)^(p-2) L*(omega)
    S = Fs ** (p - 2) * (gi - (p - 2) * np.outer(V, V) / Fs ** 2)
    E = orthonormal_frame(gj.j.Lvv, V)
    Ei = np.linalg.inv(E)
    M = Ei @ S @ Ei.T / Fs ** (p - 2)
    M = 0.5 * (M + M.T)
    return SymbolAt(M, np.sort(np.linalg.eigvalsh(M))[::-1], S, E)


# ---------------------------------------------------------------- p-energy


@dataclass(frozen=True)
class EnergyResult:
    value: float
    cells_per_axis: int
    converged: bool
    last_change: float


def p_energy(model: ModelSpec, f, region: Sequence[tuple[float, float]], p: float, grid: int = 4, max_depth: int = 7, rtol: float = 1e-6) -> EnergyResult:
    """Midpoint-rule integral of H_p(-df) sigma over a coordinate box, refined by doubling."""
    if p >= 0:
        raise ValueError("the p-energy is defined here for p < 0")
    u = _potential(model, f)
    region = [(float(a), float(b)) for a, b in region]
    if len(region) != model.n:
        raise ValueError("region needs one interval per coordinate")

    def integrand(x):
        _, du, _, _ = u.derivatives(x, 1)
        try:
            Fs = legendre_transform(model, x, du).F_star
        except NotInPolarCone as exc:
            raise NotTemporal(f"-df is not in the polar cone at grid node {x.tolist()}", x) from exc
        sigma = weight_jet(model, x)[0]
        return -(Fs ** p) / p * sigma

    def midpoint(k):
        axes = [a + (np.arange(k) + 0.5) * (b - a) / k for a, b in region]
        vol = float(np.prod([(b - a) / k for a, b in region]))
        total = 0.0
        for pt in np.array(np.meshgrid(*axes, indexing="ij")).reshape(model.n, -1).T:
            total += integrand(pt)
        return total * vol

    k = grid
    prev = midpoint(k)
    change = float("inf")
    for _ in range(max_depth):
        k *= 2
        cur = midpoint(k)
        change = abs(cur - prev) / max(abs(cur), 1e-300)
        prev = cur
        if change < rtol:
            return EnergyResult(cur, k, True, change)
    return EnergyResult(prev, k, False, change)
