"""Pointwise Lorentz-Finsler geometry: metric, causal character, connections, curvature.

All derivatives of L come from symbolic tapes; the tensor algebra below is
plain numpy on n-dimensional arrays.  Index conventions for the jet arrays:

    Lvx[i, a]       = d2L / dv^i dx^a
    Lvvx[i, j, a]   = d3L / dv^i dv^j dx^a      (= d g_ij / dx^a)
    Lvvv[i, j, k]   = d g_ij / dv^k
    Lvvvx[i, j, k, a], Lvvxx[i, j, a, b], Lvvvv[i, j, k, l] likewise.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dsl import expr as E
from .dsl.parser import parse
from .dsl.tape import compile_tape
from .errors import DomainError, InsufficientSamples, SignatureError

LIGHTLIKE_BAND = 1e-12
SIGNATURE_TOL = 1e-10


def _names(n: int) -> tuple[list[str], list[str]]:
    return [f"x{i + 1}" for i in range(n)], [f"v{i + 1}" for i in range(n)]


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """A spacetime: dimension, Lagrangian L(x, v), weight density sigma(x),
    domain predicates (each must be > 0), and the orientation field X(x)."""

    n: int
    lagrangian: E.Expr
    weight: E.Expr = E.ONE
    domain: tuple[E.Expr, ...] = ()
    orientation: tuple[E.Expr, ...] = ()
    name: str = "model"
    # h(x2) for models of the form (-v1^2 + h(x2) v2^2)/2, enabling closed-form tau
    product_metric: E.Expr | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("dimension must be at least 2")
        xs, vs = _names(self.n)
        allowed = set(xs) | set(vs)
        extra = E.free_variables(self.lagrangian) - allowed
        if extra:
            raise ValueError(f"Lagrangian uses variables outside dimension {self.n}: {sorted(extra)}")
        if E.free_variables(self.weight) - set(xs):
            raise ValueError("weight density may depend on position only")
        for d in self.domain:
            if E.free_variables(d) - allowed:
                raise ValueError("domain predicate uses unknown variables")
        orient = self.orientation or tuple(E.ONE if i == 0 else E.ZERO for i in range(self.n))
        if len(orient) != self.n:
            raise ValueError("orientation field needs n components")
        for c in orient:
            if E.free_variables(c) - set(xs):
                raise ValueError("orientation field may depend on position only")
        object.__setattr__(self, "orientation", tuple(orient))

    @classmethod
    def from_strings(
        cls,
        n: int,
        lagrangian: str,
        weight: str = "1",
        domain: Sequence[str] = (),
        orientation: Sequence[str] | None = None,
        name: str = "model",
        parameters: dict | None = None,
        product_metric: str | None = None,
    ) -> "ModelSpec":
        p = parameters or {}
        return cls(
            n=n,
            lagrangian=parse(lagrangian, p),
            weight=parse(weight, p),
            domain=tuple(parse(d, p) for d in domain),
            orientation=tuple(parse(c, p) for c in orientation) if orientation else (),
            name=name,
            product_metric=parse(product_metric, p) if product_metric else None,
        )

    @property
    def is_position_independent(self) -> bool:
        xs, _ = _names(self.n)
        return not (E.free_variables(self.lagrangian) & set(xs))

    def tables(self) -> "_Tables":
        t = self._cache.get("tables")
        if t is None:
            with _TABLE_LOCK:
                t = self._cache.get("tables")
                if t is None:
                    t = _Tables(self)
                    self._cache["tables"] = t
        return t


_TABLE_LOCK = threading.Lock()

# jet blocks: name -> (number of v slots, number of x slots)
_BLOCKS = {
    0: [("L", 0, 0)],
    1: [("Lx", 0, 1), ("Lv", 1, 0)],
    2: [("Lvv", 2, 0), ("Lvx", 1, 1), ("Lxx", 0, 2)],
    3: [("Lvvv", 3, 0), ("Lvvx", 2, 1), ("Lvxx", 1, 2)],
    4: [("Lvvvv", 4, 0), ("Lvvvx", 3, 1), ("Lvvxx", 2, 2)],
}


class _Tables:
    """Derivative expressions and compiled tapes for one model."""

    def __init__(self, model: ModelSpec):
        n = model.n
        self.n = n
        xs, vs = _names(n)
        self.inputs = xs + vs
        self._derivs: dict[tuple[str, ...], E.Expr] = {(): model.lagrangian}
        self._levels: dict[int, tuple] = {}
        self._lock = threading.Lock()
        self.domain_tape = compile_tape(list(model.domain), self.inputs) if model.domain else None
        self.orientation_tape = compile_tape(list(model.orientation), xs)
        phi = E.log(model.weight)
        dphi = [E.differentiate(phi, a) for a in xs]
        ddphi = [E.differentiate(d, b) for d in dphi for b in xs]
        self.phi_tape = compile_tape([model.weight, phi] + dphi + ddphi, xs)

    def deriv(self, names: tuple[str, ...]) -> E.Expr:
        key = tuple(sorted(names))
        got = self._derivs.get(key)
        if got is None:
            got = E.differentiate(self.deriv(key[:-1]), key[-1])
            self._derivs[key] = got
        return got

    def level(self, order: int):
        got = self._levels.get(order)
        if got is not None:
            return got
        with self._lock:
            got = self._levels.get(order)
            if got is not None:
                return got
            n = self.n
            xs, vs = _names(n)
            roots: list[E.Expr] = []
            slot: dict[tuple[str, ...], int] = {}
            layout = []
            for k in range(order + 1):
                for name, nv, nx in _BLOCKS[k]:
                    shape = (n,) * (nv + nx)
                    pos = np.empty(shape, dtype=np.intp)
                    for idx in itertools.product(range(n), repeat=nv + nx):
                        names = tuple(vs[i] for i in idx[:nv]) + tuple(xs[i] for i in idx[nv:])
                        key = tuple(sorted(names))
                        if key not in slot:
                            slot[key] = len(roots)
                            roots.append(self.deriv(key))
                        pos[idx] = slot[key]
                    layout.append((name, pos))
            got = (compile_tape(roots, self.inputs), layout)
            self._levels[order] = got
            return got


class Jet:
    """Partial derivatives of L at one (x, v) up to a given order."""

    __slots__ = ("x", "v", "order", "L", "Lx", "Lv", "Lvv", "Lvx", "Lxx", "Lvvv", "Lvvx", "Lvxx", "Lvvvv", "Lvvvx", "Lvvxx")

    def __init__(self, x, v, order):
        self.x = x
        self.v = v
        self.order = order


def _as_vec(a, n: int, what: str) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64).reshape(-1)
    if arr.shape != (n,):
        raise ValueError(f"{what} must have {n} components")
    return arr


def in_domain(model: ModelSpec, x, v) -> bool:
    t = model.tables()
    if t.domain_tape is None:
        return True
    try:
        vals = t.domain_tape.run(np.concatenate([x, v]))
    except DomainError:
        return False
    return bool(np.all(vals > 0.0))


def jet(model: ModelSpec, x, v, order: int = 2, check_domain: bool = True) -> Jet:
    """Evaluate the derivative tape of the given order at (x, v)."""
    n = model.n
    x = _as_vec(x, n, "x")
    v = _as_vec(v, n, "v")
    if check_domain and not in_domain(model, x, v):
        raise DomainError(f"({x.tolist()}, {v.tolist()}) is outside the domain of {model.name}")
    tape, layout = model.tables().level(order)
    out = tape.run(np.concatenate([x, v]))
    j = Jet(x, v, order)
    for name, pos in layout:
        setattr(j, name, out[pos] if pos.ndim else float(out[pos]))
    return j


def orientation_at(model: ModelSpec, x) -> np.ndarray:
    return model.tables().orientation_tape.run(_as_vec(x, model.n, "x"))


def weight_jet(model: ModelSpec, x):
    """sigma(x), phi = log sigma, d phi, dd phi."""
    n = model.n
    out = model.tables().phi_tape.run(_as_vec(x, n, "x"))
    return out[0], out[1], out[2 : 2 + n], out[2 + n :].reshape(n, n)


def lagrangian(model: ModelSpec, x, v) -> float:
    return jet(model, x, v, 0).L


def finsler_norm(model: ModelSpec, x, v) -> float:
    """F(v) = sqrt(-2L(v)) for causal v (0 inside the lightlike band)."""
    L = lagrangian(model, x, v)
    v = np.asarray(v, dtype=float)
    if L > LIGHTLIKE_BAND * (1.0 + float(v @ v)):
        raise ValueError("F is only defined on causal vectors")
    return float(np.sqrt(max(-2.0 * L, 0.0)))


# ---------------------------------------------------------------- metric


@dataclass(frozen=True)
class MetricAt:
    base: np.ndarray
    reference: np.ndarray
    g: np.ndarray
    g_inv: np.ndarray
    det_g: float
    eigenvalues: np.ndarray


def check_signature(g: np.ndarray) -> np.ndarray:
    ev = np.linalg.eigvalsh(g)
    scale = max(1.0, float(np.max(np.abs(ev))))
    neg = int(np.sum(ev < -SIGNATURE_TOL * scale))
    pos = int(np.sum(ev > SIGNATURE_TOL * scale))
    if neg != 1 or pos != len(ev) - 1:
        raise SignatureError(f"fundamental tensor has eigenvalues {ev.tolist()}, expected (-,+,...,+)", ev)
    return ev


def fundamental_tensor(model: ModelSpec, x, v) -> MetricAt:
    j = jet(model, x, v, 2)
    if not np.any(j.v):
        raise ValueError("reference vector must be nonzero")
    g = j.Lvv
    ev = check_signature(g)
    return MetricAt(j.x, j.v, g, np.linalg.inv(g), float(np.linalg.det(g)), ev)


# ---------------------------------------------------------------- causality


@dataclass(frozen=True)
class CausalClass:
    cls: str  # timelike | lightlike | spacelike | zero
    time_orientation: str  # future | past | none
    F: float | None


def _is_causal_L(L: float, v: np.ndarray) -> int:
    band = LIGHTLIKE_BAND * (1.0 + float(v @ v))
    if L < -band:
        return -1
    if L <= band:
        return 0
    return 1


def _segment_future(model: ModelSpec, x: np.ndarray, v: np.ndarray, samples: int = 33) -> bool:
    X = orientation_at(model, x)
    try:
        jX = jet(model, x, X, 1)
    except DomainError:
        return False
    if float(jX.Lv @ v) >= 0.0:
        return False
    Xs = X * (np.linalg.norm(v) / np.linalg.norm(X))
    for s in np.linspace(0.0, 1.0, samples)[:-1]:
        p = (1.0 - s) * Xs + s * v
        try:
            L = lagrangian(model, x, p)
        except DomainError:
            return False
        if _is_causal_L(L, p) >= 0:
            return False
    return True


def classify_causal(model: ModelSpec, x, v) -> CausalClass:
    n = model.n
    x = _as_vec(x, n, "x")
    v = _as_vec(v, n, "v")
    if not np.any(v):
        return CausalClass("zero", "none", 0.0)
    L = lagrangian(model, x, v)
    kind = _is_causal_L(L, v)
    if kind > 0:
        return CausalClass("spacelike", "none", None)
    cls = "timelike" if kind < 0 else "lightlike"
    F = float(np.sqrt(-2.0 * L)) if kind < 0 else 0.0
    if _segment_future(model, x, v):
        orient = "future"
    elif _segment_future(model, x, -v) if in_domain(model, x, -v) else False:
        orient = "past"
    else:
        orient = "past" if _pairing_sign(model, x, v) > 0 else "none"
    return CausalClass(cls, orient, F)


def _pairing_sign(model: ModelSpec, x, v) -> float:
    X = orientation_at(model, x)
    try:
        return float(jet(model, x, X, 1).Lv @ v)
    except DomainError:
        return 0.0


def is_future_timelike(model: ModelSpec, x, v) -> bool:
    try:
        c = classify_causal(model, x, v)
    except DomainError:
        return False
    return c.cls == "timelike" and c.time_orientation == "future"


def is_future_causal(model: ModelSpec, x, v) -> bool:
    try:
        c = classify_causal(model, x, v)
    except DomainError:
        return False
    return c.cls in ("timelike", "lightlike") and c.time_orientation == "future"


def sample_future_timelike(model: ModelSpec, x, rng: np.random.Generator, count: int, spread: float = 0.8, max_tries: int = 200) -> list[np.ndarray]:
    """Random future timelike in-domain velocities around the orientation field."""
    x = _as_vec(x, model.n, "x")
    X = orientation_at(model, x)
    scale = float(np.linalg.norm(X))
    out: list[np.ndarray] = []
    tries = 0
    while len(out) < count and tries < max_tries * max(count, 1):
        tries += 1
        v = X + spread * scale * rng.uniform(-1.0, 1.0, model.n)
        v *= rng.uniform(0.5, 2.0)
        if in_domain(model, x, v) and is_future_timelike(model, x, v):
            try:
                check_signature(jet(model, x, v, 2).Lvv)
            except SignatureError:
                continue
            out.append(v)
    return out


# ---------------------------------------------------------------- connections


@dataclass(frozen=True)
class ConnectionAt:
    gamma: np.ndarray
    spray: np.ndarray
    nconn: np.ndarray
    chern: np.ndarray


def spray_from_jet(j: Jet) -> tuple[np.ndarray, np.ndarray]:
    """(G, g_inv) from a jet of order >= 2."""
    gi = np.linalg.inv(j.Lvv)
    r = j.Lvx @ j.v - j.Lx
    return gi @ r, gi


def spray(model: ModelSpec, x, v, check_domain: bool = True) -> np.ndarray:
    """G^i(x, v); the geodesic equation is x'' + G(x') = 0."""
    j = jet(model, x, v, 2, check_domain=check_domain)
    return np.linalg.solve(j.Lvv, j.Lvx @ j.v - j.Lx)


def nonlinear_from_jet(j: Jet, gi: np.ndarray, G: np.ndarray) -> np.ndarray:
    """N^i_j = (1/2) dG^i/dv^j, assembled from third derivatives of L."""
    S = np.einsum("lmj,j->lm", j.Lvvx, j.v) + j.Lvx - j.Lvx.T
    T = np.einsum("lkm,k->lm", j.Lvvv, G)
    return 0.5 * gi @ (S - T)


def gamma_from_jet(j: Jet, gi: np.ndarray) -> np.ndarray:
    gx = j.Lvvx
    C = np.einsum("lkj->ljk", gx) + np.einsum("jlk->ljk", gx) - np.einsum("jkl->ljk", gx)
    return 0.5 * np.einsum("il,ljk->ijk", gi, C)


def chern_from_parts(j: Jet, gi: np.ndarray, gamma: np.ndarray, N: np.ndarray) -> np.ndarray:
    gv = j.Lvvv
    term = (
        np.einsum("lkm,mj->ljk", gv, N)
        + np.einsum("jlm,mk->ljk", gv, N)
        - np.einsum("jkm,ml->ljk", gv, N)
    )
    return gamma - 0.5 * np.einsum("il,ljk->ijk", gi, term)


def connection_from_jet(j: Jet) -> ConnectionAt:
    G, gi = spray_from_jet(j)
    N = nonlinear_from_jet(j, gi, G)
    gamma = gamma_from_jet(j, gi)
    return ConnectionAt(gamma, G, N, chern_from_parts(j, gi, gamma, N))


def spray_and_connections(model: ModelSpec, x, v) -> ConnectionAt:
    j = jet(model, x, v, 3)
    if not np.any(j.v):
        raise ValueError("reference vector must be nonzero")
    check_signature(j.Lvv)
    return connection_from_jet(j)


def chern_symbols(model: ModelSpec, x, w, check: bool = False) -> np.ndarray:
    j = jet(model, x, w, 3)
    if check:
        check_signature(j.Lvv)
    return connection_from_jet(j).chern


def covariant_derivative(model: ModelSpec, field_: Sequence, x, v, w) -> np.ndarray:
    """D_v^w X for a vector field given by n component expressions in x."""
    n = model.n
    comps = [parse(c) if isinstance(c, str) else c for c in field_]
    if len(comps) != n:
        raise ValueError("vector field needs n components")
    xs, _ = _names(n)
    roots = list(comps) + [E.differentiate(c, a) for c in comps for a in xs]
    out = compile_tape(roots, xs).run(_as_vec(x, n, "x"))
    X, DX = out[:n], out[n:].reshape(n, n)
    w = _as_vec(w, n, "w")
    if not np.any(w):
        raise ValueError("reference vector must be nonzero")
    Gam = chern_symbols(model, x, w)
    v = _as_vec(v, n, "v")
    return DX @ v + np.einsum("ijk,j,k->i", Gam, v, X)


# ---------------------------------------------------------------- curvature


@dataclass(frozen=True)
class CurvatureAt:
    R: np.ndarray
    ricci: float


def spray_x(j: Jet, gi: np.ndarray, G: np.ndarray) -> np.ndarray:
    """dG^i/dx^a from a jet of order >= 3."""
    # dG^i/dx^a = -g^{-1} (dg/dx^a) G + g^{-1} d(Lvx v - Lx)/dx^a
    return -np.einsum("il,lka,k->ia", gi, j.Lvvx, G) + gi @ (np.einsum("lja,j->la", j.Lvxx, j.v) - j.Lxx)


def spray_derivatives(j: Jet, gi: np.ndarray, G: np.ndarray, N: np.ndarray):
    """dG/dx, dN/dx, dN/dv from a jet of order 4.  Index layout [i, j, a]."""
    v = j.v
    gx, gv = j.Lvvx, j.Lvvv
    Gx = spray_x(j, gi, G)
    Gv = 2.0 * N
    dSx = np.einsum("lmja,j->lma", j.Lvvxx, v) + j.Lvxx - np.einsum("mla->lma", j.Lvxx)
    dTx = np.einsum("lkma,k->lma", j.Lvvvx, G) + np.einsum("lkm,ka->lma", j.Lvvv, Gx)
    dSv = (
        np.einsum("lmaj,j->lma", j.Lvvvx, v)
        + gx
        + np.einsum("lam->lma", gx)
        - np.einsum("mal->lma", gx)
    )
    dTv = np.einsum("lkma,k->lma", j.Lvvvv, G) + np.einsum("lkm,ka->lma", j.Lvvv, Gv)
    dNx = np.einsum("il,lma->ima", gi, 0.5 * (dSx - dTx) - np.einsum("lka,km->lma", gx, N))
    dNv = np.einsum("il,lma->ima", gi, 0.5 * (dSv - dTv) - np.einsum("lka,km->lma", gv, N))
    return Gx, Gv, dNx, dNv


def curvature_from_jet(j: Jet) -> CurvatureAt:
    G, gi = spray_from_jet(j)
    N = nonlinear_from_jet(j, gi, G)
    Gx, _, dNx, dNv = spray_derivatives(j, gi, G, N)
    R = Gx - (np.einsum("ijk,k->ij", dNx, j.v) - np.einsum("ijk,k->ij", dNv, G) + N @ N)
    return CurvatureAt(R, float(np.trace(R)))


def curvature_and_ricci(model: ModelSpec, x, v) -> CurvatureAt:
    j = jet(model, x, v, 4)
    if not np.any(j.v):
        return CurvatureAt(np.zeros((model.n, model.n)), 0.0)
    return curvature_from_jet(j)


def ricci(model: ModelSpec, x, v) -> float:
    return curvature_and_ricci(model, x, v).ricci


# ---------------------------------------------------------------- Berwald / reverse


@dataclass(frozen=True)
class BerwaldReport:
    is_berwald_numerically: bool
    max_fiber_variation: float
    samples: int


def berwald_diagnostic(model: ModelSpec, x, sample_count: int = 20, seed: int = 0) -> BerwaldReport:
    if sample_count < 2:
        raise InsufficientSamples("need at least 2 samples")
    rng = np.random.default_rng(seed)
    vs = sample_future_timelike(model, x, rng, sample_count)
    if len(vs) < 2:
        raise InsufficientSamples(f"only {len(vs)} in-domain velocities found at {list(x)}")
    chern = [chern_symbols(model, x, v) for v in vs]
    dev = 0.0
    for a in range(len(chern)):
        for b in range(a + 1, len(chern)):
            dev = max(dev, float(np.max(np.abs(chern[a] - chern[b]))))
    return BerwaldReport(dev <= 1e-8, dev, len(vs))


def reverse_model(model: ModelSpec) -> ModelSpec:
    """L(v) -> L(-v), X -> -X, sigma unchanged."""
    _, vs = _names(model.n)
    flip = {name: E.neg(E.var(name)) for name in vs}
    return ModelSpec(
        n=model.n,
        lagrangian=E.substitute(model.lagrangian, flip),
        weight=model.weight,
        domain=tuple(E.substitute(d, flip) for d in model.domain),
        orientation=tuple(E.neg(c) for c in model.orientation),
        name=model.name + "~reverse" if not model.name.endswith("~reverse") else model.name[: -len("~reverse")],
        product_metric=model.product_metric,
    )
