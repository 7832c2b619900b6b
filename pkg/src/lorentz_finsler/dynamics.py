"""Geodesics, parallel transport, Jacobi frames, the Riccati identity, and time separation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad, solve_ivp

from .core import (
    ModelSpec,
    _as_vec,
    berwald_diagnostic,
    curvature_and_ricci,
    in_domain,
    is_future_causal,
    jet,
    lagrangian,
    nonlinear_from_jet,
    spray_from_jet,
    spray_x,
)
from .dsl import expr as E
from .dsl.tape import compile_tape
from .duality import GradientJet, orthonormal_frame
from .errors import DomainError, FrameSingular, IllConditioned, LeftDomain, StepFailure
from .fields import as_field

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-12
NEG_INF = -math.inf


class _Exit(Exception):
    def __init__(self, t):
        self.t = t


def _span(t_span) -> tuple[float, float]:
    if np.isscalar(t_span):
        t_span = (0.0, float(t_span))
    a, b = (float(t) for t in t_span)
    if not a <= 0.0 <= b or a == b:
        raise ValueError("t_span must contain 0 (where the initial data live) and have positive length")
    return a, b


class _Budget(Exception):
    def __init__(self, t):
        self.t = t


def _solve(rhs, y0, a, b, tol, events=None, max_evals: int | None = None, dense: bool = True):
    """Integrate forward over [0, b] and backward over [a, 0]; returns segment solutions.

    ``max_evals`` bounds right-hand-side evaluations per direction, turning a
    runaway integration (a blow-up or a crawl towards the cone boundary) into
    StepFailure.
    """
    segs = []
    for end in (b, a):
        if end == 0.0:
            continue
        f = rhs
        if max_evals is not None:
            count = [0]

            def f(t, y, _count=count):
                _count[0] += 1
                if _count[0] > max_evals:
                    raise _Budget(t)
                return rhs(t, y)

        try:
            sol = solve_ivp(f, (0.0, end), y0, method="DOP853", rtol=tol, atol=tol, dense_output=dense, events=events)
        except _Exit as exc:
            raise LeftDomain(f"left the model domain near t={exc.t:g}", exc.t) from None
        except _Budget as exc:
            raise StepFailure(f"evaluation budget exhausted near t={exc.t:g}") from None
        if sol.status == 1:
            te = float(sol.t_events[0][0])
            raise LeftDomain(f"left the model domain at t={te:g}", te)
        if sol.status != 0:
            raise StepFailure(f"integration failed near t={sol.t[-1]:g}: {sol.message}")
        segs.append((min(0.0, end), max(0.0, end), sol))
    return segs


def _domain_event(model: ModelSpec):
    tape = model.tables().domain_tape
    if tape is None:
        return None
    n = model.n

    def ev(t, y):
        try:
            return float(np.min(tape.run(y[: 2 * n])))
        except DomainError:
            return -1.0

    ev.terminal = True
    ev.direction = -1
    return ev


def _geodesic_rhs(model: ModelSpec):
    n = model.n

    def rhs(t, y):
        try:
            j = jet(model, y[:n], y[n:], 2, check_domain=False)
        except DomainError:
            raise _Exit(t) from None
        G, _ = spray_from_jet(j)
        return np.concatenate([y[n:], -G])

    return rhs


@dataclass(frozen=True, eq=False)
class GeodesicPath:
    """A geodesic with initial data (x(0), x'(0)) and dense output on [t0, t1]."""

    model: ModelSpec
    t0: float
    t1: float
    segments: tuple = field(repr=False)
    unit_speed: bool = False

    def _find(self, t: float):
        if not self.t0 - 1e-12 <= t <= self.t1 + 1e-12:
            raise ValueError(f"t={t} outside [{self.t0}, {self.t1}]")
        for lo, hi, sol in self.segments:
            if lo <= t <= hi:
                return sol
        return self.segments[0][2]

    def state(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        n = self.model.n
        y = self._find(float(t)).sol(float(t))
        return y[:n], y[n:]

    def position(self, t: float) -> np.ndarray:
        return self.state(t)[0]

    def velocity(self, t: float) -> np.ndarray:
        return self.state(t)[1]

    @property
    def samples(self) -> list[tuple[float, np.ndarray, np.ndarray]]:
        n = self.model.n
        out = {}
        for _, _, sol in self.segments:
            for t, y in zip(sol.t, sol.y.T):
                out[float(t)] = (y[:n].copy(), y[n:].copy())
        return [(t, *out[t]) for t in sorted(out)]

    def lagrangian_drift(self) -> float:
        L0 = lagrangian(self.model, *self.state(0.0))
        return max(abs(lagrangian(self.model, x, v) - L0) for _, x, v in self.samples)

    def residual(self, t: float, h: float = 1e-4) -> float:
        """|x'' + G(x')| with x'' from central differences of the dense output."""
        a = max(self.t0, t - h)
        b = min(self.t1, t + h)
        acc = (self.velocity(b) - self.velocity(a)) / (b - a)
        x, v = self.state(t)
        G, _ = spray_from_jet(jet(self.model, x, v, 2))
        return float(np.linalg.norm(acc + G))


def integrate_geodesic(model: ModelSpec, x, v, t_span=(0.0, 1.0), tol: float = DEFAULT_TOL) -> GeodesicPath:
    """Solve x'' + G(x') = 0 with x(0) = x, x'(0) = v over t_span (which must contain 0)."""
    n = model.n
    x = _as_vec(x, n, "x")
    v = _as_vec(v, n, "v")
    if not np.any(v):
        raise ValueError("initial velocity must be nonzero")
    if not in_domain(model, x, v):
        raise DomainError(f"({x.tolist()}, {v.tolist()}) is outside the domain of {model.name}")
    a, b = _span(t_span)
    ev = _domain_event(model)
    segs = _solve(_geodesic_rhs(model), np.concatenate([x, v]), a, b, tol, [ev] if ev else None)
    L = lagrangian(model, x, v)
    return GeodesicPath(model, a, b, tuple(segs), abs(math.sqrt(max(-2.0 * L, 0.0)) - 1.0) <= 1e-9)


def exp_map(model: ModelSpec, x, v, tol: float = DEFAULT_TOL) -> np.ndarray:
    return integrate_geodesic(model, x, v, (0.0, 1.0), tol).position(1.0)


# ---------------------------------------------------------------- transport


@dataclass(frozen=True, eq=False)
class TransportedField:
    path: GeodesicPath
    sol: object = field(repr=False)
    lagrangian_drift: float | None = None

    def __call__(self, t: float) -> np.ndarray:
        return self.sol.sol(float(t))


def parallel_transport(model: ModelSpec, path: GeodesicPath, w0, tol: float = DEFAULT_TOL) -> TransportedField:
    """Solve D_{eta'} W = 0 (reference eta') on [0, path.t1]."""
    n = model.n
    w0 = _as_vec(w0, n, "w0")

    def rhs(t, w):
        x, v = path.state(t)
        j = jet(model, x, v, 3, check_domain=False)
        G, gi = spray_from_jet(j)
        return -nonlinear_from_jet(j, gi, G) @ w

    if path.t1 <= 0:
        raise ValueError("path must extend forward from t=0")
    sol = solve_ivp(rhs, (0.0, path.t1), w0, method="DOP853", rtol=tol, atol=tol, dense_output=True)
    if sol.status != 0:
        raise StepFailure(sol.message)
    drift = None
    x0 = path.position(0.0)
    try:
        berwald = berwald_diagnostic(model, x0, 6).is_berwald_numerically
    except Exception:  # noqa: BLE001 - the check is advisory
        berwald = False
    if berwald and in_domain(model, x0, w0):
        L0 = lagrangian(model, x0, w0)
        drift = max(abs(lagrangian(model, path.position(t), w) - L0) for t, w in zip(sol.t, sol.y.T))
        if drift > 1e-8:
            log.warning("L(W) drifted by %g along a Berwald transport", drift)
    return TransportedField(path, sol, drift)


# ---------------------------------------------------------------- variational flow


def _variational_rhs(model: ModelSpec):
    n = model.n
    m = 2 * n

    def rhs(t, y):
        x, v = y[:n], y[n:m]
        try:
            j = jet(model, x, v, 3, check_domain=False)
        except DomainError:
            raise _Exit(t) from None
        G, gi = spray_from_jet(j)
        N = nonlinear_from_jet(j, gi, G)
        Gx = spray_x(j, gi, G)
        P = y[m:].reshape(m, -1)
        dP = np.vstack([P[n:], -Gx @ P[:n] - 2.0 * N @ P[n:]])
        return np.concatenate([v, -G, dP.ravel()])

    return rhs


def _flow(model: ModelSpec, x, w, T: float, tol: float, max_evals: int | None = 2000):
    """Endpoint (x, v) after time T and the 2n x 2n state transition matrix."""
    n = model.n
    y0 = np.concatenate([x, w, np.eye(2 * n).ravel()])
    ev = _domain_event(model)
    segs = _solve(_variational_rhs(model), y0, min(T, 0.0), max(T, 0.0), tol, [ev] if ev else None, max_evals, dense=False)
    y = segs[0][2].y[:, -1]
    return y[:n], y[n : 2 * n], y[2 * n :].reshape(2 * n, 2 * n)


# ---------------------------------------------------------------- Jacobi frames


class JacobiFrame:
    """Jacobi fields E_i along zeta(t) = exp_x(t grad h(x)) from the gradient-flow variation.

    ``A(t)`` is the Gram matrix g_{zeta'}(E_i, E_j) and ``B(t)`` is defined by
    D_{zeta'} E_i = sum_j B_ij E_j.
    """

    def __init__(self, model, path, sols, C0, t0, t1):
        self.model = model
        self.path = path
        self._sols = sols
        self._C0 = C0  # initial data (J(0); J'(0)) stacked, 2n x n
        self.t0, self.t1 = t0, t1
        n = model.n
        self.samples = sorted({float(t) for _, _, s in sols for t in s.t})
        for t in self.samples:
            E = self.E(t)
            if np.linalg.cond(E) > 1e12:
                raise FrameSingular(f"Jacobi frame degenerates near t={t:g}")
        self.n = n

    def _state(self, t):
        n = self.model.n
        for lo, hi, sol in self._sols:
            if lo <= t <= hi:
                y = sol.sol(t)
                break
        else:
            raise ValueError(f"t={t} outside the frame span")
        P = y[2 * n :].reshape(2 * n, 2 * n) @ self._C0
        return y[:n], y[n : 2 * n], P[:n], P[n:]

    def E(self, t: float) -> np.ndarray:
        """Columns are E_i(t)."""
        return self._state(float(t))[2]

    def covariant_E(self, t: float):
        x, v, J, Jd = self._state(float(t))
        j = jet(self.model, x, v, 3)
        G, gi = spray_from_jet(j)
        N = nonlinear_from_jet(j, gi, G)
        return J, Jd + N @ J, j

    def A(self, t: float) -> np.ndarray:
        J, _, j = self.covariant_E(t)
        return J.T @ j.Lvv @ J

    def B(self, t: float) -> np.ndarray:
        J, DJ, _ = self.covariant_E(t)
        return np.linalg.solve(J, DJ).T

    def jacobi_residual(self, t: float, h: float = 1e-3) -> float:
        """max_i |J_i'' + G_x J_i + G_v J_i'| with J'' from central differences."""
        x, v, J, Jd = self._state(float(t))
        a, b = max(self.t0, t - h), min(self.t1, t + h)
        Jdd = (self._state(b)[3] - self._state(a)[3]) / (b - a)
        j = jet(self.model, x, v, 3)
        G, gi = spray_from_jet(j)
        N = nonlinear_from_jet(j, gi, G)
        return float(np.max(np.abs(Jdd + spray_x(j, gi, G) @ J + 2.0 * N @ Jd)))


def jacobi_frame(model: ModelSpec, h, x, t_span=(0.0, 1.0), tol: float = DEFAULT_TOL) -> JacobiFrame:
    gj = GradientJet(model, as_field(h, model.n), x, order=1, jet_order=3)
    V = gj.V
    e = orthonormal_frame(gj.j.Lvv, V)
    C0 = np.vstack([e, gj.DV @ e])
    a, b = _span(t_span)
    n = model.n
    y0 = np.concatenate([gj.x, V, np.eye(2 * n).ravel()])
    ev = _domain_event(model)
    sols = _solve(_variational_rhs(model), y0, a, b, tol, [ev] if ev else None)
    path = integrate_geodesic(model, gj.x, V, (a, b), tol)
    return JacobiFrame(model, path, sols, C0, a, b)


def riccati_residual(frame: JacobiFrame, t: float, delta: float = 1e-3) -> float:
    """|d/dt tr B + tr B^2 + Ric(zeta')| with a five-point stencil for the derivative."""
    t = float(t)
    lo, hi = frame.t0 + 2 * delta, frame.t1 - 2 * delta
    c = min(max(t, lo), hi)
    trB = [np.trace(frame.B(c + k * delta)) for k in (-2, -1, 1, 2)]
    if c != t:
        # one-sided fallback near the ends of the span keeps fourth-order accuracy
        s = 1.0 if t < c else -1.0
        pts = [np.trace(frame.B(t + s * k * delta)) for k in range(5)]
        d = s * (-25 * pts[0] + 48 * pts[1] - 36 * pts[2] + 16 * pts[3] - 3 * pts[4]) / (12 * delta)
    else:
        d = (trB[0] - 8 * trB[1] + 8 * trB[2] - trB[3]) / (12 * delta)
    B = frame.B(t)
    x, v = frame.path.state(t)
    ric = curvature_and_ricci(frame.model, x, v).ricci
    return abs(d + float(np.trace(B @ B)) + ric)


# ---------------------------------------------------------------- connecting points


@dataclass(frozen=True)
class NoConnection:
    """No future-causal geodesic from x to y was found (this is not a certificate)."""

    x: np.ndarray
    y: np.ndarray
    seeds_tried: int
    reasons: tuple

    def __bool__(self) -> bool:
        return False


@dataclass(frozen=True, eq=False)
class Connection:
    path: GeodesicPath
    initial_velocity: np.ndarray
    length: float
    seed_index: int

    def __bool__(self) -> bool:
        return True


def _seeds(model: ModelSpec, x, y) -> list[np.ndarray]:
    c = y - x
    r = float(np.linalg.norm(c))
    out = [c]
    n = model.n
    # perturb each component relative to its own size so long chords keep their slope
    for alpha in (0.1, 0.3):
        for i in range(n):
            for s in (1.0, -1.0):
                d = np.zeros(n)
                d[i] = s * alpha * max(abs(c[i]), 0.05 * r)
                out.append(c + d)
    from .core import orientation_at

    X = orientation_at(model, x)
    out.append(X * r / float(np.linalg.norm(X)))
    return out


def _shoot(model: ModelSpec, x, y, w, segments: int, tol: float, max_iter: int = 15):
    """Multiple-shooting Newton for exp_x(w) = y.  Returns (w0, ill_conditioned)."""
    n = model.n
    M = segments
    hseg = 1.0 / M
    nodes = [x + (k / M) * (y - x) for k in range(M)]
    z = np.concatenate([w] + [np.concatenate([nodes[k], w]) for k in range(1, M)])
    scale = 1.0 + float(np.linalg.norm(y)) + float(np.linalg.norm(x))

    def unpack(z):
        xs = [x] + [z[n + 2 * n * (k - 1) : n + 2 * n * (k - 1) + n] for k in range(1, M)]
        ws = [z[:n]] + [z[2 * n + 2 * n * (k - 1) : 2 * n + 2 * n * (k - 1) + n] for k in range(1, M)]
        return xs, ws

    def evaluate(z, need_jac):
        xs, ws = unpack(z)
        res = np.zeros(len(z))
        jac = np.zeros((len(z), len(z))) if need_jac else None
        for k in range(M):
            X, W, P = _flow(model, xs[k], ws[k], hseg, tol)
            # P maps (dx, dw) at the segment start to (dX, dW) at its end
            row = 2 * n * k
            if k < M - 1:
                res[row : row + 2 * n] = np.concatenate([X - xs[k + 1], W - ws[k + 1]])
            else:
                res[row : row + n] = X - y
            if need_jac:
                rows = slice(row, row + (2 * n if k < M - 1 else n))
                Pk = P if k < M - 1 else P[:n]
                if k == 0:
                    jac[rows, 0:n] = Pk[:, n:]
                else:
                    c0 = n + 2 * n * (k - 1)
                    jac[rows, c0 : c0 + 2 * n] = Pk
                if k < M - 1:
                    c1 = n + 2 * n * k
                    jac[rows, c1 : c1 + 2 * n] -= np.eye(2 * n)
        return res, jac

    try:
        res, jac = evaluate(z, True)
    except (LeftDomain, StepFailure):
        return None, False
    ill = False
    slow = 0
    for _ in range(max_iter):
        norm = float(np.linalg.norm(res))
        if norm <= 1e-11 * scale:
            return z[:n], ill
        if np.linalg.cond(jac) > 1e12:
            ill = True
        try:
            step = np.linalg.lstsq(jac, -res, rcond=None)[0]
        except np.linalg.LinAlgError:
            return None, True
        lam = 1.0
        while lam > 1e-4:
            try:
                zt = z + lam * step
                rt, jt = evaluate(zt, True)
            except (LeftDomain, StepFailure):
                lam *= 0.5
                continue
            if np.linalg.norm(rt) < norm or lam < 2e-4:
                break
            lam *= 0.5
        else:
            return None, ill
        # give up on seeds that only creep towards a root
        slow = slow + 1 if np.linalg.norm(rt) > 0.9 * norm else 0
        if slow >= 3:
            return None, ill
        z, res, jac = zt, rt, jt
    return (z[:n], ill) if float(np.linalg.norm(res)) <= 1e-9 * scale else (None, ill)


def connect_points(model: ModelSpec, x, y, segments: int = 4, tol: float = DEFAULT_TOL):
    """Maximizing future-causal geodesic from x to y over [0, 1], or NoConnection."""
    n = model.n
    x = _as_vec(x, n, "x")
    y = _as_vec(y, n, "y")
    found = []
    reasons = []
    any_ill = False
    seeds = _seeds(model, x, y)
    for idx, s in enumerate(seeds):
        if not in_domain(model, x, s):
            reasons.append((idx, "seed outside domain"))
            continue
        w0, ill = _shoot(model, x, y, s, segments, tol)
        any_ill |= ill
        if w0 is None:
            reasons.append((idx, "no convergence"))
            continue
        if not is_future_causal(model, x, w0):
            reasons.append((idx, "converged to a non-causal geodesic"))
            continue
        length = math.sqrt(max(-2.0 * lagrangian(model, x, w0), 0.0))
        found.append((length, float(np.linalg.norm(s)), idx, w0))
    if not found:
        if any_ill:
            raise IllConditioned(f"shooting from {x.tolist()} to {y.tolist()} is ill-conditioned")
        return NoConnection(x, y, len(seeds), tuple(reasons))
    best = max(found, key=lambda f: f[0])
    ties = [f for f in found if best[0] - f[0] < 1e-10]
    length, _, idx, w0 = min(ties, key=lambda f: (f[1], f[2]))
    return Connection(integrate_geodesic(model, x, w0, (0.0, 1.0), tol), w0, length, idx)


# ---------------------------------------------------------------- time separation


def _product_tape(model: ModelSpec):
    got = model._cache.get("product_tape")
    if got is None:
        xs = [f"x{i + 1}" for i in range(model.n)]
        got = compile_tape([model.product_metric], xs)
        model._cache["product_tape"] = got
    return got


def _has_product_form(model: ModelSpec) -> bool:
    if model.product_metric is None or model.n != 2:
        return False
    return E.to_string(model.orientation[0]) == "1" and E.to_string(model.orientation[1]) == "0"


def sigma_distance(model: ModelSpec, a: float, b: float) -> float:
    """Distance along the fiber coordinate for product models."""
    tape = _product_tape(model)

    def root_h(s):
        return math.sqrt(tape.run(np.array([0.0, s]))[0])

    val, _ = quad(root_h, min(a, b), max(a, b), epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


def time_separation(model: ModelSpec, x, y) -> float:
    """tau(x, y), or -inf when no future-causal connection is known."""
    n = model.n
    x = _as_vec(x, n, "x")
    y = _as_vec(y, n, "y")
    w = y - x
    if not np.any(w):
        return 0.0
    if model.is_position_independent:
        if not is_future_causal(model, x, w):
            return NEG_INF
        return math.sqrt(max(-2.0 * lagrangian(model, x, w), 0.0))
    if _has_product_form(model):
        dt = w[0]
        d = sigma_distance(model, x[1], y[1])
        if dt <= 0.0 or dt < d:
            return NEG_INF
        return math.sqrt((dt - d) * (dt + d))
    try:
        res = connect_points(model, x, y)
    except IllConditioned:
        log.info("ill-conditioned connection %s -> %s treated as lightlike", x.tolist(), y.tolist())
        return 0.0
    if not res:
        log.info("no connection %s -> %s: %s", x.tolist(), y.tolist(), res.reasons)
        return NEG_INF
    return res.length


def is_chronological(model: ModelSpec, x, y) -> bool:
    """x << y, i.e. tau(x, y) > 0."""
    return time_separation(model, x, y) > 0.0
