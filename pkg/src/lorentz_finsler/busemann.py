"""Straight lines, Busemann functions, asymptotes and field analysis of b."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import ModelSpec, _as_vec, is_future_timelike, lagrangian
from .duality import hessian_and_dalembertian
from .dynamics import GeodesicPath, connect_points, integrate_geodesic, time_separation
from .errors import NoConvergence, NonTimelikeLimit, NotStraight, NotUnitSpeed
from .fields import SplineField

INF = math.inf


def _speed(model, x, v) -> float:
    return math.sqrt(max(-2.0 * lagrangian(model, x, v), 0.0))


class LineSpec:
    """A unit-speed timelike geodesic eta with eta(0) = base, eta'(0) = velocity.

    ``eta`` is integrated over [-T, T]; ``point(t)`` extends it on demand
    (exactly, for position-independent models, where geodesics are affine).
    """

    def __init__(self, model: ModelSpec, base, velocity, T: float, eta: GeodesicPath):
        self.model = model
        self.base = _as_vec(base, model.n, "base")
        self.velocity = _as_vec(velocity, model.n, "velocity")
        self.T = float(T)
        self.eta = eta
        self.unit_speed = eta.unit_speed
        self._extended = eta

    def __repr__(self) -> str:
        return f"LineSpec({self.model.name}, base={self.base.tolist()}, v={self.velocity.tolist()}, T={self.T})"

    def point(self, t: float) -> np.ndarray:
        t = float(t)
        if self.model.is_position_independent:
            return self.base + t * self.velocity
        path = self._extended
        if not path.t0 <= t <= path.t1:
            span = max(abs(t), 2.0 * path.t1)
            path = integrate_geodesic(self.model, self.base, self.velocity, (-span, span))
            self._extended = path
        return path.position(t)


def validate_line(model: ModelSpec, x, v, T: float, grid: int = 5, tol: float = 1e-6) -> LineSpec:
    """Integrate eta over [-T, T] and check tau(eta(s), eta(t)) = t - s on a grid of pairs."""
    x = _as_vec(x, model.n, "x")
    v = _as_vec(v, model.n, "v")
    F = _speed(model, x, v)
    if abs(F - 1.0) > 1e-9 or not is_future_timelike(model, x, v):
        raise NotUnitSpeed(f"line velocity must be future timelike with F = 1, got F = {F!r}")
    eta = integrate_geodesic(model, x, v, (-T, T))
    line = LineSpec(model, x, v, T, eta)
    ts = np.linspace(-T, T, grid)
    worst = (0.0, 0.0, 0.0)
    for i in range(grid):
        for k in range(i + 1, grid):
            s, t = ts[i], ts[k]
            tau = time_separation(model, eta.position(s), eta.position(t))
            defect = abs(tau - (t - s)) if math.isfinite(tau) else INF
            if defect > worst[2]:
                worst = (float(s), float(t), defect)
    if worst[2] > tol:
        raise NotStraight(f"tau(eta({worst[0]:g}), eta({worst[1]:g})) misses t - s by {worst[2]:g}", worst)
    return line


def busemann_partial(line: LineSpec, x, t: float) -> float:
    """b_{eta,t}(x) = t - tau(x, eta(t)), or +inf when x is not in the past of eta(t)."""
    tau = time_separation(line.model, _as_vec(x, line.model.n, "x"), line.point(t))
    return t - tau if tau > 0.0 else INF


def reverse_busemann_partial(line: LineSpec, x, t: float) -> float:
    """t - tau(eta(-t), x), or +inf when x is not in the future of eta(-t)."""
    tau = time_separation(line.model, line.point(-t), _as_vec(x, line.model.n, "x"))
    return t - tau if tau > 0.0 else INF


@dataclass(frozen=True)
class LimitRecord:
    b: float
    b_rev: float
    tail_estimate: float
    horizon: float
    monotone_violation: float


def _richardson(values: list[float], depth: int = 3) -> list[float]:
    """Extrapolate a sequence sampled at horizons T0 * 2^k under the model sum_m a_m / t^m."""
    table = [[v] for v in values]
    out = [values[0]]
    for k in range(1, len(values)):
        for m in range(1, min(k, depth) + 1):
            f = 2.0**m
            table[k].append((f * table[k][m - 1] - table[k - 1][m - 1]) / (f - 1.0))
        out.append(table[k][-1])
    return out


def _limit(partial, T0: float, max_doublings: int, tol: float):
    raw: list[float] = []
    horizons: list[float] = []
    t = T0
    k = 0
    # find the first horizon with x in the relevant past / future
    while k <= max_doublings:
        val = partial(t)
        if math.isfinite(val):
            break
        t *= 2.0
        k += 1
    else:
        raise NoConvergence(f"point never enters the causal past of the line up to t={t:g}")
    raw.append(val)
    horizons.append(t)
    best = (INF, val, t)
    while k < max_doublings:
        t *= 2.0
        k += 1
        val = partial(t)
        if not math.isfinite(val):
            raise NoConvergence(f"partial Busemann value became infinite at t={t:g}")
        raw.append(val)
        horizons.append(t)
        ext = _richardson(raw)
        if len(ext) >= 4:
            diff = abs(ext[-1] - ext[-2])
            if diff < best[0]:
                best = (diff, ext[-1], t)
            if diff <= tol:
                break
    if best[0] > 1e-5:
        raise NoConvergence(f"successive extrapolations differ by {best[0]:g}")
    violation = max([raw[i + 1] - raw[i] for i in range(len(raw) - 1)] + [0.0])
    return best[1], best[0], best[2], violation


def _default_T0(line: LineSpec, x) -> float:
    return 8.0 * (1.0 + float(np.linalg.norm(np.asarray(x) - line.base)))


def busemann_limit(line: LineSpec, x, T0: float | None = None, max_doublings: int = 16, tol: float = 1e-11) -> LimitRecord:
    """b_eta(x) and the reverse function by horizon doubling and Richardson extrapolation in 1/t."""
    x = _as_vec(x, line.model.n, "x")
    T0 = T0 or _default_T0(line, x)
    b, tail, horizon, viol = _limit(lambda t: busemann_partial(line, x, t), T0, max_doublings, tol)
    br, tail_r, _, viol_r = _limit(lambda t: reverse_busemann_partial(line, x, t), T0, max_doublings, tol)
    return LimitRecord(b, br, max(tail, tail_r), horizon, max(viol, viol_r))


@dataclass(frozen=True, eq=False)
class BusemannField:
    """b and its reverse on a rectilinear 2-D grid: values[i, j] at (xs[i], ys[j])."""

    line: LineSpec
    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray
    reverse_values: np.ndarray
    horizon_used: np.ndarray
    tail: np.ndarray
    monotone_violation: float
    _spline: dict = field(default_factory=dict, repr=False)

    @property
    def grid(self) -> np.ndarray:
        X, Y = np.meshgrid(self.xs, self.ys, indexing="ij")
        return np.stack([X, Y], axis=-1)

    def spline(self, max_step: float = 0.05) -> SplineField:
        s = self._spline.get(max_step)
        if s is None:
            s = SplineField(self.xs, self.ys, self.values, max_step=max_step)
            self._spline[max_step] = s
        return s


def busemann_field(line: LineSpec, xs, ys, **kwargs) -> BusemannField:
    if line.model.n != 2:
        raise ValueError("Busemann fields on grids are implemented for n = 2")
    xs = np.asarray(xs, float)
    ys = np.asarray(ys, float)
    shape = (len(xs), len(ys))
    b = np.empty(shape)
    br = np.empty(shape)
    hor = np.empty(shape)
    tail = np.empty(shape)
    viol = 0.0
    for i, x1 in enumerate(xs):
        for j, x2 in enumerate(ys):
            rec = busemann_limit(line, [x1, x2], **kwargs)
            b[i, j], br[i, j], hor[i, j], tail[i, j] = rec.b, rec.b_rev, rec.horizon, rec.tail_estimate
            viol = max(viol, rec.monotone_violation)
    return BusemannField(line, xs, ys, b, br, hor, tail, viol)


def asymptote_from(line: LineSpec, x, horizons=None, length: float = 2.0, tol: float = 1e-7) -> GeodesicPath:
    """Geodesic from x whose unit initial velocity is the limit of the directions towards eta(t_k)."""
    model = line.model
    x = _as_vec(x, model.n, "x")
    if horizons is None:
        T0 = _default_T0(line, x)
        horizons = [T0 * 2.0**k for k in range(14)]
    dirs = []
    for t in horizons:
        y = line.point(t)
        if model.is_position_independent:
            w = y - x  # maximizers are affine segments
        else:
            conn = connect_points(model, x, y)
            if not conn:
                raise NoConvergence(f"no maximizing geodesic from {x.tolist()} to eta({t:g})")
            w = conn.initial_velocity
        F = _speed(model, x, w)
        if F <= 0.0:
            raise NonTimelikeLimit(f"connection to eta({t:g}) is not timelike")
        dirs.append(w / F)
    comps = np.array([_richardson(list(c), depth=2) for c in np.array(dirs).T]).T
    diffs = np.linalg.norm(np.diff(comps, axis=0), axis=1)
    k = int(np.argmin(diffs[2:]) + 3) if len(diffs) > 2 else len(comps) - 1
    if diffs[k - 1] > tol:
        raise NoConvergence(f"asymptote directions still move by {diffs[k - 1]:g}")
    u = comps[k]
    if not is_future_timelike(model, x, u):
        raise NonTimelikeLimit(f"limit direction {u.tolist()} is not future timelike")
    u = u / _speed(model, x, u)
    return integrate_geodesic(model, x, u, (0.0, length))


@dataclass(frozen=True)
class FieldAnalysis:
    points: np.ndarray
    gradients: np.ndarray
    lapse_residual: float
    hessian_residual: float
    p_harm_residual: float
    semiconcavity_bound: float
    p: float


def tube_mask(line: LineSpec, pts: np.ndarray, radius: float) -> np.ndarray:
    """Points within Euclidean chart distance ``radius`` of the line's initial tangent line."""
    d = line.velocity / np.linalg.norm(line.velocity)
    rel = pts - line.base
    perp = rel - np.outer(rel @ d, d)
    return np.linalg.norm(perp, axis=-1) <= radius + 1e-12


def field_analysis(fld: BusemannField, p: float = -2.0, radius: float = 0.5, margin: int = 3) -> FieldAnalysis:
    """Fit a quintic spline to b and evaluate grad, lapse, Hessian and p-d'Alembertian of -b."""
    model = fld.line.model
    spl = fld.spline()
    interior = fld.grid[margin:-margin, margin:-margin].reshape(-1, 2)
    pts = interior[tube_mask(fld.line, interior, radius)]
    grads = []
    lapse = hess = pharm = 0.0
    for x in pts:
        op = hessian_and_dalembertian(model, spl, x, p)
        grads.append(op.grad)
        lapse = max(lapse, abs(op.F_star - 1.0))
        hess = max(hess, float(np.max(np.abs(op.hess))))
        pharm = max(pharm, abs(op.box_mp))
    hx = fld.xs[1] - fld.xs[0]
    hy = fld.ys[1] - fld.ys[0]
    b = fld.values
    dxx = (b[2:, :] - 2 * b[1:-1, :] + b[:-2, :]) / hx**2
    dyy = (b[:, 2:] - 2 * b[:, 1:-1] + b[:, :-2]) / hy**2
    semi = float(max(dxx.max(), dyy.max()))
    return FieldAnalysis(pts, np.array(grads), lapse, hess, pharm, semi, p)
