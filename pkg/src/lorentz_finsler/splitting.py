"""Numerical verification of the splitting picture around a straight line (n = 2)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import newton

from .busemann import BusemannField, LineSpec, busemann_field, field_analysis, tube_mask
from .core import ModelSpec, berwald_diagnostic, in_domain, is_future_causal, jet, lagrangian, sample_future_timelike, weight_jet
from .duality import gradient
from .dynamics import _has_product_form, _product_tape, integrate_geodesic

STENCIL = (-2, -1, 1, 2)
STENCIL_W = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0


@dataclass(frozen=True)
class CheckRecord:
    name: str
    max_residual: float
    threshold: float
    verdict: str  # pass | fail | skipped
    detail: str = ""


def _record(name, residual, threshold, detail=""):
    ok = residual <= threshold and math.isfinite(residual)
    return CheckRecord(name, float(residual), float(threshold), "pass" if ok else "fail", detail)


def _skipped(name, threshold, reason):
    return CheckRecord(name, math.nan, float(threshold), "skipped", reason)


@dataclass(frozen=True, eq=False)
class SplittingReport:
    checks: tuple
    field: BusemannField
    berwald: bool
    sigma: np.ndarray  # rows (r, x1, x2) on b = 0
    pullback: np.ndarray  # rows (t, r, G_tt, G_tr, G_rr, measure)

    @property
    def passed(self) -> bool:
        return all(c.verdict != "fail" for c in self.checks)

    def check(self, name: str) -> CheckRecord:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


class _Geometry:
    """Spline-based b, grad(-b), the level set Sigma and the flow Theta."""

    def __init__(self, model: ModelSpec, line: LineSpec, fld: BusemannField):
        self.model = model
        self.line = line
        self.spl = fld.spline()
        d = line.velocity / np.linalg.norm(line.velocity)
        self.d = d
        self.nrm = np.array([-d[1], d[0]])

    def b(self, x) -> float:
        return self.spl(x)

    def grad(self, x) -> np.ndarray:
        """grad(-b)(x), the unit future timelike gradient."""
        return gradient(self.model, self.spl, x).grad

    def sigma(self, r: float) -> np.ndarray:
        """The point of b = 0 on the chart line base + r nrm + s d."""
        p0 = self.line.base + r * self.nrm

        def f(s):
            return self.spl(p0 + s * self.d)

        def fp(s):
            return float(self.spl.derivatives(p0 + s * self.d, 1)[1] @ self.d)

        s = newton(f, 0.0, fprime=fp, tol=1e-13, maxiter=50)
        return p0 + s * self.d

    def sigma_tangent(self, r: float, delta: float = 1e-3) -> np.ndarray:
        pts = [self.sigma(r + k * delta) for k in STENCIL]
        return sum(w * p for w, p in zip(STENCIL_W, pts)) / delta

    def flow(self, x, t: float) -> np.ndarray:
        """Theta-flow: follow the asymptote geodesic with initial velocity grad(-b)(x) for time t."""
        if t == 0.0:
            return np.asarray(x, float).copy()
        path = integrate_geodesic(self.model, x, self.grad(x), (min(t, 0.0), max(t, 0.0)))
        return path.position(t)


def _pullback(geo: _Geometry, rs, ts, delta: float = 1e-3):
    model = geo.model
    rows = []
    lo, hi = min(ts), max(ts)
    for r in rs:
        paths = {}
        for k in (0,) + STENCIL:
            s = geo.sigma(r + k * delta)
            paths[k] = integrate_geodesic(model, s, geo.grad(s), (min(lo, 0.0), max(hi, 0.0)))
        for t in ts:
            x, xt = paths[0].state(t)
            xr = sum(w * paths[k].position(t) for w, k in zip(STENCIL_W, STENCIL)) / delta
            g = jet(model, x, xt, 2).Lvv
            J = np.column_stack([xt, xr])
            G = J.T @ g @ J
            meas = float(weight_jet(model, x)[0]) * abs(float(np.linalg.det(J)))
            rows.append((t, r, G[0, 0], G[0, 1], G[1, 1], meas))
    return np.array(rows)


def _future_causal_directions(model: ModelSpec, x, count: int = 72, refine: int = 30) -> list[np.ndarray]:
    """Euclidean-unit future causal vectors at x, including the two null directions."""
    angles = np.linspace(0.0, 2.0 * math.pi, count, endpoint=False)

    def ok(a):
        return is_future_causal(model, x, np.array([math.cos(a), math.sin(a)]))

    flags = [ok(a) for a in angles]
    out = [np.array([math.cos(a), math.sin(a)]) for a, f in zip(angles, flags) if f]
    for i in range(count):
        a, b = angles[i], angles[(i + 1) % count] + (2 * math.pi if i == count - 1 else 0.0)
        if flags[i] != flags[(i + 1) % count]:
            inside, outside = (a, b) if flags[i] else (b, a)
            for _ in range(refine):
                mid = 0.5 * (inside + outside)
                if ok(mid):
                    inside = mid
                else:
                    outside = mid
            out.append(np.array([math.cos(inside), math.sin(inside)]))
    return out


def splitting_suite(
    model: ModelSpec,
    line: LineSpec,
    p: float = -2.0,
    radius: float = 0.5,
    step: float = 0.05,
    seed: int = 0,
    translation_samples: int = 200,
    geodesic_samples: int = 8,
    berwald_checks: bool = True,
    fld: BusemannField | None = None,
) -> SplittingReport:
    if model.n != 2:
        raise ValueError("the splitting suite is implemented for n = 2")
    rng = np.random.default_rng(seed)
    half = radius + 0.1
    if fld is None:
        k = int(round(half / step))
        xs = line.base[0] + step * np.arange(-k, k + 1)
        ys = line.base[1] + step * np.arange(-k, k + 1)
        fld = busemann_field(line, xs, ys)
    checks = []

    # b + reverse b on the tube
    pts = fld.grid.reshape(-1, 2)
    mask = tube_mask(line, pts, radius)
    s = (fld.values + fld.reverse_values).reshape(-1)[mask]
    checks.append(_record("sum_check", float(np.max(np.abs(s))), 1e-6, f"min={s.min():.3e} max={s.max():.3e}"))

    fa = field_analysis(fld, p=p, radius=radius)
    checks.append(_record("unit_lapse", fa.lapse_residual, 1e-5, "max |F*(-db) - 1|"))
    checks.append(_record("hessian_vanishing", fa.hessian_residual, 1e-5, f"semiconcavity bound {fa.semiconcavity_bound:.3e}"))
    checks.append(_record("p_harmonicity", fa.p_harm_residual, 1e-5, f"p={p:g}"))

    geo = _Geometry(model, line, fld)
    rs = np.linspace(-0.8 * radius, 0.8 * radius, 9)
    ts = np.linspace(-0.8 * radius, 0.8 * radius, 5)
    pb = _pullback(geo, rs, ts)
    sigma_rows = np.array([(r, *geo.sigma(r)) for r in rs])

    # metric product: -dt^2 + h(r) dr^2 with h independent of t
    unit = float(np.max(np.abs(pb[:, 2] + 1.0)))
    off = float(np.max(np.abs(pb[:, 3])))
    h0 = {r: g for t, r, _, _, g, _ in pb if t == ts[len(ts) // 2]}
    drift = float(max(abs(g - h0[r]) for t, r, _, _, g, _ in pb))
    checks.append(_record("metric_product", max(unit, off, drift), 1e-5, f"unit={unit:.2e} off_block={off:.2e} h_t_drift={drift:.2e}"))
    if _has_product_form(model):
        tape = _product_tape(model)

        def hfun(x):
            return float(tape.run(np.asarray(x, float))[0])

        worst = 0.0
        for r in rs:
            sig = geo.sigma(r)
            T = geo.sigma_tangent(r)
            hc = -T[0] ** 2 + hfun(sig) * T[1] ** 2
            for t, rr, _, _, g, _ in pb:
                if rr == r:
                    worst = max(worst, abs(g - hc))
        checks.append(_record("h_recovery", worst, 1e-5, "pullback h vs the model's fiber metric"))

    # measure factorization
    m0 = {r: m for t, r, _, _, _, m in pb if t == ts[len(ts) // 2]}
    mdrift = float(max(abs(m - m0[r]) for t, r, _, _, _, m in pb))
    checks.append(_record("measure_product", mdrift, 1e-5, "t-drift of sigma(Theta)|det dTheta|"))

    # Berwald-only checks
    report = berwald_diagnostic(model, line.base, 10)
    is_berwald = report.is_berwald_numerically
    if not berwald_checks:
        checks.append(_skipped("translation_isometry", 1e-7, "not requested"))
        checks.append(_skipped("geodesic_split", 1e-5, "not requested"))
    elif not is_berwald:
        reason = f"model is not Berwald (fiber variation {report.max_fiber_variation:.2e})"
        checks.append(_skipped("translation_isometry", 1e-7, reason))
        checks.append(_skipped("geodesic_split", 1e-5, reason))
    else:
        checks.append(_translation_check(geo, rng, translation_samples, 0.6 * radius))
        checks.append(_geodesic_split_check(geo, rng, geodesic_samples, 0.4 * radius))

    # Sigma transversal to future causal vectors
    margin = math.inf
    tangent_L = []
    for r in rs:
        sig = geo.sigma(r)
        db = geo.spl.derivatives(sig, 1)[1]
        for u in _future_causal_directions(model, sig):
            margin = min(margin, float(db @ u))
        T = geo.sigma_tangent(r)
        tangent_L.append(lagrangian(model, sig, T) if in_domain(model, sig, T) else math.nan)
    Ls = [x for x in tangent_L if math.isfinite(x)]
    detail = f"margin={margin:.3e}; min L on T(Sigma)=" + (f"{min(Ls):.3e}" if Ls else "n/a (outside domain)")
    checks.append(_record("sigma_causal", -margin, -1e-12, detail))

    return SplittingReport(tuple(checks), fld, is_berwald, sigma_rows, pb)


def _tube_point(geo: _Geometry, rng, reach: float) -> np.ndarray:
    return geo.line.base + rng.uniform(-reach, reach) * geo.d + rng.uniform(-reach, reach) * geo.nrm


def _translation_check(geo: _Geometry, rng, count: int, reach: float, delta: float = 1e-3) -> CheckRecord:
    model = geo.model
    worst = 0.0
    times = (0.5, 1.0, 2.0)
    for i in range(count):
        t = times[i % 3]
        y = _tube_point(geo, rng, reach)
        v = sample_future_timelike(model, y, rng, 1)[0]
        v = v / np.linalg.norm(v)
        dphi = sum(w * geo.flow(y + k * delta * v, t) for w, k in zip(STENCIL_W, STENCIL)) / delta
        ref = geo.flow(y, t)
        worst = max(worst, abs(lagrangian(model, ref, dphi) - lagrangian(model, y, v)))
    return _record("translation_isometry", worst, 1e-7, f"{count} samples, t in {times}")


def _geodesic_split_check(geo: _Geometry, rng, count: int, reach: float, hs: float = 0.02) -> CheckRecord:
    model = geo.model
    worst_t = worst_r = 0.0
    centers = (0.05, 0.1, 0.15)

    def h_of(r, delta=1e-3):
        sig = geo.sigma(r)
        T = geo.sigma_tangent(r, delta)
        return float(T @ jet(model, sig, geo.grad(sig), 2).Lvv @ T)

    for _ in range(count):
        y = _tube_point(geo, rng, reach)
        w = sample_future_timelike(model, y, rng, 1, spread=1.2)[0]
        w = 0.5 * w / np.linalg.norm(w)
        path = integrate_geodesic(model, y, w, (0.0, 0.2))
        for c in centers:
            svals = [c + k * hs for k in (-2, -1, 0, 1, 2)]
            tv, rv = [], []
            for s in svals:
                g = path.position(s)
                tb = geo.b(g)
                tv.append(tb)
                rv.append(float((geo.flow(g, -tb) - geo.line.base) @ geo.nrm))
            tdd = (-tv[0] + 16 * tv[1] - 30 * tv[2] + 16 * tv[3] - tv[4]) / (12 * hs * hs)
            rd = (rv[0] - 8 * rv[1] + 8 * rv[3] - rv[4]) / (12 * hs)
            rdd = (-rv[0] + 16 * rv[1] - 30 * rv[2] + 16 * rv[3] - rv[4]) / (12 * hs * hs)
            r0 = rv[2]
            dh = 1e-2
            hp = (h_of(r0 - 2 * dh) - 8 * h_of(r0 - dh) + 8 * h_of(r0 + dh) - h_of(r0 + 2 * dh)) / (12 * dh)
            res_r = abs(rdd + 0.5 * hp / h_of(r0) * rd * rd)
            worst_t = max(worst_t, abs(tdd))
            worst_r = max(worst_r, res_r)
    return _record("geodesic_split", max(worst_t, worst_r), 1e-5, f"R-part {worst_t:.2e}, Sigma-part {worst_r:.2e}")
