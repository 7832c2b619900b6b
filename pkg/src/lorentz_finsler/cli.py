"""Command-line front end.

Exit codes: 0 all checks passed, 1 a check failed or a computation did not
converge, 2 the input (model file, flags, parameters) was invalid.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .busemann import busemann_field, field_analysis, tube_mask, validate_line
from .core import sample_future_timelike
from .dynamics import integrate_geodesic
from .errors import LorentzFinslerError, ModelFileError, OutOfEpsilonRange
from .modelfile import ModelFile, load_model_file
from .splitting import splitting_suite
from .suites import CheckRow, curvature_trace_check, identity_suite, model_invariants
from .weighted import comparison_sweep, completeness_integrand, epsilon_constant

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2
LOG_ENV = "LORENTZ_FINSLER_LOG"

log = logging.getLogger("lorentz_finsler")


class InputError(Exception):
    pass


# ---------------------------------------------------------------- output


def _num(x):
    if x is None:
        return None
    if isinstance(x, (bool, str)):
        return x
    if isinstance(x, (int, np.integer)):
        return int(x)
    x = float(x)
    if math.isfinite(x):
        return x
    return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    return _num(obj)


def _cell(x) -> str:
    if isinstance(x, str):
        return x
    v = _num(x)
    return "" if v is None else (v if isinstance(v, str) else repr(v))


class Reporter:
    """Writes CSV and JSON reports with fixed formatting into an output directory."""

    def __init__(self, out: str | None, stream=None):
        self.out = Path(out) if out else None
        self.stream = stream or sys.stdout
        if self.out:
            self.out.mkdir(parents=True, exist_ok=True)

    def say(self, text: str):
        self.stream.write(text + "\n")

    def csv(self, name: str, header, rows):
        if not self.out:
            return
        with open(self.out / name, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_cell(c) for c in r])

    def json(self, name: str, obj):
        if not self.out:
            return
        text = json.dumps(_jsonable(obj), indent=2, sort_keys=True)
        (self.out / name).write_text(text + "\n", encoding="utf-8")


def _check_dict(r: CheckRow) -> dict:
    d = dict(name=r.check, samples=r.samples, max_residual=r.max_residual, threshold=r.threshold, verdict=r.verdict)
    d.update(r.extra)
    return d


def _print_rows(rep: Reporter, rows):
    for r in rows:
        extra = f"  {r.extra['error']}" if "error" in r.extra else ""
        rep.say(f"{r.check:28s} {r.verdict:7s} n={r.samples:<5d} max={_cell(r.max_residual):>24s} tol={r.threshold:g}{extra}")


def _summary(command: str, mf: ModelFile, seed: int, checks: list[dict], **more) -> dict:
    failed = any(c["verdict"] == "fail" for c in checks)
    return dict(
        command=command,
        model=mf.model.name,
        n=mf.model.n,
        seed=seed,
        status="fail" if failed else "pass",
        exit_code=EXIT_FAIL if failed else EXIT_OK,
        checks=checks,
        **more,
    )


def _vec(text: str, n: int, what: str) -> np.ndarray:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise InputError(f"{what}: expected comma-separated numbers") from exc
    if len(vals) != n:
        raise InputError(f"{what}: expected {n} components, got {len(vals)}")
    return np.array(vals)


def _require_line(mf: ModelFile):
    if mf.line is None:
        raise InputError(f"{mf.path}: this command needs a [line] section")
    return mf.line


# ---------------------------------------------------------------- commands


def cmd_validate(mf: ModelFile, args, rep: Reporter) -> int:
    seed = args.seed if args.seed is not None else mf.run.seed
    rows = model_invariants(mf.model, args.samples or mf.run.samples, seed)
    _print_rows(rep, rows)
    checks = [_check_dict(r) for r in rows]
    rep.csv("validate.csv", ["check", "samples", "max_residual", "threshold", "verdict"],
            [(r.check, r.samples, r.max_residual, r.threshold, r.verdict) for r in rows])
    summary = _summary("validate", mf, seed, checks)
    rep.json("validate.json", summary)
    return summary["exit_code"]


TERM_COLUMNS = ("term_div", "term_dbox", "term_ric", "term_hs")


def cmd_identities(mf: ModelFile, args, rep: Reporter) -> int:
    seed = args.seed if args.seed is not None else mf.run.seed
    samples = args.samples or mf.run.samples
    rows = identity_suite(mf.model, mf.run.f, samples, seed)
    rows.append(curvature_trace_check(mf.model, max(samples // 4, 1), seed + 5))
    _print_rows(rep, rows)
    rep.csv(
        "identities.csv",
        ["check", "samples", "max_residual", "threshold", "verdict", *TERM_COLUMNS],
        [(r.check, r.samples, r.max_residual, r.threshold, r.verdict, *(r.extra.get(k) for k in TERM_COLUMNS)) for r in rows],
    )
    summary = _summary("identities", mf, seed, [_check_dict(r) for r in rows])
    rep.json("identities.json", summary)
    return summary["exit_code"]


def cmd_geodesic(mf: ModelFile, args, rep: Reporter) -> int:
    model = mf.model
    x = _vec(args.start, model.n, "--from")
    v = _vec(args.vel, model.n, "--vel")
    span = _vec(args.tspan, 2, "--tspan")
    if not span[0] <= 0.0 <= span[1] or span[0] == span[1]:
        raise InputError("--tspan a,b must satisfy a <= 0 <= b and a < b")
    path = integrate_geodesic(model, x, v, tuple(span))
    ts = np.linspace(span[0], span[1], args.points)
    rows = []
    L0 = path.lagrangian_drift()
    for t in ts:
        p, w = path.state(t)
        rows.append((t, *p, *w))
    n = model.n
    rep.csv("geodesic.csv", ["t", *(f"x{i + 1}" for i in range(n)), *(f"v{i + 1}" for i in range(n))], rows)
    residual = max(path.residual(t) for t in ts[1:-1]) if len(ts) > 2 else 0.0
    checks = [
        dict(name="lagrangian_drift", samples=len(ts), max_residual=L0, threshold=1e-8, verdict="pass" if L0 <= 1e-8 else "fail"),
        dict(name="geodesic_residual", samples=max(len(ts) - 2, 0), max_residual=residual, threshold=1e-6, verdict="pass" if residual <= 1e-6 else "fail"),
    ]
    for c in checks:
        rep.say(f"{c['name']:28s} {c['verdict']:7s} max={_cell(c['max_residual'])}")
    end = path.state(span[1])
    rep.say("endpoint " + " ".join(_cell(c) for c in end[0]))
    summary = _summary("geodesic", mf, 0, checks, start=x, velocity=v, t_span=span, endpoint=end[0], end_velocity=end[1])
    rep.json("geodesic.json", summary)
    return summary["exit_code"]


def _line(mf: ModelFile):
    cfg = _require_line(mf)
    return validate_line(mf.model, cfg.base, cfg.velocity, cfg.horizon)


def _grid(mf: ModelFile, line, points: int, half_width: float):
    xs = line.base[0] + np.linspace(-half_width, half_width, points)
    ys = line.base[1] + np.linspace(-half_width, half_width, points)
    return xs, ys


def _field_rows(fld):
    rows = []
    for i, x1 in enumerate(fld.xs):
        for j, x2 in enumerate(fld.ys):
            b, br = fld.values[i, j], fld.reverse_values[i, j]
            rows.append((x1, x2, b, br, b + br, fld.tail[i, j], fld.horizon_used[i, j]))
    return rows


FIELD_HEADER = ["x1", "x2", "b", "b_rev", "sum", "tail_estimate", "horizon"]


def cmd_busemann(mf: ModelFile, args, rep: Reporter) -> int:
    if mf.model.n != 2:
        raise InputError("the busemann command samples 2-dimensional models")
    line = _line(mf)
    points = args.grid or mf.run.grid
    half = args.half_width if args.half_width is not None else mf.run.half_width
    xs, ys = _grid(mf, line, points, half)
    fld = busemann_field(line, xs, ys)
    rep.csv("busemann.csv", FIELD_HEADER, _field_rows(fld))
    mask = tube_mask(line, fld.grid.reshape(-1, 2), mf.run.radius)
    s = (fld.values + fld.reverse_values).reshape(-1)[mask]
    checks = [
        dict(name="sum_check", samples=int(mask.sum()), max_residual=float(np.max(np.abs(s))), threshold=1e-6,
             min_sum=float(s.min()), verdict="pass" if s.min() >= -1e-8 and s.max() <= 1e-6 else "fail"),
        dict(name="monotone_in_horizon", samples=int(fld.values.size), max_residual=fld.monotone_violation, threshold=1e-9,
             verdict="pass" if fld.monotone_violation <= 1e-9 else "fail"),
    ]
    p = args.p if args.p is not None else mf.run.p
    try:
        fa = field_analysis(fld, p=p, radius=mf.run.radius)
    except LorentzFinslerError as exc:
        checks.append(dict(name="field_analysis", samples=0, max_residual=None, threshold=1e-5, verdict="skipped", detail=str(exc)))
    else:
        for name, val in (("unit_lapse", fa.lapse_residual), ("hessian_vanishing", fa.hessian_residual), ("p_harmonicity", fa.p_harm_residual)):
            checks.append(dict(name=name, samples=len(fa.points), max_residual=val, threshold=1e-5, verdict="pass" if val <= 1e-5 else "fail"))
    for c in checks:
        rep.say(f"{c['name']:28s} {c['verdict']:7s} max={_cell(c['max_residual'])}")
    summary = _summary("busemann", mf, 0, checks, grid=dict(points=points, half_width=half), p=p)
    rep.json("busemann.json", summary)
    return summary["exit_code"]


def _spec(mf: ModelFile, N, eps):
    N = N if N is not None else mf.run.N
    eps = eps if eps is not None else mf.run.epsilon
    try:
        return epsilon_constant(mf.model.n, N, eps)
    except OutOfEpsilonRange as exc:
        raise InputError(str(exc)) from exc


def cmd_split(mf: ModelFile, args, rep: Reporter) -> int:
    if mf.model.n != 2:
        raise InputError("the split command is implemented for 2-dimensional models")
    seed = args.seed if args.seed is not None else mf.run.seed
    line = _line(mf)
    p = args.p if args.p is not None else mf.run.p
    spec = _spec(mf, args.N, args.eps)
    report = splitting_suite(mf.model, line, p=p, radius=mf.run.radius, seed=seed, berwald_checks=not args.no_berwald)
    fld = report.field
    rep.csv("split_field.csv", FIELD_HEADER, _field_rows(fld))
    rep.csv("split_h.csv", ["t", "r", "G_tt", "G_tr", "G_rr", "measure"], report.pullback.tolist())
    rep.csv("split_sigma.csv", ["r", "x1", "x2"], report.sigma.tolist())
    growth = []
    T = 0.5
    while T <= line.T + 1e-12:
        growth.append(dict(T=T, integral=completeness_integrand(mf.model, line.eta, T, spec)))
        T *= 2.0
    checks = [dict(name=c.name, max_residual=c.max_residual, threshold=c.threshold, verdict=c.verdict, detail=c.detail) for c in report.checks]
    for c in report.checks:
        rep.say(f"{c.name:28s} {c.verdict:7s} max={_cell(c.max_residual):>24s} {c.detail}")
    summary = _summary(
        "split", mf, seed, checks, p=p, N=spec.N, epsilon=spec.epsilon, berwald=report.berwald,
        completeness=growth, line=dict(base=line.base, velocity=line.velocity, horizon=line.T),
    )
    rep.json("split.json", summary)
    return summary["exit_code"]


def cmd_compare(mf: ModelFile, args, rep: Reporter) -> int:
    model = mf.model
    seed = args.seed if args.seed is not None else mf.run.seed
    spec = _spec(mf, args.N, args.eps)
    tmax = args.tmax if args.tmax is not None else mf.run.tmax
    z = np.array(mf.line.base) if mf.line else np.zeros(model.n)
    rng = np.random.default_rng(seed)
    dirs = sample_future_timelike(model, z, rng, args.directions)
    ts = np.linspace(tmax / args.times, tmax, args.times)
    try:
        rows = comparison_sweep(model, z, spec, ts, dirs)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    out = []
    for k, r in enumerate(rows):
        out.append((k // len(ts), r.t, *r.x, r.lhs, r.rhs, r.slack))
    rep.csv("compare.csv", ["direction", "t", *(f"x{i + 1}" for i in range(model.n)), "lhs", "rhs", "slack"], out)
    worst = min(r.slack for r in rows)
    check = dict(name="comparison", samples=len(rows), max_residual=max(0.0, -worst), threshold=1e-7,
                 min_slack=worst, verdict="pass" if worst >= -1e-7 else "fail")
    rep.say(f"{'comparison':28s} {check['verdict']:7s} n={len(rows)} min_slack={_cell(worst)}")
    summary = _summary("compare", mf, seed, [check], N=spec.N, epsilon=spec.epsilon, c=spec.c, tmax=tmax, origin=z)
    rep.json("compare.json", summary)
    return summary["exit_code"]


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lorentz-finsler", description="Lorentz-Finsler geometry engine")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("file", help="model file")
        p.add_argument("--out", help="directory for CSV/JSON reports")
        if seed:
            p.add_argument("--seed", type=int, default=None, help="overrides [run] seed")

    p = sub.add_parser("validate", help="sample the model invariants")
    common(p)
    p.add_argument("--samples", type=int, default=None)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("identities", help="run the pointwise identity suites")
    common(p)
    p.add_argument("--samples", type=int, default=None)
    p.set_defaults(func=cmd_identities)

    p = sub.add_parser("geodesic", help="integrate one geodesic")
    common(p, seed=False)
    p.add_argument("--from", dest="start", required=True, help="start point, comma separated")
    p.add_argument("--vel", required=True, help="initial velocity, comma separated")
    p.add_argument("--tspan", default="0,1", help="a,b with a <= 0 <= b")
    p.add_argument("--points", type=int, default=11, help="number of output samples")
    p.set_defaults(func=cmd_geodesic)

    p = sub.add_parser("busemann", help="Busemann function of the [line] on a grid")
    common(p, seed=False)
    p.add_argument("--grid", type=int, default=None, help="points per axis")
    p.add_argument("--half-width", type=float, default=None)
    p.add_argument("--p", type=float, default=None)
    p.set_defaults(func=cmd_busemann)

    p = sub.add_parser("split", help="run the splitting suite around the [line]")
    common(p)
    p.add_argument("--p", type=float, default=None)
    p.add_argument("--N", type=float, default=None)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--no-berwald", action="store_true", help="skip the Berwald-only checks")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("compare", help="comparison sweep for tau from the [line] base point")
    common(p)
    p.add_argument("--N", type=float, default=None)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--tmax", type=float, default=None)
    p.add_argument("--directions", type=int, default=5)
    p.add_argument("--times", type=int, default=20)
    p.set_defaults(func=cmd_compare)
    return ap


def main(argv=None, stream=None) -> int:
    logging.basicConfig(level=os.environ.get(LOG_ENV, "WARNING").upper(), stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    err = sys.stderr
    try:
        mf = load_model_file(args.file)
    except ModelFileError as exc:
        err.write(f"error: {exc}\n")
        if exc.offset is not None:
            err.write(f"offset: {exc.offset}\n")
        return EXIT_INPUT
    rep = Reporter(args.out, stream)
    try:
        return args.func(mf, args, rep)
    except InputError as exc:
        err.write(f"error: {exc}\n")
        return EXIT_INPUT
    except LorentzFinslerError as exc:
        err.write(f"error: {type(exc).__name__}: {exc}\n")
        rep.json(f"{args.command}.json", dict(command=args.command, model=mf.model.name, status="error",
                                              exit_code=EXIT_FAIL, error=type(exc).__name__, message=str(exc)))
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
