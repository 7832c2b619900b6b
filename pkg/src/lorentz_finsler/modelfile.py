"""Model files: INI-style text with [model], [line] and [run] sections.

Example::

    [model]
    name = minkowski2
    n = 2
    lagrangian = (-v1^2 + v2^2)/2
    weight = 1
    domain =
    orientation = 1; 0
    parameters =
    product_metric = 1

    [line]
    base = 0, 0
    velocity = 1, 0
    horizon = 4

    [run]
    seed = 0
    samples = 200
    p = -2
    N = inf
    epsilon = 0

Lists of expressions are separated by ';', numeric vectors by ','.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

from .core import ModelSpec
from .dsl import parse
from .errors import ExprSyntaxError, ModelFileError, UnknownVariable


@dataclass(frozen=True)
class LineConfig:
    base: tuple[float, ...]
    velocity: tuple[float, ...]
    horizon: float = 4.0


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    samples: int = 200
    p: float = -2.0
    N: float = math.inf
    epsilon: float = 0.0
    f: str | None = None
    grid: int = 25
    half_width: float = 0.6
    radius: float = 0.5
    tmax: float = 5.0
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ModelFile:
    path: str
    model: ModelSpec
    line: LineConfig | None
    run: RunConfig


def _floats(text: str, what: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise ModelFileError(f"{what}: expected comma-separated numbers, got {text!r}") from exc


def _exprs(text: str) -> list[str]:
    return [t.strip() for t in text.split(";") if t.strip()]


def _parameters(text: str) -> dict[str, float]:
    out = {}
    for item in _exprs(text.replace(",", ";")):
        name, sep, value = item.partition("=")
        if not sep:
            raise ModelFileError(f"parameter {item!r} must look like name=value")
        try:
            out[name.strip()] = float(value)
        except ValueError as exc:
            raise ModelFileError(f"parameter {name.strip()!r} has non-numeric value {value.strip()!r}") from exc
    return out


def parse_model_text(text: str, path: str = "<string>") -> ModelFile:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=path)
    except configparser.Error as exc:
        raise ModelFileError(f"{path}: {exc}") from exc
    if not cp.has_section("model"):
        raise ModelFileError(f"{path}: missing [model] section")
    m = cp["model"]
    try:
        n = int(m.get("n", ""))
    except ValueError as exc:
        raise ModelFileError(f"{path}: [model] n must be an integer") from exc
    if "lagrangian" not in m:
        raise ModelFileError(f"{path}: [model] lagrangian is required")
    params = _parameters(m.get("parameters", ""))
    orient = _exprs(m.get("orientation", ""))
    exprs = [("lagrangian", m["lagrangian"]), ("weight", m.get("weight", "1") or "1")]
    exprs += [("domain", d) for d in _exprs(m.get("domain", ""))]
    exprs += [("orientation", c) for c in orient]
    if m.get("product_metric"):
        exprs.append(("product_metric", m["product_metric"]))
    for key, src in exprs:
        try:
            parse(src, params)
        except (ExprSyntaxError, UnknownVariable) as exc:
            raise ModelFileError(f"{path}: [model] {key}: {exc}", exc.offset) from exc
    try:
        model = ModelSpec.from_strings(
            n,
            m["lagrangian"],
            weight=m.get("weight", "1") or "1",
            domain=_exprs(m.get("domain", "")),
            orientation=orient or None,
            name=m.get("name", Path(path).stem),
            parameters=params,
            product_metric=m.get("product_metric") or None,
        )
    except ValueError as exc:
        raise ModelFileError(f"{path}: {exc}") from exc

    line = None
    if cp.has_section("line"):
        s = cp["line"]
        base = _floats(s.get("base", ""), "[line] base")
        vel = _floats(s.get("velocity", ""), "[line] velocity")
        if len(base) != n or len(vel) != n:
            raise ModelFileError(f"{path}: [line] base and velocity need {n} components")
        horizon = _floats(s.get("horizon", "4"), "[line] horizon")
        if len(horizon) != 1:
            raise ModelFileError(f"{path}: [line] horizon must be one number")
        line = LineConfig(base, vel, horizon[0])

    run = RunConfig()
    if cp.has_section("run"):
        r = cp["run"]
        known = {}
        try:
            for key, conv in (
                ("seed", int), ("samples", int), ("p", float), ("N", float), ("epsilon", float),
                ("grid", int), ("half_width", float), ("radius", float), ("tmax", float),
            ):
                if key in r:
                    known[key] = conv(r[key])
        except ValueError as exc:
            raise ModelFileError(f"{path}: [run] {exc}") from exc
        if "f" in r:
            known["f"] = r["f"]
        extra = {k: v for k, v in r.items() if k not in known}
        run = RunConfig(**known, extra=extra)
    return ModelFile(path, model, line, run)


def load_model_file(path) -> ModelFile:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelFileError(f"cannot read {p}: {exc}") from exc
    return parse_model_text(text, str(p))
