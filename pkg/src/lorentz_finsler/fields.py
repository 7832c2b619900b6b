"""Scalar fields on coordinate charts with derivatives up to third order."""

from __future__ import annotations

from typing import Protocol, Sequence

import numpy as np

from .dsl import expr as E
from .dsl.parser import parse
from .dsl.tape import compile_tape
from .errors import GridTooCoarse


class ScalarField(Protocol):
    n: int

    def derivatives(self, x, order: int = 2) -> tuple:
        """(value, gradient, hessian, third) with unused orders returned as None."""
        ...


class ExprField:
    """A field given by an expression in x1..xn, differentiated symbolically."""

    def __init__(self, expr: E.Expr | str, n: int, parameters: dict | None = None):
        self.expr = parse(expr, parameters) if isinstance(expr, str) else expr
        self.n = n
        xs = [f"x{i + 1}" for i in range(n)]
        if E.free_variables(self.expr) - set(xs):
            raise ValueError("scalar fields may only depend on position variables")
        d1 = [E.differentiate(self.expr, a) for a in xs]
        d2 = [E.differentiate(d, b) for d in d1 for b in xs]
        d3 = [E.differentiate(d, c) for d in d2 for c in xs]
        self._tapes = {
            0: compile_tape([self.expr], xs),
            1: compile_tape([self.expr] + d1, xs),
            2: compile_tape([self.expr] + d1 + d2, xs),
            3: compile_tape([self.expr] + d1 + d2 + d3, xs),
        }

    def __repr__(self) -> str:
        return f"ExprField({E.to_string(self.expr)!r})"

    def __call__(self, x) -> float:
        return float(self._tapes[0].run(np.asarray(x, float))[0])

    def derivatives(self, x, order: int = 2):
        n = self.n
        out = self._tapes[order].run(np.asarray(x, float))
        val = float(out[0])
        grad = out[1 : 1 + n] if order >= 1 else None
        hess = out[1 + n : 1 + n + n * n].reshape(n, n) if order >= 2 else None
        third = out[1 + n + n * n :].reshape(n, n, n) if order >= 3 else None
        return val, grad, hess, third


class NegatedField:
    def __init__(self, base):
        self.base = base
        self.n = base.n

    def __call__(self, x) -> float:
        return -self.base(x)

    def derivatives(self, x, order: int = 2):
        parts = self.base.derivatives(x, order)
        return tuple(None if p is None else -p for p in parts)


def as_field(f, n: int):
    if isinstance(f, (str, E.Expr)):
        return ExprField(f, n)
    if hasattr(f, "derivatives"):
        return f
    raise TypeError(f"cannot use {type(f).__name__} as a scalar field")


class SplineField:
    """Quintic tensor-product spline through values on a rectilinear 2-D grid."""

    def __init__(self, xs: Sequence[float], ys: Sequence[float], values, max_step: float = 0.05):
        from scipy.interpolate import RectBivariateSpline

        xs = np.asarray(xs, float)
        ys = np.asarray(ys, float)
        values = np.asarray(values, float)
        if values.shape != (len(xs), len(ys)):
            raise ValueError("values must have shape (len(xs), len(ys))")
        step = max(np.max(np.diff(xs)), np.max(np.diff(ys)))
        if step > max_step + 1e-12:
            raise GridTooCoarse(f"grid step {step:g} exceeds {max_step:g}")
        if len(xs) < 6 or len(ys) < 6:
            raise GridTooCoarse("quintic interpolation needs at least 6 nodes per axis")
        self.n = 2
        self.xs, self.ys = xs, ys
        self._spl = RectBivariateSpline(xs, ys, values, kx=5, ky=5, s=0)

    def __call__(self, x) -> float:
        return float(self._spl(x[0], x[1], grid=False))

    def _d(self, x, i, j) -> float:
        return float(self._spl(x[0], x[1], dx=i, dy=j, grid=False))

    def derivatives(self, x, order: int = 2):
        val = self._d(x, 0, 0)
        grad = hess = third = None
        if order >= 1:
            grad = np.array([self._d(x, 1, 0), self._d(x, 0, 1)])
        if order >= 2:
            hxy = self._d(x, 1, 1)
            hess = np.array([[self._d(x, 2, 0), hxy], [hxy, self._d(x, 0, 2)]])
        if order >= 3:
            t = np.empty((2, 2, 2))
            for i in range(2):
                for j in range(2):
                    for k in range(2):
                        nx = (i == 0) + (j == 0) + (k == 0)
                        t[i, j, k] = self._d(x, nx, 3 - nx)
            third = t
        return val, grad, hess, third
