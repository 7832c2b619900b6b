"""Independent reference computations used by the tests (sympy, finite differences)."""

from __future__ import annotations

import numpy as np
import sympy as sp

from lorentz_finsler import core, duality


def levi_civita_oracle(metric_fn, n):
    """Christoffels and the Riemann tensor of a Lorentzian metric, symbolically.

    ``metric_fn(xs)`` returns an n x n sympy Matrix in the coordinates ``xs``.
    Returns callables christoffel(x) -> [i,j,k] and ricci_form(x, v) -> R_ab v^a v^b,
    and jacobi(x, v) -> matrix J with (R(J, v) v)^i = J^i_k J^k.
    """
    xs = sp.symbols(f"x1:{n + 1}", real=True)
    g = metric_fn(xs)
    gi = g.inv()
    Gam = [[[sp.simplify(sum(gi[i, l] * (sp.diff(g[l, j], xs[k]) + sp.diff(g[l, k], xs[j]) - sp.diff(g[j, k], xs[l])) for l in range(n)) / 2)
             for k in range(n)] for j in range(n)] for i in range(n)]
    # R^i_{jkl} = d_k Gam^i_{lj} - d_l Gam^i_{kj} + Gam^i_{km} Gam^m_{lj} - Gam^i_{lm} Gam^m_{kj}
    Riem = [[[[sp.simplify(
        sp.diff(Gam[i][l][j], xs[k]) - sp.diff(Gam[i][k][j], xs[l])
        + sum(Gam[i][k][m] * Gam[m][l][j] - Gam[i][l][m] * Gam[m][k][j] for m in range(n)))
        for l in range(n)] for k in range(n)] for j in range(n)] for i in range(n)]
    chris = sp.lambdify(xs, Gam, "numpy")
    riem = sp.lambdify(xs, Riem, "numpy")

    def christoffel(x):
        return np.array(chris(*x), dtype=float)

    def jacobi(x, v):
        Rm = np.array(riem(*x), dtype=float)
        # (R(J, v) v)^i = R^i_{jkl} v^j J^k v^l
        return np.einsum("ijkl,j,l->ik", Rm, v, v)

    def ricci_form(x, v):
        return float(np.trace(jacobi(x, v)))

    return christoffel, ricci_form, jacobi


def fd_hessian(f, v, h=1e-3):
    """Fourth-order central finite-difference Hessian."""
    v = np.asarray(v, float)
    n = len(v)
    H = np.zeros((n, n))
    E = np.eye(n)
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for a, ca in ((2, -1), (1, 8), (-1, -8), (-2, 1)):
                for b, cb in ((2, -1), (1, 8), (-1, -8), (-2, 1)):
                    acc += ca * cb * f(v + a * h * E[i] + b * h * E[j])
            H[i, j] = acc / (144 * h * h)
    return H


def fd_gradient(f, x, h=1e-4):
    x = np.asarray(x, float)
    out = np.zeros(len(x))
    for i in range(len(x)):
        e = np.zeros(len(x))
        e[i] = h
        out[i] = (-f(x + 2 * e) + 8 * f(x + e) - 8 * f(x - e) + f(x - 2 * e)) / (12 * h)
    return out


def fd_bochner_first_terms(model, f, x, h=2e-3):
    """Independent finite-difference values of the divergence and d(box) terms for h = -f."""

    def V(y):
        return duality.gradient(model, f, y).grad

    def q(y):
        return -core.lagrangian(model, y, V(y))

    def Y(y):
        g = core.jet(model, y, V(y), 2).Lvv
        return np.linalg.solve(g, fd_gradient(q, y, h))

    def sigma(y):
        return float(core.weight_jet(model, y)[0])

    x = np.asarray(x, float)
    n = model.n
    div = sum(fd_gradient(lambda y: sigma(y) * Y(y)[i], x, h)[i] for i in range(n)) / sigma(x)
    box = lambda y: duality.hessian_and_dalembertian(model, f, y).box_m  # noqa: E731
    v = V(x)
    dbox = (-box(x + 2 * h * v) + 8 * box(x + h * v) - 8 * box(x - h * v) + box(x - 2 * h * v)) / (12 * h)
    return div, dbox
