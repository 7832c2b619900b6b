"""Weight function psi(v) = 1/2 log(-det g(v)) - log sigma(x) and its geodesic derivatives.

Derivatives along the geodesic with initial velocity v come from the chain
rule on the jets of L and log sigma; the second derivative needs jets of
order four.
"""

from __future__ import annotations

import numpy as np

from .core import Jet, ModelSpec, jet, nonlinear_from_jet, spray_derivatives, spray_from_jet, weight_jet


def psi_value(j: Jet, phi: float) -> float:
    return 0.5 * float(np.log(-np.linalg.det(j.Lvv))) - phi


def psi_partials(j: Jet, gi: np.ndarray, dphi: np.ndarray):
    """First partials (psi_x, psi_v); jet of order >= 3."""
    px = 0.5 * np.einsum("ij,jia->a", gi, j.Lvvx) - dphi
    pv = 0.5 * np.einsum("ij,jia->a", gi, j.Lvvv)
    return px, pv


def psi_second_partials(j: Jet, gi: np.ndarray, ddphi: np.ndarray):
    """(psi_xx, psi_xv, psi_vv) with psi_xv[a, b] = d2 psi / dx^a dv^b; jet of order 4."""
    gx, gv = j.Lvvx, j.Lvvv
    Ax = np.einsum("ij,jka->ika", gi, gx)  # g^{-1} dg/dx^a
    Av = np.einsum("ij,jka->ika", gi, gv)
    pxx = 0.5 * (-np.einsum("ijb,jia->ab", Ax, Ax) + np.einsum("ij,jiab->ab", gi, j.Lvvxx)) - ddphi
    pxv = 0.5 * (-np.einsum("ijb,jia->ab", Av, Ax) + np.einsum("ij,jiba->ab", gi, j.Lvvvx))
    pvv = 0.5 * (-np.einsum("ijb,jia->ab", Av, Av) + np.einsum("ij,jiab->ab", gi, j.Lvvvv))
    return pxx, pxv, pvv


def psi_along_geodesic(model: ModelSpec, x, v, order: int = 2):
    """(psi, psi', psi'') at t=0 along the geodesic with initial velocity v.

    With order=1 only psi and psi' are computed (psi'' is None).
    """
    j = jet(model, x, v, 4 if order >= 2 else 3)
    _, phi, dphi, ddphi = weight_jet(model, x)
    G, gi = spray_from_jet(j)
    psi = psi_value(j, phi)
    px, pv = psi_partials(j, gi, dphi)
    a = -G
    d1 = float(px @ j.v + pv @ a)
    if order < 2:
        return psi, d1, None
    N = nonlinear_from_jet(j, gi, G)
    Gx, Gv, _, _ = spray_derivatives(j, gi, G, N)
    adot = -(Gx @ j.v + Gv @ a)
    pxx, pxv, pvv = psi_second_partials(j, gi, ddphi)
    d2 = float(j.v @ pxx @ j.v + 2.0 * j.v @ pxv @ a + a @ pvv @ a + px @ a + pv @ adot)
    return psi, d1, d2
