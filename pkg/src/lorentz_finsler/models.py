"""Built-in model spacetimes."""

from __future__ import annotations

from typing import Callable

from .core import ModelSpec

RANDERS_A = 0.3


def minkowski(n: int = 2, weight: str = "1", name: str | None = None) -> ModelSpec:
    terms = " + ".join(f"v{i}^2" for i in range(2, n + 1))
    return ModelSpec.from_strings(
        n,
        f"(-v1^2 + {terms})/2",
        weight=weight,
        name=name or f"minkowski{n}",
        product_metric="1" if n == 2 else None,
    )


def minkowski2() -> ModelSpec:
    return minkowski(2)


def minkowski4() -> ModelSpec:
    return minkowski(4)


def weighted_minkowski2() -> ModelSpec:
    """sigma = exp(-x1)."""
    return minkowski(2, weight="exp(-x1)", name="minkowski2-expweight")


def gaussian_weighted_minkowski2() -> ModelSpec:
    """sigma = exp(-x1^2/2)."""
    return minkowski(2, weight="exp(-x1^2/2)", name="minkowski2-gaussweight")


def warped() -> ModelSpec:
    """-dt^2 + e^{2t} dy^2 (two-dimensional de Sitter slicing)."""
    return ModelSpec.from_strings(2, "(-v1^2 + exp(2*x1)*v2^2)/2", name="warped")


def weighted_warped() -> ModelSpec:
    return ModelSpec.from_strings(
        2, "(-v1^2 + exp(2*x1)*v2^2)/2", weight="exp(0.2*x1 + 0.3*x2)", name="warped-weighted"
    )


def randers(a: float = RANDERS_A) -> ModelSpec:
    """L = -F^2/2 with F = sqrt(v1^2 - v2^2) + a v1, restricted to the cone v1 > |v2|.

    Every vector of the domain is future timelike; the null directions lie on
    the domain boundary.
    """
    return ModelSpec.from_strings(
        2,
        "-(sqrt(v1^2 - v2^2) + a*v1)^2/2",
        domain=["v1 - v2", "v1 + v2"],
        name="randers",
        parameters={"a": a},
    )


def finsler_perturbed(eps: float = 0.1) -> ModelSpec:
    """Position- and direction-dependent quartic perturbation of Minkowski (not Berwald)."""
    return ModelSpec.from_strings(
        2,
        "(-v1^2 + v2^2)/2 + e*exp(x1)*v2^4/(v1^2 + v2^2)",
        name="finsler-perturbed",
        parameters={"e": eps},
    )


PRODUCT_H = "1 + 0.5*sin(x2)^2"


def product(weight: str = "1") -> ModelSpec:
    """-dt^2 + (1 + sin^2(y)/2) dy^2."""
    return ModelSpec.from_strings(
        2, f"(-v1^2 + ({PRODUCT_H})*v2^2)/2", weight=weight, name="product", product_metric=PRODUCT_H
    )


ZOO: dict[str, Callable[[], ModelSpec]] = {
    "minkowski2": minkowski2,
    "minkowski4": minkowski4,
    "minkowski2-expweight": weighted_minkowski2,
    "minkowski2-gaussweight": gaussian_weighted_minkowski2,
    "warped": warped,
    "warped-weighted": weighted_warped,
    "randers": randers,
    "finsler-perturbed": finsler_perturbed,
    "product": product,
}
