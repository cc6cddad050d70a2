"""Quadrature rules on the reference triangle and on edges.

Points are stored in barycentric coordinates, weights sum to the area of the
reference triangle (1/2).  An integral over a physical triangle E is

    int_E f dx  =  2*|E| * sum_i w_i f(x_i).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class QuadratureRule:
    """Symmetric quadrature rule on the reference triangle."""

    degree: int
    points: np.ndarray   # (nq, 3) barycentric coordinates
    weights: np.ndarray  # (nq,) summing to 1/2


def _sym_rule(degree, groups):
    """Build a rule from symmetric orbit groups (a, weight-per-point)."""
    pts, wts = [], []
    for kind, a, w in groups:
        if kind == "center":
            pts.append((1 / 3, 1 / 3, 1 / 3))
            wts.append(w)
        elif kind == "vertex3":
            b = (1.0 - a) / 2.0
            for perm in ((a, b, b), (b, a, b), (b, b, a)):
                pts.append(perm)
                wts.append(w)
        else:
            raise ValueError(kind)
    pts = np.asarray(pts, dtype=float)
    wts = np.asarray(wts, dtype=float) * 0.5  # normalize to reference area
    return QuadratureRule(degree, pts, wts)


# Symmetric Gauss rules (weights in "sum to one" normalization before scaling).
_RULES = {
    1: _sym_rule(1, [("center", None, 1.0)]),
    2: _sym_rule(2, [("vertex3", 2 / 3, 1 / 3)]),
    4: _sym_rule(4, [
        ("vertex3", 0.108103018168070, 0.223381589678011),
        ("vertex3", 0.816847572980459, 0.109951743655322),
    ]),
    5: _sym_rule(5, [
        ("center", None, 0.225),
        ("vertex3", 0.059715871789770, 0.132394152788506),
        ("vertex3", 0.797426985353087, 0.125939180544827),
    ]),
}


def _duffy_rule(degree: int) -> QuadratureRule:
    """Collapsed tensor-product Gauss rule, exact to the requested degree."""
    n = max(1, (degree + 2 + 1) // 2)
    x, wx = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    wx = 0.5 * wx
    pts = []
    wts = []
    for xi, wi in zip(x, wx):
        for yj, wj in zip(x, wx):
            # map unit square -> triangle: (u, v) -> (u, v(1-u)),  J = 1-u
            px = xi
            py = yj * (1.0 - xi)
            w = wi * wj * (1.0 - xi)
            pts.append((1.0 - px - py, px, py))
            wts.append(w)
    return QuadratureRule(degree, np.asarray(pts), np.asarray(wts))


def triangle_rule(degree: int) -> QuadratureRule:
    """Quadrature rule on the reference triangle, exact for polynomials of
    total degree <= degree."""
    if degree < 1:
        degree = 1
    if degree in _RULES:
        return _RULES[degree]
    if degree == 3:
        return _RULES[4]
    return _duffy_rule(degree)


@dataclass(frozen=True)
class EdgeRule:
    """Gauss rule on the reference edge [0, 1]; weights sum to 1."""

    degree: int
    points: np.ndarray   # (nq,) in [0, 1]
    weights: np.ndarray  # (nq,)


def edge_rule(degree: int) -> EdgeRule:
    n = max(1, (degree + 2) // 2)
    x, w = np.polynomial.legendre.leggauss(n)
    return EdgeRule(degree, 0.5 * (x + 1.0), 0.5 * w)


def monomial_integral(a: int, b: int) -> float:
    """Exact value of int over the reference triangle of x^a y^b."""
    from math import factorial

    return factorial(a) * factorial(b) / factorial(a + b + 2)
