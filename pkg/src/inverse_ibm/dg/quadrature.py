"""Quadrature rules on the reference triangle and the unit interval.

The reference triangle has vertices (0, 0), (1, 0), (0, 1); weights sum to 1/2.
Segment rules live on [0, 1] and their weights sum to 1.
"""

from __future__ import annotations

import itertools
from functools import lru_cache
from math import factorial

import numpy as np

# Symmetric (Dunavant) rules: orbit generators in barycentric coordinates.
# Entries are (kind, generator, weight) with weights normalized to area 1.
_SYMMETRIC_RULES = {
    2: [("s21", (1.0 / 6.0,), 1.0 / 3.0)],
    4: [
        ("s21", (0.445948490915965,), 0.223381589678011),
        ("s21", (0.091576213509771,), 0.109951743655322),
    ],
    6: [
        ("s21", (0.249286745170910,), 0.116786275726379),
        ("s21", (0.063089014491502,), 0.050844906370207),
        ("s111", (0.053145049844817, 0.310352451033784), 0.082851075618374),
    ],
    8: [
        ("s3", (), 0.144315607677787),
        ("s21", (0.459292588292723,), 0.095091634267285),
        ("s21", (0.170569307751760,), 0.103217370534718),
        ("s21", (0.050547228317031,), 0.032458497623198),
        ("s111", (0.008394777409958, 0.263112829634638), 0.027230314174435),
    ],
}


def _orbit(kind: str, gen: tuple) -> list[tuple[float, float, float]]:
    if kind == "s3":
        return [(1 / 3, 1 / 3, 1 / 3)]
    if kind == "s21":
        a = gen[0]
        b = 1.0 - 2.0 * a
        return [(a, a, b), (a, b, a), (b, a, a)]
    a, b = gen
    c = 1.0 - a - b
    return sorted(set(itertools.permutations((a, b, c))))


def monomial_integral(i: int, j: int) -> float:
    """Exact integral of x**i * y**j over the reference triangle."""
    return factorial(i) * factorial(j) / factorial(i + j + 2)


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric rule exact for polynomials of total degree ``degree`` (<= 8).

    Returns ``(points, weights)`` with ``points`` of shape (nq, 2).  The tabulated
    weights carry 15 digits; they are re-fitted against the exact moments so the
    rule is exact to rounding.
    """
    if degree < 0 or degree > 8:
        raise ValueError(f"no triangle rule tabulated for degree {degree}")
    key = min(d for d in _SYMMETRIC_RULES if d >= max(degree, 1))
    bary = []
    for kind, gen, _ in _SYMMETRIC_RULES[key]:
        bary.extend(_orbit(kind, gen))
    bary = np.asarray(bary)
    pts = bary[:, 1:3].copy()
    w0 = np.concatenate(
        [np.full(len(_orbit(kind, gen)), wt) for kind, gen, wt in _SYMMETRIC_RULES[key]]
    ) / 2.0

    rows, rhs = [], []
    for i in range(key + 1):
        for j in range(key + 1 - i):
            rows.append(pts[:, 0] ** i * pts[:, 1] ** j)
            rhs.append(monomial_integral(i, j))
    V = np.asarray(rows)
    dw, *_ = np.linalg.lstsq(V, np.asarray(rhs) - V @ w0, rcond=None)
    weights = w0 + dw
    pts.setflags(write=False)
    weights.setflags(write=False)
    return pts, weights


@lru_cache(maxsize=None)
def gauss_segment(npts: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre rule with ``npts`` points mapped to [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(npts)
    s = 0.5 * (x + 1.0)
    w = 0.5 * w
    s.setflags(write=False)
    w.setflags(write=False)
    return s, w
