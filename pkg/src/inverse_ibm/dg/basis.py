"""Nodal Lagrange bases on the reference triangle and the unit interval."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

# Local edge k runs from local vertex k to local vertex (k + 1) % 3.
REFERENCE_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def edge_to_reference(edge: int, s: np.ndarray) -> np.ndarray:
    """Map the edge parameter ``s`` in [0, 1] onto local edge ``edge``."""
    s = np.asarray(s, dtype=float)
    a = REFERENCE_VERTICES[edge]
    b = REFERENCE_VERTICES[(edge + 1) % 3]
    return a + s[..., None] * (b - a)


class LagrangeTriangle:
    """Degree-``p`` nodal basis on equispaced nodes of the reference triangle.

    Nodes are ordered lexicographically: ``(i/p, j/p)`` for ``j = 0..p`` and
    ``i = 0..p-j``.  Equispaced nodes put ``p + 1`` nodes on every edge, which
    is what lets a boundary control share the trace's nodal layout.
    """

    def __init__(self, p: int):
        if not 1 <= p <= 4:
            raise ValueError(f"polynomial degree must be in [1, 4], got {p}")
        self.p = p
        self.exponents = [(a, b) for a in range(p + 1) for b in range(p + 1 - a)]
        nodes = [(i / p, j / p) for j in range(p + 1) for i in range(p + 1 - j)]
        self.nodes = np.asarray(nodes)
        self.nloc = len(nodes)
        self._coef = np.linalg.inv(self._monomials(self.nodes))
        lookup = {(round(x * p), round(y * p)): k for k, (x, y) in enumerate(nodes)}
        self.edge_nodes = (
            [lookup[(i, 0)] for i in range(p + 1)],
            [lookup[(p - j, j)] for j in range(p + 1)],
            [lookup[(0, p - j)] for j in range(p + 1)],
        )

    def _monomials(self, xi: np.ndarray) -> np.ndarray:
        x, y = xi[..., 0], xi[..., 1]
        return np.stack([x**a * y**b for a, b in self.exponents], axis=-1)

    def _monomial_grads(self, xi: np.ndarray) -> np.ndarray:
        x, y = xi[..., 0], xi[..., 1]
        dx = [a * x ** max(a - 1, 0) * y**b for a, b in self.exponents]
        dy = [b * x**a * y ** max(b - 1, 0) for a, b in self.exponents]
        return np.stack([np.stack(dx, axis=-1), np.stack(dy, axis=-1)], axis=-1)

    def values(self, xi) -> np.ndarray:
        """Basis values, shape ``xi.shape[:-1] + (nloc,)``."""
        xi = np.asarray(xi, dtype=float)
        return self._monomials(xi) @ self._coef

    def gradients(self, xi) -> np.ndarray:
        """Reference gradients, shape ``xi.shape[:-1] + (nloc, 2)``."""
        xi = np.asarray(xi, dtype=float)
        g = self._monomial_grads(xi)
        return np.einsum("...mk,mi->...ik", g, self._coef)


class LagrangeSegment:
    """Degree-``p`` nodal basis on equispaced nodes ``i/p`` of [0, 1]."""

    def __init__(self, p: int):
        self.p = p
        self.nodes = np.linspace(0.0, 1.0, p + 1)
        self.nloc = p + 1
        V = self.nodes[:, None] ** np.arange(p + 1)
        self._coef = np.linalg.inv(V)

    def values(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return (s[..., None] ** np.arange(self.p + 1)) @ self._coef


@lru_cache(maxsize=None)
def triangle_basis(p: int) -> LagrangeTriangle:
    return LagrangeTriangle(p)


@lru_cache(maxsize=None)
def segment_basis(p: int) -> LagrangeSegment:
    return LagrangeSegment(p)
