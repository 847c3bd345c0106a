"""Discrete state space on the active mesh and control space on its boundary."""

from __future__ import annotations

from functools import cached_property

import numpy as np

from inverse_ibm.dg.basis import edge_to_reference, segment_basis, triangle_basis
from inverse_ibm.dg.quadrature import gauss_segment, triangle_rule
from inverse_ibm.mesh import ActiveMesh, locate_points, reference_coordinates


class DGStateSpace:
    """Discontinuous degree-``p`` nodal Lagrange space; dof ``k*nloc + i``."""

    def __init__(self, mesh: ActiveMesh, p: int):
        self.mesh = mesh
        self.p = p
        self.basis = triangle_basis(p)
        self.nloc = self.basis.nloc
        self.n = mesh.n_elements * self.nloc

        self.vol_points, self.vol_weights = triangle_rule(2 * p)
        self.phi_vol = self.basis.values(self.vol_points)
        self.dphi_vol = self.basis.gradients(self.vol_points)

        self.edge_s, self.edge_w = gauss_segment(p + 1)
        # [local edge, reversed] -> (nq, nloc) values / (nq, nloc, 2) gradients
        nq = len(self.edge_s)
        self.phi_edge = np.empty((3, 2, nq, self.nloc))
        self.dphi_edge = np.empty((3, 2, nq, self.nloc, 2))
        for e in range(3):
            for rev, s in enumerate((self.edge_s, 1.0 - self.edge_s)):
                xi = edge_to_reference(e, s)
                self.phi_edge[e, rev] = self.basis.values(xi)
                self.dphi_edge[e, rev] = self.basis.gradients(xi)

    @cached_property
    def jinv(self) -> np.ndarray:
        return np.linalg.inv(self.mesh.jacobians)

    @cached_property
    def detj(self) -> np.ndarray:
        return np.abs(np.linalg.det(self.mesh.jacobians))

    def dofs(self, k) -> np.ndarray:
        k = np.asarray(k)
        return k[..., None] * self.nloc + np.arange(self.nloc)

    def physical_points(self, xi: np.ndarray) -> np.ndarray:
        """Map reference points (nq, 2) into every element: (ne, nq, 2)."""
        c = self.mesh.coords
        return c[:, None, 0, :] + np.einsum("kab,qb->kqa", self.mesh.jacobians, xi)

    @cached_property
    def quadrature_points(self) -> np.ndarray:
        return self.physical_points(self.vol_points)

    @cached_property
    def quadrature_weights(self) -> np.ndarray:
        """Physical volume weights, shape (ne, nq)."""
        return self.detj[:, None] * self.vol_weights[None, :]

    @cached_property
    def node_coordinates(self) -> np.ndarray:
        return self.physical_points(self.basis.nodes)

    def interpolate(self, func) -> np.ndarray:
        """Nodal interpolant coefficients of ``func(x, y)``."""
        x = self.node_coordinates
        return np.asarray(func(x[..., 0], x[..., 1]), dtype=float).reshape(-1)

    def physical_gradients(self, dphi_ref: np.ndarray, k: np.ndarray) -> np.ndarray:
        """Reference gradients (..., nq, nloc, 2) pushed through element ``k`` maps."""
        return np.einsum("...qid,...dj->...qij", dphi_ref, self.jinv[k])

    def evaluation_rows(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Containing element and basis values for each point in ``x``."""
        x = np.asarray(x, dtype=float).reshape(-1, 2)
        k = locate_points(self.mesh, x)
        xi = reference_coordinates(self.mesh, k, x)
        return k, self.basis.values(xi)

    def evaluate(self, coeffs: np.ndarray, x) -> np.ndarray:
        k, vals = self.evaluation_rows(x)
        u = np.asarray(coeffs).reshape(-1, self.nloc)[k]
        return np.einsum("ni,ni->n", vals, u)

    @cached_property
    def mass_blocks(self) -> np.ndarray:
        w = self.quadrature_weights
        return np.einsum("kq,qi,qj->kij", w, self.phi_vol, self.phi_vol)


class DGControlSpace:
    """Discontinuous degree-``p`` polynomials on each boundary edge.

    Edge ``b`` carries dofs ``b*(p+1) + a`` at the equispaced points ``a/p`` along
    the edge, traversed in the direction of the adjacent element, so they sit
    on that element's trace nodes.
    """

    def __init__(self, mesh: ActiveMesh, p: int):
        self.mesh = mesh
        self.p = p
        self.basis = segment_basis(p)
        self.nloc = p + 1
        self.edges = mesh.boundary_edges
        self.n_edges = len(self.edges)
        self.m = self.n_edges * self.nloc
        self.edge_s, self.edge_w = gauss_segment(p + 1)
        self.psi = self.basis.values(self.edge_s)

    @cached_property
    def edge_data(self):
        k, e = self.edges[:, 0], self.edges[:, 1]
        return self.mesh.edge_geometry(k, e)

    def dofs(self, b) -> np.ndarray:
        b = np.asarray(b)
        return b[..., None] * self.nloc + np.arange(self.nloc)

    @cached_property
    def node_coordinates(self) -> np.ndarray:
        a, t, _, _ = self.edge_data
        s = self.basis.nodes
        return a[:, None, :] + s[None, :, None] * t[:, None, :]

    def interpolate(self, func) -> np.ndarray:
        x = self.node_coordinates
        return np.asarray(func(x[..., 0], x[..., 1]), dtype=float).reshape(-1)

    @cached_property
    def edge_mass_blocks(self) -> np.ndarray:
        _, _, length, _ = self.edge_data
        return np.einsum("b,q,qa,qc->bac", length, self.edge_w, self.psi, self.psi)

    def trace_indices(self, state: DGStateSpace) -> np.ndarray:
        """State dofs sitting on each control node, shape (n_edges, p+1)."""
        k, e = self.edges[:, 0], self.edges[:, 1]
        local = np.asarray(state.basis.edge_nodes)[e]
        return k[:, None] * state.nloc + local
