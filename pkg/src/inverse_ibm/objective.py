"""Discrete quadratic objective of the inverse problem.

    J(u, c) = 1/2 c'Hcc c - c'Hcu u + 1/2 u'Huu u - b'u - bc'c + J0

The boundary mismatch on the immersed curve fills ``Huu``, ``b`` and ``J0``;
regularization adds either the control/trace penalty on the enclosing
boundary or a Tikhonov term on the control alone.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from inverse_ibm.dg.spaces import DGControlSpace, DGStateSpace
from inverse_ibm.geometry import BoundarySegmentation

# Points whose normal velocity is this small are neither inflow nor outflow.
INFLOW_TOL = 1e-14

REGULARIZATIONS = ("none", "penalty", "tikhonov")


@dataclass(frozen=True)
class ObjectiveBlocks:
    H_uu: sp.csr_matrix
    H_cu: sp.csr_matrix
    H_cc: sp.csr_matrix
    b: np.ndarray
    bc: np.ndarray
    J0: float
    regularization: str = "none"
    alpha: float = 0.0
    c0: float = 0.0

    @classmethod
    def zeros(cls, n: int, m: int) -> "ObjectiveBlocks":
        return cls(
            sp.csr_matrix((n, n)), sp.csr_matrix((m, n)), sp.csr_matrix((m, m)),
            np.zeros(n), np.zeros(m), 0.0,
        )

    def __add__(self, other: "ObjectiveBlocks") -> "ObjectiveBlocks":
        reg = other.regularization if other.regularization != "none" else self.regularization
        return ObjectiveBlocks(
            (self.H_uu + other.H_uu).tocsr(),
            (self.H_cu + other.H_cu).tocsr(),
            (self.H_cc + other.H_cc).tocsr(),
            self.b + other.b,
            self.bc + other.bc,
            self.J0 + other.J0,
            reg,
            self.alpha + other.alpha,
            other.c0 if other.regularization == "tikhonov" else self.c0,
        )

    def scaled(self, alpha: float) -> "ObjectiveBlocks":
        return replace(
            self,
            H_uu=alpha * self.H_uu, H_cu=alpha * self.H_cu, H_cc=alpha * self.H_cc,
            b=alpha * self.b, bc=alpha * self.bc, J0=alpha * self.J0,
        )

    def value(self, u: np.ndarray, c: np.ndarray) -> float:
        return float(
            0.5 * c @ (self.H_cc @ c)
            - c @ (self.H_cu @ u)
            + 0.5 * u @ (self.H_uu @ u)
            - self.b @ u
            - self.bc @ c
            + self.J0
        )


def mismatch_rows(seg: BoundarySegmentation, state: DGStateSpace, lam=None):
    """Quadrature points on the immersed boundary that enter the mismatch.

    With ``lam`` given (pure advection) only inflow points, where the outward
    normal velocity is negative, are kept.
    """
    keep = np.ones(len(seg.weights), dtype=bool)
    if lam is not None:
        lam_n = seg.normals @ np.asarray(lam, dtype=float)
        keep = lam_n < -INFLOW_TOL
    x = seg.points[keep]
    w = seg.weights[keep]
    k, vals = state.evaluation_rows(x)
    return x, w, k, vals


def assemble_mismatch(seg: BoundarySegmentation, state: DGStateSpace, m: int, ubc, lam=None) -> ObjectiveBlocks:
    """``1/2 int_Gamma (u_h - ubc)^2`` evaluated with the segmentation's quadrature."""
    x, w, k, vals = mismatch_rows(seg, state, lam)
    g = np.asarray(ubc(x[:, 0], x[:, 1]), dtype=float).reshape(-1)
    dofs = state.dofs(k)
    n = state.n
    rows = np.broadcast_to(dofs[:, :, None], (len(k), state.nloc, state.nloc)).ravel()
    cols = np.broadcast_to(dofs[:, None, :], (len(k), state.nloc, state.nloc)).ravel()
    vals_uu = (w[:, None, None] * vals[:, :, None] * vals[:, None, :]).ravel()
    H_uu = sp.coo_matrix((vals_uu, (rows, cols)), shape=(n, n)).tocsr()
    b = np.zeros(n)
    np.add.at(b, dofs.ravel(), (w * g)[:, None].repeat(state.nloc, 1).ravel() * vals.ravel())
    J0 = 0.5 * float(np.sum(w * g**2))
    return ObjectiveBlocks(H_uu, sp.csr_matrix((m, n)), sp.csr_matrix((m, m)), b, np.zeros(m), J0)


def _boundary_grams(state: DGStateSpace, control: DGControlSpace):
    kb, eb = control.edges.T
    _, _, length, _ = control.edge_data
    W = length[:, None] * control.edge_w[None, :]
    P = state.phi_edge[eb, 0]
    Psi = control.psi
    uu = np.einsum("bq,bqi,bqj->bij", W, P, P)
    cu = np.einsum("bq,qa,bqj->baj", W, Psi, P)
    cc = np.einsum("bq,qa,qc->bac", W, Psi, Psi)
    return kb, uu, cu, cc


def _block_matrix(rows, cols, blocks, shape):
    r = np.broadcast_to(rows[:, :, None], blocks.shape).ravel()
    c = np.broadcast_to(cols[:, None, :], blocks.shape).ravel()
    return sp.coo_matrix((blocks.ravel(), (r, c)), shape=shape).tocsr()


def assemble_penalty_regularization(state: DGStateSpace, control: DGControlSpace, alpha: float = 1.0) -> ObjectiveBlocks:
    """``alpha/2 int_{enclosing boundary} (trace(u_h) - c_h)^2`` as objective blocks."""
    if not alpha > 0:
        raise ValueError(f"regularization weight must be positive, got {alpha}")
    n, m = state.n, control.m
    kb, uu, cu, cc = _boundary_grams(state, control)
    du = state.dofs(kb)
    dc = control.dofs(np.arange(control.n_edges))
    return ObjectiveBlocks(
        _block_matrix(du, du, alpha * uu, (n, n)),
        _block_matrix(dc, du, alpha * cu, (m, n)),
        _block_matrix(dc, dc, alpha * cc, (m, m)),
        np.zeros(n), np.zeros(m), 0.0, "penalty", alpha,
    )


def assemble_tikhonov(control: DGControlSpace, n: int, alpha: float = 1.0, c0: float = 0.0) -> ObjectiveBlocks:
    """``alpha/2 int_{enclosing boundary} (c_h - c0)^2`` for a constant ``c0``."""
    if not alpha > 0:
        raise ValueError(f"regularization weight must be positive, got {alpha}")
    m = control.m
    dc = control.dofs(np.arange(control.n_edges))
    M = control.edge_mass_blocks
    _, _, length, _ = control.edge_data
    psi_int = np.einsum("b,q,qa->ba", length, control.edge_w, control.psi)
    bc = np.zeros(m)
    np.add.at(bc, dc.ravel(), (alpha * c0 * psi_int).ravel())
    J0 = 0.5 * alpha * c0**2 * float(length.sum())
    return ObjectiveBlocks(
        sp.csr_matrix((n, n)), sp.csr_matrix((m, n)),
        _block_matrix(dc, dc, alpha * M, (m, m)),
        np.zeros(n), bc, J0, "tikhonov", alpha, c0,
    )


def build_objective(
    seg: BoundarySegmentation,
    state: DGStateSpace,
    control: DGControlSpace,
    ubc,
    regularization: str = "penalty",
    alpha: float = 1.0,
    c0: float = 0.0,
    inflow_only_lam=None,
) -> ObjectiveBlocks:
    """Mismatch plus the requested regularization.

    ``inflow_only_lam`` restricts the mismatch to the inflow part of the curve
    (pure advection).
    """
    obj = assemble_mismatch(seg, state, control.m, ubc, lam=inflow_only_lam)
    if regularization == "none":
        return obj
    if regularization == "penalty":
        return obj + assemble_penalty_regularization(state, control, alpha)
    if regularization == "tikhonov":
        return obj + assemble_tikhonov(control, state.n, alpha, c0)
    raise ValueError(f"unknown regularization {regularization!r}; expected one of {REGULARIZATIONS}")


def direct_objective(seg, state, control, u, c, ubc, regularization="none", alpha=1.0, c0=0.0, inflow_only_lam=None) -> float:
    """Objective by direct quadrature of the integrands (no blocks)."""
    x, w, _, _ = mismatch_rows(seg, state, inflow_only_lam)
    uh = state.evaluate(u, x)
    J = 0.5 * float(np.sum(w * (uh - ubc(x[:, 0], x[:, 1])) ** 2))
    if regularization == "none":
        return J
    kb, eb = control.edges.T
    _, _, length, _ = control.edge_data
    P = state.phi_edge[eb, 0]
    tr = np.einsum("bqi,bi->bq", P, u.reshape(-1, state.nloc)[kb])
    ch = c.reshape(-1, control.nloc) @ control.psi.T
    W = length[:, None] * control.edge_w[None, :]
    if regularization == "penalty":
        return J + 0.5 * alpha * float(np.sum(W * (tr - ch) ** 2))
    return J + 0.5 * alpha * float(np.sum(W * (ch - c0) ** 2))
