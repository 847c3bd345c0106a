"""Assembly of the DG advection-diffusion residual.

The residual is linear in the state and control,

    r(u, c) = A_u u + A_c c - f,

with ``v' r`` equal to the weak form: volume flux and source, upwind fluxes on
interior faces and on the boundary (the control acting as exterior state),
and symmetric interior penalty terms for diffusion, the boundary ones acting
on ``u - c``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from inverse_ibm.dg.spaces import DGControlSpace, DGStateSpace


class AssemblyError(ValueError):
    pass


def upwind_flux(u_plus, u_minus, lam_n):
    """Normal upwind flux; ``lam_n`` is measured along the outward normal of the + side."""
    lam_n = np.asarray(lam_n, dtype=float)
    out = np.where(lam_n >= 0.0, lam_n * np.asarray(u_plus), lam_n * np.asarray(u_minus))
    return out.item() if out.ndim == 0 else out


def penalty_constant(p: int) -> float:
    return (p + 1) * (p + 2) / 2.0


def sipg_penalty(p: int, face_length, area_plus, area_minus=None):
    """Interior penalty ``(p+1)(p+2)/2 * |e| / min(|K+|, |K-|)``.

    Boundary faces (``area_minus`` is None) use their single element and get
    twice the interior value.
    """
    if not 1 <= p <= 4:
        raise AssemblyError(f"polynomial degree must be in [1, 4], got {p}")
    c = penalty_constant(p)
    face_length = np.asarray(face_length, dtype=float)
    if area_minus is None:
        return 2.0 * c * face_length / np.asarray(area_plus, dtype=float)
    return c * face_length / np.minimum(area_plus, area_minus)


@dataclass(frozen=True)
class DGSystem:
    A_u: sp.csr_matrix
    A_c: sp.csr_matrix
    f: np.ndarray
    lam: tuple[float, float]
    mu: float

    def residual(self, u: np.ndarray, c: np.ndarray) -> np.ndarray:
        return self.A_u @ u + self.A_c @ c - self.f


class _Triplets:
    def __init__(self):
        self.rows, self.cols, self.vals = [], [], []

    def add(self, row_dofs, col_dofs, blocks):
        # row_dofs (N, a), col_dofs (N, b), blocks (N, a, b)
        r = np.broadcast_to(row_dofs[:, :, None], blocks.shape)
        c = np.broadcast_to(col_dofs[:, None, :], blocks.shape)
        self.rows.append(r.ravel())
        self.cols.append(c.ravel())
        self.vals.append(blocks.ravel())

    def tocsr(self, shape) -> sp.csr_matrix:
        if not self.rows:
            return sp.csr_matrix(shape)
        rows = np.concatenate(self.rows)
        cols = np.concatenate(self.cols)
        vals = np.concatenate(self.vals)
        return sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()


def _gram(w, x, y):
    """sum_q w[f, q] x[f, q, i] y[f, q, j]"""
    return np.einsum("fq,fqi,fqj->fij", w, x, y, optimize=True)


def volume_blocks(state: DGStateSpace, lam, mu: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-element stiffness ``K`` and advection ``C`` blocks (row = test function).

    ``C[i, j] = int (lam . grad phi_i) phi_j``; the residual's volume part is ``C - mu K``.
    """
    ne = state.mesh.n_elements
    k = np.arange(ne)
    grads = state.physical_gradients(np.broadcast_to(state.dphi_vol, (ne,) + state.dphi_vol.shape), k)
    w = state.quadrature_weights
    K = np.einsum("kq,kqid,kqjd->kij", w, grads, grads, optimize=True)
    adv = grads @ np.asarray(lam, dtype=float)
    C = np.einsum("kq,kqi,qj->kij", w, adv, state.phi_vol, optimize=True)
    return K, C


def project_source(state: DGStateSpace, source) -> np.ndarray:
    """Elementwise L2 projection of ``source(x, y)`` onto the state space."""
    x = state.quadrature_points
    fq = np.asarray(source(x[..., 0], x[..., 1]), dtype=float)
    rhs = np.einsum("kq,kq,qi->ki", state.quadrature_weights, fq, state.phi_vol)
    return np.linalg.solve(state.mass_blocks, rhs[..., None])[..., 0].reshape(-1)


def assemble_system(
    state: DGStateSpace,
    control: DGControlSpace,
    lam=(0.0, 0.0),
    mu: float = 1.0,
    source=None,
) -> DGSystem:
    """Assemble ``A_u``, ``A_c`` and ``f`` for ``div(lam u - mu grad u) = source``."""
    lam = np.asarray(lam, dtype=float)
    if mu < 0:
        raise AssemblyError(f"diffusion coefficient must be non-negative, got {mu}")
    if mu == 0 and not np.any(lam):
        raise AssemblyError("degenerate PDE: zero advection velocity and zero diffusion")
    mesh = state.mesh
    p = state.p
    n, m = state.n, control.m
    Au = _Triplets()
    Ac = _Triplets()

    # volume terms
    K, C = volume_blocks(state, lam, mu)
    kall = np.arange(mesh.n_elements)
    Au.add(state.dofs(kall), state.dofs(kall), C - mu * K)

    # interior faces
    faces = mesh.interior_faces
    if len(faces):
        kp, ep, km, em = faces.T
        _, _, length, normal = mesh.edge_geometry(kp, ep)
        W = length[:, None] * state.edge_w[None, :]
        P = state.phi_edge[ep, 0]
        Q = state.phi_edge[em, 1]
        DP = np.einsum("fqik,fk->fqi", state.physical_gradients(state.dphi_edge[ep, 0], kp), normal)
        DQ = np.einsum("fqik,fk->fqi", state.physical_gradients(state.dphi_edge[em, 1], km), normal)
        lam_n = normal @ lam
        up = (lam_n >= 0.0)[:, None, None]
        ln = lam_n[:, None, None]
        eps = sipg_penalty(p, length, mesh.areas[kp], mesh.areas[km])[:, None, None]
        PP, PQ, QP, QQ = _gram(W, P, P), _gram(W, P, Q), _gram(W, Q, P), _gram(W, Q, Q)
        PdP, PdQ, QdP, QdQ = _gram(W, P, DP), _gram(W, P, DQ), _gram(W, Q, DP), _gram(W, Q, DQ)
        half = 0.5 * mu
        # row side, column side
        pp = -ln * up * PP + half * (PdP + PdP.transpose(0, 2, 1)) - eps * mu * PP
        pq = -ln * ~up * PQ + half * (PdQ - QdP.transpose(0, 2, 1)) + eps * mu * PQ
        qp = ln * up * QP + half * (-QdP + PdQ.transpose(0, 2, 1)) + eps * mu * QP
        qq = ln * ~up * QQ - half * (QdQ + QdQ.transpose(0, 2, 1)) - eps * mu * QQ
        dp, dq = state.dofs(kp), state.dofs(km)
        Au.add(dp, dp, pp)
        Au.add(dp, dq, pq)
        Au.add(dq, dp, qp)
        Au.add(dq, dq, qq)

    # boundary edges: the control is the exterior state
    bed = mesh.boundary_edges
    if len(bed):
        kb, eb = bed.T
        _, _, length, normal = mesh.edge_geometry(kb, eb)
        W = length[:, None] * control.edge_w[None, :]
        P = state.phi_edge[eb, 0]
        DP = np.einsum("fqik,fk->fqi", state.physical_gradients(state.dphi_edge[eb, 0], kb), normal)
        Cb = np.broadcast_to(control.psi, (len(kb),) + control.psi.shape)
        lam_n = normal @ lam
        out = (lam_n >= 0.0)[:, None, None]
        ln = lam_n[:, None, None]
        eps = sipg_penalty(p, length, mesh.areas[kb])[:, None, None]
        PP, PC, PdP, DPC = _gram(W, P, P), _gram(W, P, Cb), _gram(W, P, DP), _gram(W, DP, Cb)
        uu = -ln * out * PP + mu * (PdP + PdP.transpose(0, 2, 1)) - eps * mu * PP
        uc = -ln * ~out * PC - mu * DPC + eps * mu * PC
        dk = state.dofs(kb)
        Au.add(dk, dk, uu)
        Ac.add(dk, control.dofs(np.arange(len(kb))), uc)

    f = np.zeros(n)
    if source is not None:
        fh = project_source(state, source)
        f = -np.einsum("kij,kj->ki", state.mass_blocks, fh.reshape(-1, state.nloc)).reshape(-1)

    return DGSystem(Au.tocsr((n, n)), Ac.tocsr((n, m)), f, (float(lam[0]), float(lam[1])), float(mu))


def interpolate_state(state: DGStateSpace, coeffs: np.ndarray, x) -> np.ndarray:
    """Evaluate the discrete state at points in the active mesh."""
    return state.evaluate(coeffs, x)
