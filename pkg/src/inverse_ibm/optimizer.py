"""KKT solve, reduced Hessian and reduced gradient for the boundary-control QP.

The optimality system in (state, control, multiplier) reads

    [ H_uu   -H_cu'  A_u' ] [u]   [b ]
    [-H_cu    H_cc   A_c' ] [c] = [bc]
    [ A_u     A_c    0    ] [y]   [f ]

Eliminating the state through ``u = A_u^{-1}(f - A_c c)`` leaves the reduced
problem ``H_z c + g_c = 0``.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from inverse_ibm.dg.assembly import DGSystem
from inverse_ibm.objective import ObjectiveBlocks

log = logging.getLogger(__name__)

SINGULAR_TOL = 1e-14
PERMUTATION = "COLAMD"
DEFAULT_BACKEND = "umfpack"
# saddle solves whose backward error exceeds this are reported singular
BACKWARD_ERROR_TOL = 1e-8


class SingularSystemError(RuntimeError):
    """Raised when a matrix is singular to working precision."""


@dataclass
class SaddleSolution:
    u: np.ndarray
    c: np.ndarray
    psi: np.ndarray
    kkt_residuals: tuple[float, float, float]
    objective: float
    relative_residual: float


@dataclass
class ReducedHessian:
    H_z: np.ndarray
    eigenvalues: np.ndarray
    lam_min: float
    lam_max: float
    kappa: float
    singular: bool
    asymmetry: float


class Factorization:
    """Sparse LU factors of a square matrix with a ``solve(b, trans)`` method.

    ``backend="umfpack"`` uses UMFPACK through cvxopt (much less fill on the
    saddle matrices); ``"superlu"`` uses scipy's SuperLU with a COLAMD column
    ordering and also checks the pivot ratio.  Both raise SingularSystemError
    on a zero pivot.
    """

    def __init__(self, A: sp.spmatrix, what: str = "matrix", backend: str | None = None):
        self.what = what
        self.backend = backend or DEFAULT_BACKEND
        self.shape = A.shape
        if self.backend == "superlu":
            self._lu = self._superlu(sp.csc_matrix(A))
        elif self.backend == "umfpack":
            self._A, self._F = self._umfpack(sp.coo_matrix(A))
        else:
            raise ValueError(f"unknown factorization backend {self.backend!r}")

    def _singular(self, detail):
        return SingularSystemError(f"{self.what} is singular to working precision ({detail})")

    def _superlu(self, A):
        try:
            lu = spla.splu(A, permc_spec=PERMUTATION)
        except RuntimeError as exc:
            raise self._singular(exc) from exc
        d = np.abs(lu.U.diagonal())
        if d.min() < SINGULAR_TOL * d.max():
            raise self._singular(f"pivot ratio {d.min() / d.max():.2e}")
        return lu

    def _umfpack(self, A):
        from cvxopt import matrix, spmatrix, umfpack

        Ac = spmatrix(matrix(A.data), matrix(A.row.astype(np.int64)), matrix(A.col.astype(np.int64)), A.shape)
        try:
            F = umfpack.numeric(Ac, umfpack.symbolic(Ac))
        except ArithmeticError as exc:
            raise self._singular(exc) from exc
        return Ac, F

    def solve(self, b: np.ndarray, trans: str = "N") -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if self.backend == "superlu":
            x = self._lu.solve(b, trans=trans)
        else:
            from cvxopt import matrix, umfpack

            B = matrix(b.reshape(b.shape[0], -1))
            umfpack.solve(self._A, self._F, B, trans=trans)
            x = np.array(B).reshape(b.shape)
        if not np.all(np.isfinite(x)):
            raise self._singular("non-finite solution")
        return x


def factorize(A: sp.spmatrix, what: str = "matrix", backend: str | None = None) -> Factorization:
    return Factorization(A, what, backend)


def kkt_matrix(sys: DGSystem, obj: ObjectiveBlocks) -> sp.csc_matrix:
    n, m = sys.A_c.shape
    return sp.bmat(
        [
            [obj.H_uu, -obj.H_cu.T, sys.A_u.T],
            [-obj.H_cu, obj.H_cc, sys.A_c.T],
            [sys.A_u, sys.A_c, None],
        ],
        format="csc",
    )


def kkt_residuals(sys: DGSystem, obj: ObjectiveBlocks, u, c, psi) -> tuple[float, float, float]:
    r_u = obj.H_uu @ u - obj.H_cu.T @ c + sys.A_u.T @ psi - obj.b
    r_c = -obj.H_cu @ u + obj.H_cc @ c + sys.A_c.T @ psi - obj.bc
    r_y = sys.residual(u, c)
    return tuple(float(np.max(np.abs(r), initial=0.0)) for r in (r_u, r_c, r_y))


def solve_saddle(sys: DGSystem, obj: ObjectiveBlocks, backend: str | None = None) -> SaddleSolution:
    """Full-space direct solve of the KKT system."""
    n, m = sys.A_c.shape
    K = kkt_matrix(sys, obj)
    rhs = np.concatenate([obj.b, obj.bc, sys.f])
    x = factorize(K, "KKT matrix", backend).solve(rhs)
    u, c, psi = x[:n], x[n : n + m], x[n + m :]
    res = kkt_residuals(sys, obj, u, c, psi)
    scale = max(float(np.max(np.abs(rhs), initial=0.0)), np.finfo(float).tiny)
    rel = float(np.max(np.abs(K @ x - rhs))) / scale
    if rel > BACKWARD_ERROR_TOL:
        raise SingularSystemError(f"KKT matrix is singular to working precision (backward error {rel:.2e})")
    return SaddleSolution(u, c, psi, res, obj.value(u, c), rel)


def _state_sensitivity(lu, A_c: sp.spmatrix, threads: int = 1, chunk: int = 256) -> np.ndarray:
    """``W = -A_u^{-1} A_c`` column block by column block."""
    A_c = sp.csc_matrix(A_c)
    m = A_c.shape[1]
    starts = list(range(0, m, chunk))

    def block(j0):
        return -lu.solve(A_c[:, j0 : j0 + chunk].toarray())

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(block, starts))
    else:
        parts = [block(j0) for j0 in starts]
    return np.hstack(parts) if parts else np.zeros((A_c.shape[0], 0))


def reduced_hessian(sys: DGSystem, obj: ObjectiveBlocks, threads: int = 1, lu=None) -> ReducedHessian:
    """Dense reduced Hessian and its symmetric eigenvalue extremes."""
    if lu is None:
        lu = factorize(sys.A_u, "state operator")
    W = _state_sensitivity(lu, sys.A_c, threads)
    HcuW = np.asarray(obj.H_cu @ W)
    H = W.T @ np.asarray(obj.H_uu @ W) - HcuW - HcuW.T + obj.H_cc.toarray()
    scale = max(float(np.max(np.abs(H), initial=0.0)), np.finfo(float).tiny)
    asym = float(np.max(np.abs(H - H.T), initial=0.0)) / scale
    H = 0.5 * (H + H.T)
    ev = sla.eigvalsh(H)
    lmin, lmax = float(ev[0]), float(ev[-1])
    singular = not (lmax > 0 and lmin > SINGULAR_TOL * lmax)
    if singular:
        # floor at machine precision so the reported number stays finite
        floor = np.finfo(float).eps * max(abs(lmax), np.finfo(float).tiny)
        kappa = abs(lmax) / max(abs(lmin), floor)
    else:
        kappa = lmax / lmin
    return ReducedHessian(H, ev, lmin, lmax, float(kappa), singular, asym)


def reduced_gradient(sys: DGSystem, obj: ObjectiveBlocks, c: np.ndarray, lu=None) -> np.ndarray:
    """Gradient of ``c -> J(u(c), c)`` by one forward and one adjoint solve."""
    if lu is None:
        lu = factorize(sys.A_u, "state operator")
    c = np.asarray(c, dtype=float)
    u = lu.solve(sys.f - sys.A_c @ c)
    r = obj.H_uu @ u - obj.H_cu.T @ c - obj.b
    psi = -lu.solve(r, trans="T")
    return obj.H_cc @ c - obj.H_cu @ u - obj.bc + sys.A_c.T @ psi


def reduced_objective(sys: DGSystem, obj: ObjectiveBlocks, c: np.ndarray, lu=None) -> float:
    if lu is None:
        lu = factorize(sys.A_u, "state operator")
    u = lu.solve(sys.f - sys.A_c @ np.asarray(c, dtype=float))
    return obj.value(u, c)


def solve_reduced(sys: DGSystem, obj: ObjectiveBlocks, hess: ReducedHessian | None = None, lu=None):
    """Minimizer of the reduced QP, returned with the reconstructed state."""
    if lu is None:
        lu = factorize(sys.A_u, "state operator")
    if hess is None:
        hess = reduced_hessian(sys, obj, lu=lu)
    if hess.singular:
        raise SingularSystemError("reduced Hessian is singular to working precision")
    g0 = reduced_gradient(sys, obj, np.zeros(sys.A_c.shape[1]), lu=lu)
    c = sla.solve(hess.H_z, -g0, assume_a="sym")
    u = lu.solve(sys.f - sys.A_c @ c)
    return c, u
