"""Analytic model problem: Laplace on the unit disk with point controls.

The state is the Poisson integral of a control on the unit circle.  With
``K`` Dirac controls at ``theta_i = 2 pi i / K`` and the mismatch measured on
an ellipse ``(a cos phi, b sin phi)`` inside the disk, the Hessian entries are

    H_ij = 1/(4 pi^2) int_Gamma P(theta_i; x) P(theta_j; x) dGamma(x).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla

DEFAULT_INTERVALS = 300
MAX_INTERVALS = 9600
KAPPA_RTOL = 0.01
_EPS = np.finfo(float).eps


def poisson_kernel(theta_src, r, theta):
    """``(1 - r^2) / (1 + r^2 - 2 r cos(theta_src - theta))``, broadcast."""
    r = np.asarray(r, dtype=float)
    return (1.0 - r**2) / (1.0 + r**2 - 2.0 * r * np.cos(np.subtract(theta_src, theta)))


def poisson_kernel_state(c, r: float, theta: float, n: int = DEFAULT_INTERVALS) -> float:
    """Harmonic extension of boundary data ``c(theta)`` evaluated at ``(r, theta)``.

    The periodic integral is taken with the ``n``-interval trapezoid rule.
    """
    if not 0 <= r < 1:
        raise ValueError(f"evaluation radius must satisfy 0 <= r < 1, got {r}")
    t = 2.0 * np.pi * np.arange(n) / n
    vals = np.asarray(c(t), dtype=float) * poisson_kernel(t, r, theta)
    return float(vals.mean())


def _ellipse_rule(a: float, b: float, n: int):
    phi = 2.0 * np.pi * np.arange(n) / n
    x, y = a * np.cos(phi), b * np.sin(phi)
    w = np.sqrt(a**2 * np.sin(phi) ** 2 + b**2 * np.cos(phi) ** 2) * (2.0 * np.pi / n)
    return np.hypot(x, y), np.arctan2(y, x), w


def hessian_entries(K: int, a: float, b: float, n: int = DEFAULT_INTERVALS) -> np.ndarray:
    r, th, w = _ellipse_rule(a, b, n)
    src = 2.0 * np.pi * np.arange(K) / K
    P = poisson_kernel(src[:, None], r[None, :], th[None, :])
    H = (P * w) @ P.T / (4.0 * np.pi**2)
    return 0.5 * (H + H.T)


@dataclass(frozen=True)
class ModelHessian:
    K: int
    a: float
    b: float
    entries: np.ndarray
    n: int = DEFAULT_INTERVALS

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        return sla.eigvalsh(self.entries)

    @property
    def singular(self) -> bool:
        ev = self.eigenvalues
        return bool(ev[0] <= _EPS * ev[-1])

    @property
    def condition_number(self) -> float:
        """2-norm condition number; the smallest eigenvalue is floored at eps*max."""
        ev = self.eigenvalues
        return float(ev[-1] / max(ev[0], _EPS * ev[-1]))

    @property
    def h(self) -> float:
        return 2.0 * np.pi / self.K

    @property
    def hausdorff(self) -> float:
        return 1.0 - min(self.a, self.b)

    def is_circulant(self, tol: float = 1e-10) -> bool:
        H = self.entries
        row = H[0]
        scale = np.max(np.abs(row))
        return all(np.max(np.abs(np.roll(row, i) - H[i])) <= tol * scale for i in range(self.K))


def _check_shape(K, a, b):
    if K < 4:
        raise ValueError(f"need at least 4 controls, got K={K}")
    if not (a > 0 and b > 0):
        raise ValueError("ellipse semi-axes must be positive")
    if a >= 1 or b >= 1:
        raise ValueError(f"the ellipse ({a}, {b}) must lie strictly inside the unit circle")


def model_hessian(K: int, a: float, b: float, n: int = DEFAULT_INTERVALS, adaptive: bool = False) -> ModelHessian:
    """Point-control Hessian for the ellipse with semi-axes ``a`` and ``b``.

    With ``adaptive`` the number of quadrature intervals is doubled from ``n``
    until successive condition numbers agree to 1% (at most 9600 intervals).
    """
    _check_shape(K, a, b)
    H = ModelHessian(K, float(a), float(b), hessian_entries(K, a, b, n), n)
    if not adaptive:
        return H
    while H.n < MAX_INTERVALS:
        H2 = ModelHessian(K, float(a), float(b), hessian_entries(K, a, b, 2 * H.n), 2 * H.n)
        k1, k2 = H.condition_number, H2.condition_number
        H = H2
        if abs(k2 - k1) <= KAPPA_RTOL * k1:
            break
    return H


SWEEP_COLUMNS = ("K", "a", "b", "h", "d_H", "h_over_dH", "cond")


def conditioning_sweep(shapes, Ks, n: int = DEFAULT_INTERVALS) -> list[dict]:
    """Condition numbers over ellipses ``(a, b)`` (circles when equal) and control counts."""
    rows = []
    for a, b in shapes:
        for K in Ks:
            H = model_hessian(int(K), a, b, n, adaptive=True)
            rows.append(dict(
                K=int(K), a=float(a), b=float(b), h=H.h, d_H=H.hausdorff,
                h_over_dH=H.h / H.hausdorff, cond=H.condition_number, singular=H.singular,
            ))
    return rows


def sweep_to_csv(rows, path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for row in rows:
        w.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in SWEEP_COLUMNS])
    if path is not None:
        with open(path, "w") as fh:
            fh.write(buf.getvalue())
    return buf.getvalue()


def illposedness_demo(n: int, R: float, npts: int = 512) -> float:
    """Amplification ``||c_n|| / ||u_n||`` of the harmonic mode ``r^n sin(n theta) / n``.

    ``u_n`` is sampled on the unit circle and the control ``c_n`` on the circle
    of radius ``R``; both L2 norms use the trapezoid rule on their own circle.
    The exact value is ``R^n sqrt(R)``.
    """
    if n < 1:
        raise ValueError(f"mode number must be positive, got {n}")
    if R < 1:
        raise ValueError(f"outer radius must be at least 1, got {R}")
    t = 2.0 * np.pi * np.arange(npts) / npts
    dt = 2.0 * np.pi / npts
    u = np.sin(n * t) / n
    c = R**n * np.sin(n * t) / n
    return float(np.sqrt(np.sum(c**2) * R * dt) / np.sqrt(np.sum(u**2) * dt))
