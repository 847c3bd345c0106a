"""Study drivers: manufactured solutions, convergence and conditioning sweeps."""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from inverse_ibm.dg.assembly import DGSystem, assemble_system
from inverse_ibm.dg.spaces import DGControlSpace, DGStateSpace
from inverse_ibm.geometry import (
    GEOMETRY_KINDS,
    ImmersedGeometry,
    BoundarySegmentation,
    hausdorff_distance,
    make_geometry,
    segment_boundary,
)
from inverse_ibm.mesh import ActiveMesh, background_for, extract_active
from inverse_ibm.objective import REGULARIZATIONS, ObjectiveBlocks, build_objective
from inverse_ibm.optimizer import (
    SingularSystemError,
    factorize,
    reduced_hessian,
    solve_saddle,
)

log = logging.getLogger(__name__)

PDES = {
    "advection": ((1.0, 1.0), 0.0),
    "diffusion": ((0.0, 0.0), 1.0),
    "advdiff": ((1.0, 1.0), 1e-2),
}
SOLUTIONS = ("smooth", "lshape_singular")
CSV_COLUMNS = (
    "study", "geometry", "pde", "p", "level", "h", "n", "m", "h_gamma",
    "dH", "kappa", "l2_error", "rate", "singular_flag", "wall_time_ms",
)
MAX_LEVELS = 5
DEFAULT_H = {"circle": 0.18, "ellipse": 0.18, "star": 0.12, "lshape": 0.25}
DEFAULT_SWEEP = (0.125, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0)


class ConfigError(ValueError):
    pass


# ----------------------------------------------------------------- solutions

def manufactured_solution(kind: str, x, y, lam=(0.0, 0.0), mu: float = 0.0):
    """Exact value, gradient and source ``div(lam u - mu grad u)`` at ``(x, y)``.

    ``smooth`` is ``exp(x+y) sin(pi x) sin(pi y)``.  ``lshape_singular`` is the
    harmonic corner function ``r^(2/3) sin(2 theta/3 + pi/3)`` with ``theta`` in
    ``[0, 2 pi)`` from the positive x axis; its gradient is infinite at the
    origin (reported as inf).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if kind == "smooth":
        E = np.exp(x + y)
        sx, cx = np.sin(np.pi * x), np.cos(np.pi * x)
        sy, cy = np.sin(np.pi * y), np.cos(np.pi * y)
        u = E * sx * sy
        ux = E * sy * (sx + np.pi * cx)
        uy = E * sx * (sy + np.pi * cy)
        lap = E * (2.0 * (1.0 - np.pi**2) * sx * sy + 2.0 * np.pi * (cx * sy + sx * cy))
        f = lam[0] * ux + lam[1] * uy - mu * lap
        return u, np.stack([ux, uy], axis=-1), f
    if kind == "lshape_singular":
        r = np.hypot(x, y)
        th = np.mod(np.arctan2(y, x), 2.0 * np.pi)
        arg = 2.0 * th / 3.0 + np.pi / 3.0
        u = r ** (2.0 / 3.0) * np.sin(arg)
        with np.errstate(divide="ignore", invalid="ignore"):
            ur = (2.0 / 3.0) * r ** (-1.0 / 3.0) * np.sin(arg)
            ut = (2.0 / 3.0) * r ** (-1.0 / 3.0) * np.cos(arg)   # (1/r) du/dtheta
            ux = ur * np.cos(th) - ut * np.sin(th)
            uy = ur * np.sin(th) + ut * np.cos(th)
        corner = r == 0
        ux = np.where(corner, np.inf, ux)
        uy = np.where(corner, np.inf, uy)
        return u, np.stack([ux, uy], axis=-1), np.zeros_like(u)
    raise ConfigError(f"unknown solution kind {kind!r}; expected one of {SOLUTIONS}")


def exact_value(kind: str):
    return lambda x, y: manufactured_solution(kind, x, y)[0]


def exact_source(kind: str, lam, mu):
    return lambda x, y: manufactured_solution(kind, x, y, lam, mu)[2]


def l2_error(state: DGStateSpace, coeffs: np.ndarray, exact, geom: ImmersedGeometry) -> float:
    """L2 error over the immersed domain only.

    Volume quadrature points of the active mesh that fall outside the
    immersed domain contribute nothing.
    """
    x = state.quadrature_points
    w = state.quadrature_weights
    uh = np.einsum("qi,ki->kq", state.phi_vol, np.asarray(coeffs).reshape(-1, state.nloc))
    ue = np.asarray(exact(x[..., 0], x[..., 1]), dtype=float)
    mask = np.asarray(geom.inside(x.reshape(-1, 2))).reshape(w.shape)
    return float(np.sqrt(np.sum(np.where(mask, w * (uh - ue) ** 2, 0.0))))


# -------------------------------------------------------------------- config

@dataclass
class StudyConfig:
    geometry: dict = field(default_factory=lambda: {"kind": "circle", "params": {"radius": 1.0}})
    pde: str = "diffusion"
    lam: tuple = None
    mu: float = None
    p: int = 1
    H: float = None
    levels: int = 5
    h_gamma_ratio: float = 0.5
    regularization: str = "penalty"
    alpha: float = 1.0
    c0: float = 0.0
    solution: str = "smooth"
    output: str = None
    study: str = None
    # conditioning sweeps
    h_gamma_ratios: list = None
    ps: list = None
    mesh_levels: list = None
    regularizations: list = None
    max_controls: int = 2000
    record_timing: bool = False

    def __post_init__(self):
        kind = self.geometry.get("kind")
        if kind not in GEOMETRY_KINDS:
            raise ConfigError(f"unknown geometry kind {kind!r}")
        self.geometry = {"kind": kind, "params": dict(self.geometry.get("params", {}))}
        if self.pde not in PDES:
            raise ConfigError(f"unknown pde {self.pde!r}; expected one of {tuple(PDES)}")
        lam0, mu0 = PDES[self.pde]
        self.lam = tuple(float(v) for v in (lam0 if self.lam is None else self.lam))
        self.mu = float(mu0 if self.mu is None else self.mu)
        if len(self.lam) != 2:
            raise ConfigError("lam must have two components")
        if self.pde == "advection" and self.mu != 0:
            raise ConfigError("pure advection requires mu = 0")
        if self.pde == "diffusion" and any(self.lam):
            raise ConfigError("pure diffusion requires lam = (0, 0)")
        if self.pde == "advdiff" and not self.mu > 0:
            raise ConfigError("advection-diffusion requires mu > 0")
        if not 1 <= int(self.p) <= 4:
            raise ConfigError(f"p must be in 1..4, got {self.p}")
        self.p = int(self.p)
        if self.H is None:
            self.H = DEFAULT_H[kind]
        if not self.H > 0:
            raise ConfigError("H must be positive")
        if not 1 <= int(self.levels) <= MAX_LEVELS:
            raise ConfigError(f"levels must be in 1..{MAX_LEVELS}, got {self.levels}")
        self.levels = int(self.levels)
        if not self.h_gamma_ratio > 0:
            raise ConfigError("h_gamma_ratio must be positive")
        if self.regularization not in REGULARIZATIONS:
            raise ConfigError(f"unknown regularization {self.regularization!r}")
        if self.solution not in SOLUTIONS:
            raise ConfigError(f"unknown solution {self.solution!r}")
        for r in self.regularizations or ():
            if r not in REGULARIZATIONS:
                raise ConfigError(f"unknown regularization {r!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "StudyConfig":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "StudyConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def make_geometry(self) -> ImmersedGeometry:
        return make_geometry(self.geometry["kind"], **self.geometry["params"])


# ------------------------------------------------------------------ pipeline

@dataclass
class Discretization:
    geom: ImmersedGeometry
    mesh: ActiveMesh
    seg: BoundarySegmentation
    state: DGStateSpace
    control: DGControlSpace
    system: DGSystem
    objective: ObjectiveBlocks
    exact: object


def boundary_segments_for(geom: ImmersedGeometry, h: float, ratio: float) -> int:
    """Segment count giving ``h_gamma / h`` close to ``ratio``."""
    n = max(3, int(round(geom.perimeter() / (ratio * h))))
    corners = geom.corners()
    if corners.size:
        # corners must land on endpoints, which a multiple of the perimeter in
        # corner-spacing units guarantees
        spacing = np.gcd.reduce(np.round(np.diff(np.r_[corners, geom.perimeter()]) * 1e6).astype(np.int64)) / 1e6
        step = int(round(geom.perimeter() / spacing))
        n = max(step, step * int(round(n / step)))
    return n


def discretize(
    geom: ImmersedGeometry,
    H: float,
    level: int,
    p: int,
    pde: str,
    lam,
    mu: float,
    ratio: float = 0.5,
    regularization: str = "penalty",
    alpha: float = 1.0,
    c0: float = 0.0,
    solution: str = "smooth",
    n_segments: int | None = None,
) -> Discretization:
    """Mesh, spaces, PDE blocks and objective at refinement ``level`` (0 = coarsest)."""
    mesh = extract_active(background_for(geom, H).refine(level), geom)
    if n_segments is None:
        n_segments = boundary_segments_for(geom, mesh.h, ratio)
    seg = segment_boundary(geom, n_segments, p)
    state = DGStateSpace(mesh, p)
    control = DGControlSpace(mesh, p)
    source = exact_source(solution, lam, mu) if solution == "smooth" else None
    system = assemble_system(state, control, lam, mu, source)
    exact = exact_value(solution)
    inflow = lam if pde == "advection" else None
    obj = build_objective(seg, state, control, exact, regularization, alpha, c0, inflow_only_lam=inflow)
    log.debug("level %d: h=%.4g elements=%d n=%d m=%d n_gamma=%d", level, mesh.h, mesh.n_elements, state.n, control.m, n_segments)
    return Discretization(geom, mesh, seg, state, control, system, obj, exact)


def discretize_config(cfg: StudyConfig, level: int = 0, **overrides) -> Discretization:
    args = dict(
        H=cfg.H, level=level, p=cfg.p, pde=cfg.pde, lam=cfg.lam, mu=cfg.mu,
        ratio=cfg.h_gamma_ratio, regularization=cfg.regularization, alpha=cfg.alpha,
        c0=cfg.c0, solution=cfg.solution,
    )
    args.update(overrides)
    return discretize(cfg.make_geometry(), **args)


def solve_single(cfg: StudyConfig, level: int = 0) -> dict:
    """One saddle solve; summary suitable for JSON output."""
    d = discretize_config(cfg, level)
    out = {
        "geometry": cfg.geometry, "pde": cfg.pde, "lam": list(cfg.lam), "mu": cfg.mu,
        "p": cfg.p, "level": level, "h": d.mesh.h, "elements": d.mesh.n_elements,
        "n": d.state.n, "m": d.control.m, "n_gamma": d.seg.n_segments, "h_gamma": d.seg.h_gamma,
        "regularization": cfg.regularization, "alpha": cfg.alpha,
    }
    try:
        sol = solve_saddle(d.system, d.objective)
    except SingularSystemError as exc:
        out.update(singular=True, message=str(exc))
        return out
    out.update(
        singular=False,
        objective=sol.objective,
        kkt_residuals=dict(zip(("stationarity_u", "stationarity_c", "feasibility"), sol.kkt_residuals)),
        relative_residual=sol.relative_residual,
        l2_error=l2_error(d.state, sol.u, d.exact, d.geom),
    )
    return out


def _row(**kw) -> dict:
    row = {c: "" for c in CSV_COLUMNS}
    row.update(kw)
    return row


def observed_rates(errors) -> list:
    """``log2(e_{k-1}/e_k)`` between consecutive levels; nan where undefined."""
    rates = [np.nan]
    for a, b in zip(errors[:-1], errors[1:]):
        ok = np.isfinite(a) and np.isfinite(b) and a > 0 and b > 0
        rates.append(float(np.log2(a / b)) if ok else np.nan)
    return rates


def run_convergence(cfg: StudyConfig) -> list[dict]:
    """Solve on ``cfg.levels`` nested meshes and record L2 errors and rates."""
    geom = cfg.make_geometry()
    study = cfg.study or "convergence"
    rows, errors = [], []
    for level in range(cfg.levels):
        t0 = time.perf_counter()
        d = discretize_config(cfg, level)
        dH = hausdorff_distance(geom, d.mesh.boundary_segments())
        try:
            sol = solve_saddle(d.system, d.objective)
            err, singular = l2_error(d.state, sol.u, d.exact, geom), 0
        except SingularSystemError as exc:
            log.warning("level %d: %s", level, exc)
            err, singular = np.nan, 1
        errors.append(err)
        ms = (time.perf_counter() - t0) * 1e3 if cfg.record_timing else 0.0
        rows.append(_row(
            study=study, geometry=geom.kind, pde=cfg.pde, p=cfg.p, level=level, h=d.mesh.h,
            n=d.state.n, m=d.control.m, h_gamma=d.seg.h_gamma, dH=dH, kappa=np.nan,
            l2_error=err, singular_flag=singular, wall_time_ms=ms,
        ))
        log.info("level %d h=%.4g n=%d err=%.3e", level, d.mesh.h, d.state.n, err)
    for row, rate in zip(rows, observed_rates(errors)):
        row["rate"] = rate
    return rows


def run_conditioning(cfg: StudyConfig, threads: int = 1) -> list[dict]:
    """Reduced-Hessian conditioning over ``h_gamma/h``, degree and mesh level."""
    geom = cfg.make_geometry()
    ratios = cfg.h_gamma_ratios or list(DEFAULT_SWEEP)
    ps = cfg.ps or [cfg.p]
    levels = cfg.mesh_levels or [0]
    regs = cfg.regularizations or [cfg.regularization]
    rows = []
    for reg in regs:
        study = f"{cfg.study or 'conditioning'}-{reg}"
        for p in ps:
            for level in levels:
                for ratio in ratios:
                    t0 = time.perf_counter()
                    d = discretize_config(cfg, level, p=p, ratio=ratio, regularization=reg)
                    if d.control.m > cfg.max_controls:
                        raise ConfigError(
                            f"{d.control.m} control dofs exceed the dense budget {cfg.max_controls}"
                        )
                    dH = hausdorff_distance(geom, d.mesh.boundary_segments())
                    try:
                        lu = factorize(d.system.A_u, "state operator")
                        hz = reduced_hessian(d.system, d.objective, threads=threads, lu=lu)
                        kappa, singular = hz.kappa, int(hz.singular)
                    except SingularSystemError as exc:
                        log.warning("%s", exc)
                        kappa, singular = np.inf, 1
                    ms = (time.perf_counter() - t0) * 1e3 if cfg.record_timing else 0.0
                    rows.append(_row(
                        study=study, geometry=geom.kind, pde=cfg.pde, p=p, level=level,
                        h=d.mesh.h, n=d.state.n, m=d.control.m, h_gamma=d.seg.h_gamma, dH=dH,
                        kappa=kappa, l2_error=np.nan, rate=np.nan, singular_flag=singular,
                        wall_time_ms=ms,
                    ))
                    log.info("%s p=%d level=%d ratio=%.3g kappa=%.3e singular=%d", study, p, level, ratio, kappa, singular)
    order = sorted(range(len(rows)), key=lambda i: (rows[i]["study"], rows[i]["p"], rows[i]["level"]))
    return [rows[i] for i in order]


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def rows_to_csv(rows, path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
    text = buf.getvalue()
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    return text
