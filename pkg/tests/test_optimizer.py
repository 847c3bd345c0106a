from functools import lru_cache

import numpy as np
import pytest
import scipy.sparse as sp

from inverse_ibm.dg.assembly import assemble_system
from inverse_ibm.geometry import segment_boundary
from inverse_ibm.objective import assemble_penalty_regularization, build_objective
from inverse_ibm.optimizer import (
    SingularSystemError,
    factorize,
    kkt_matrix,
    reduced_gradient,
    reduced_hessian,
    reduced_objective,
    solve_reduced,
    solve_saddle,
)
from inverse_ibm.studies import PDES, discretize
from oracles import central_difference

from conftest import active_mesh, spaces


@lru_cache(maxsize=None)
def disc(pde="diffusion", p=1, reg="penalty", H=0.3, ratio=0.5, kind="circle"):
    lam, mu = PDES[pde]
    geom, _ = active_mesh(kind, H)
    return discretize(geom, H, 0, p, pde, lam, mu, ratio=ratio, regularization=reg)


def test_exactly_attainable_data_is_recovered():
    geom, _ = active_mesh("circle", 0.3)
    state, control = spaces("circle", 0.3, 2)
    u = lambda x, y: x + y
    sys = assemble_system(state, control, (0.0, 0.0), 1.0)
    seg = segment_boundary(geom, 40, 2)
    obj = build_objective(seg, state, control, u, "penalty")
    sol = solve_saddle(sys, obj)
    assert sol.objective <= 1e-20
    np.testing.assert_allclose(sol.u, state.interpolate(u), atol=1e-10)
    np.testing.assert_allclose(sol.c, control.interpolate(u), atol=1e-10)


def test_poisson_kkt_backward_error():
    d = disc("diffusion", 1)
    sol = solve_saddle(d.system, d.objective)
    assert sol.relative_residual < 1e-10
    scale = max(np.abs(d.objective.b).max(), np.abs(d.system.f).max())
    assert max(sol.kkt_residuals) < 1e-10 * scale


@pytest.mark.parametrize("backend", ["umfpack", "superlu"])
def test_unregularized_advection_is_singular(backend):
    d = disc("advection", 1, "none")
    with pytest.raises(SingularSystemError, match="singular to working precision"):
        solve_saddle(d.system, d.objective, backend=backend)
    assert reduced_hessian(d.system, d.objective).singular


def test_backends_agree():
    d = disc("advdiff", 2)
    a = solve_saddle(d.system, d.objective, backend="umfpack")
    b = solve_saddle(d.system, d.objective, backend="superlu")
    np.testing.assert_allclose(a.u, b.u, rtol=1e-9, atol=1e-11)
    np.testing.assert_allclose(a.c, b.c, rtol=1e-9, atol=1e-11)
    with pytest.raises(ValueError):
        factorize(d.system.A_u, backend="mumps")


def test_zero_matrix_reported_singular():
    with pytest.raises(SingularSystemError):
        factorize(sp.csc_matrix((4, 4)), backend="superlu")
    with pytest.raises(SingularSystemError):
        factorize(sp.diags([1.0, 0.0, 1.0]).tocsc(), backend="umfpack").solve(np.ones(3))


def test_multipliers_solve_adjoint_equation():
    d = disc("advdiff", 1)
    sol = solve_saddle(d.system, d.objective)
    o, s = d.objective, d.system
    lhs = s.A_u.T @ sol.psi
    rhs = o.b - o.H_uu @ sol.u + o.H_cu.T @ sol.c
    assert np.abs(lhs - rhs).max() < 1e-10 * np.abs(rhs).max()


def test_kkt_matrix_symmetric():
    d = disc("diffusion", 2)
    K = kkt_matrix(d.system, d.objective)
    assert abs(K - K.T).max() < 1e-12 * abs(K).max()


@pytest.mark.parametrize("pde", list(PDES))
def test_reduced_gradient_matches_central_differences(pde, rng):
    d = disc(pde, 1)
    lu = factorize(d.system.A_u)
    c = rng.standard_normal(d.control.m)
    g = reduced_gradient(d.system, d.objective, c, lu=lu)
    J = lambda z: reduced_objective(d.system, d.objective, z, lu=lu)
    for j in rng.choice(d.control.m, 10, replace=False):
        fd = central_difference(J, c, j, 1e-5)
        assert abs(fd - g[j]) <= 1e-6 * max(1.0, abs(g[j]))


@pytest.mark.parametrize("pde", list(PDES))
def test_reduced_and_full_space_agree(pde):
    d = disc(pde, 2)
    lu = factorize(d.system.A_u)
    hess = reduced_hessian(d.system, d.objective, lu=lu)
    assert not hess.singular and hess.asymmetry < 1e-10
    c, u = solve_reduced(d.system, d.objective, hess, lu=lu)
    sol = solve_saddle(d.system, d.objective)
    assert np.abs(c - sol.c).max() <= 1e-8 * np.abs(sol.c).max()
    assert np.abs(u - sol.u).max() <= 1e-8 * np.abs(sol.u).max()
    g0 = reduced_gradient(d.system, d.objective, np.zeros(d.control.m), lu=lu)
    g = reduced_gradient(d.system, d.objective, sol.c, lu=lu)
    assert np.abs(g).max() < 1e-9 * np.abs(g0).max()
    assert np.abs(hess.H_z @ sol.c + g0).max() < 1e-8 * np.abs(g0).max()


def test_gradient_difference_is_hessian_product(rng):
    d = disc("advdiff", 1)
    lu = factorize(d.system.A_u)
    hess = reduced_hessian(d.system, d.objective, lu=lu)
    c = rng.standard_normal(d.control.m)
    dg = reduced_gradient(d.system, d.objective, c, lu=lu) - reduced_gradient(d.system, d.objective, 0 * c, lu=lu)
    Hc = hess.H_z @ c
    assert np.abs(dg - Hc).max() <= 1e-9 * np.abs(Hc).max()


@pytest.mark.parametrize("pde", list(PDES))
def test_penalty_adds_reduced_trace_mismatch_form(pde):
    reg, plain = disc(pde, 1, "penalty", H=0.5), disc(pde, 1, "none", H=0.5)
    assert reg.control.m <= 60
    diff = reduced_hessian(reg.system, reg.objective).H_z - reduced_hessian(plain.system, plain.objective).H_z
    # dense oracle: the penalty quadratic form restricted to c -> (u(c), c)
    P = assemble_penalty_regularization(reg.state, reg.control, 1.0)
    W = -np.linalg.solve(reg.system.A_u.toarray(), reg.system.A_c.toarray())
    Z = np.vstack([W, np.eye(reg.control.m)])
    Q = np.block([[P.H_uu.toarray(), -P.H_cu.T.toarray()], [-P.H_cu.toarray(), P.H_cc.toarray()]])
    expected = Z.T @ Q @ Z
    np.testing.assert_allclose(diff, expected, atol=1e-10 * np.abs(expected).max())
    ev = np.linalg.eigvalsh(0.5 * (diff + diff.T))
    assert ev.min() > -1e-12 * ev.max()


def test_threaded_hessian_is_identical():
    d = disc("diffusion", 2)
    lu = factorize(d.system.A_u)
    a = reduced_hessian(d.system, d.objective, threads=1, lu=lu).H_z
    b = reduced_hessian(d.system, d.objective, threads=3, lu=lu).H_z
    np.testing.assert_array_equal(a, b)


def test_unregularized_poisson_conditioning_blows_up():
    kappas = []
    for ratio in (0.25, 0.5, 1.0, 2.0):
        d = disc("diffusion", 1, "none", ratio=ratio)
        h = reduced_hessian(d.system, d.objective)
        kappas.append(np.inf if h.singular else h.kappa)
    assert np.isfinite(kappas[0]) and kappas[-1] > 1e3 * kappas[0]
    reg = disc("diffusion", 1, "penalty", ratio=0.25)
    assert reduced_hessian(reg.system, reg.objective).kappa * 10 < kappas[0]
