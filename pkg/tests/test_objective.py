import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inverse_ibm.geometry import segment_boundary
from inverse_ibm.objective import (
    assemble_mismatch,
    assemble_penalty_regularization,
    assemble_tikhonov,
    build_objective,
    direct_objective,
)

from conftest import active_mesh, spaces

ONE = lambda x, y: np.ones_like(x)
ZERO = lambda x, y: np.zeros_like(x)


def setup(kind="circle", p=2, n=60):
    geom, _ = active_mesh(kind, 0.3)
    state, control = spaces(kind, 0.3, p)
    return segment_boundary(geom, n, p), state, control


def polygon_perimeter(control):
    return float(control.edge_data[2].sum())


def test_unit_mismatch_on_circle_is_half_length():
    seg, state, control = setup()
    obj = assemble_mismatch(seg, state, control.m, ONE)
    assert obj.value(np.zeros(state.n), np.zeros(control.m)) == pytest.approx(math.pi, rel=1e-12)
    assert obj.H_cu.nnz == 0 and obj.H_cc.nnz == 0


def test_zero_data_gives_pure_quadratic(rng):
    seg, state, control = setup()
    obj = assemble_mismatch(seg, state, control.m, ZERO)
    assert not obj.b.any() and obj.J0 == 0.0
    u = rng.standard_normal(state.n)
    assert obj.value(u, np.zeros(control.m)) == pytest.approx(0.5 * u @ (obj.H_uu @ u))


def test_interpolated_data_has_zero_mismatch():
    seg, state, control = setup(p=2)
    quad = lambda x, y: 1 + x * y - 0.5 * y**2
    obj = assemble_mismatch(seg, state, control.m, quad)
    assert abs(obj.value(state.interpolate(quad), np.zeros(control.m))) < 1e-12


@pytest.mark.parametrize("kind", ["circle", "lshape"])
def test_penalty_of_unit_control_is_half_perimeter(kind):
    _, state, control = setup(kind, p=1, n=64)
    obj = assemble_penalty_regularization(state, control, 1.0)
    S = obj.value(np.zeros(state.n), np.ones(control.m))
    assert S == pytest.approx(0.5 * polygon_perimeter(control), rel=1e-13)


def test_penalty_vanishes_at_trace(rng):
    _, state, control = setup(p=3)
    obj = assemble_penalty_regularization(state, control, 1.0)
    u = rng.standard_normal(state.n)
    c = u[control.trace_indices(state).ravel()]
    assert abs(obj.value(u, c)) < 1e-12 * (u @ u)


def test_tikhonov_examples():
    _, state, control = setup(p=2)
    peri = polygon_perimeter(control)
    obj = assemble_tikhonov(control, state.n, 1.0, 0.0)
    assert obj.value(np.zeros(state.n), np.ones(control.m)) == pytest.approx(0.5 * peri, rel=1e-13)
    shifted = assemble_tikhonov(control, state.n, 2.5, c0=0.7)
    assert abs(shifted.value(np.zeros(state.n), np.full(control.m, 0.7))) < 1e-13
    assert shifted.value(np.zeros(state.n), np.zeros(control.m)) == pytest.approx(0.5 * 2.5 * 0.49 * peri, rel=1e-12)


@pytest.mark.parametrize("which", ["penalty", "tikhonov"])
def test_regularization_linear_in_alpha(which):
    _, state, control = setup(p=2)
    make = {
        "penalty": lambda a: assemble_penalty_regularization(state, control, a),
        "tikhonov": lambda a: assemble_tikhonov(control, state.n, a, 0.3),
    }[which]
    one, two = make(1.0), make(2.0)
    for name in ("H_uu", "H_cu", "H_cc"):
        diff = getattr(two, name) - 2 * getattr(one, name)
        assert diff.count_nonzero() == 0
    np.testing.assert_array_equal(two.bc, 2 * one.bc)
    assert two.J0 == 2 * one.J0
    tiny = make(1e-8)
    assert abs(tiny.H_cc).max() == pytest.approx(1e-8 * abs(one.H_cc).max())


def test_regularization_weight_must_be_positive():
    _, state, control = setup(p=1)
    with pytest.raises(ValueError):
        assemble_penalty_regularization(state, control, 0.0)
    with pytest.raises(ValueError):
        assemble_tikhonov(control, state.n, -1.0)
    seg, state, control = setup(p=1)
    with pytest.raises(ValueError):
        build_objective(seg, state, control, ONE, "tv")


@pytest.mark.parametrize("reg", ["none", "penalty", "tikhonov"])
@pytest.mark.parametrize("kind, p", [("circle", 1), ("star", 3), ("lshape", 2)])
def test_blocks_match_direct_quadrature(reg, kind, p, rng):
    seg, state, control = setup(kind, p, n=64)
    ubc = lambda x, y: np.sin(x) + y**2
    obj = build_objective(seg, state, control, ubc, reg, alpha=0.7, c0=0.2)
    for _ in range(3):
        u, c = rng.standard_normal(state.n), rng.standard_normal(control.m)
        direct = direct_objective(seg, state, control, u, c, ubc, reg, alpha=0.7, c0=0.2)
        assert obj.value(u, c) == pytest.approx(direct, rel=1e-12)


def test_inflow_restriction_matches_direct_quadrature(rng):
    seg, state, control = setup("circle", 2)
    lam = (1.0, 1.0)
    obj = build_objective(seg, state, control, ONE, "penalty", inflow_only_lam=lam)
    u, c = rng.standard_normal(state.n), rng.standard_normal(control.m)
    assert obj.value(u, c) == pytest.approx(direct_objective(seg, state, control, u, c, ONE, "penalty", inflow_only_lam=lam), rel=1e-12)
    # only half of the circle is inflow for lam = (1, 1)
    half = assemble_mismatch(seg, state, control.m, ONE, lam=lam)
    assert half.J0 == pytest.approx(0.5 * math.pi, rel=1e-3)


def test_penalty_control_block_positive_definite():
    _, state, control = setup(p=2)
    H = assemble_penalty_regularization(state, control, 1.0).H_cc.toarray()
    np.testing.assert_allclose(H, H.T, atol=1e-16)
    assert np.linalg.eigvalsh(H).min() > 0


@pytest.mark.parametrize("reg", ["none", "penalty", "tikhonov"])
def test_full_hessian_positive_semidefinite(reg):
    seg, state, control = setup(p=1)
    obj = build_objective(seg, state, control, ONE, reg)
    H = np.block([[obj.H_uu.toarray(), -obj.H_cu.T.toarray()], [-obj.H_cu.toarray(), obj.H_cc.toarray()]])
    ev = np.linalg.eigvalsh(H)
    assert ev.min() > -1e-12 * ev.max()


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_objective_nonnegative(seed):
    seg, state, control = setup(p=1)
    obj = build_objective(seg, state, control, lambda x, y: x - 2 * y, "penalty")
    r = np.random.default_rng(seed)
    assert obj.value(10 * r.standard_normal(state.n), 10 * r.standard_normal(control.m)) >= -1e-10
