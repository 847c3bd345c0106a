import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inverse_ibm.model_problem import (
    SWEEP_COLUMNS,
    conditioning_sweep,
    illposedness_demo,
    model_hessian,
    poisson_kernel_state,
    sweep_to_csv,
)
from oracles import model_hessian_fsum


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 0.9), st.floats(-math.pi, math.pi))
def test_constant_control_gives_unit_state(r, theta):
    # the periodic trapezoid error decays like r^n
    assert poisson_kernel_state(lambda t: np.ones_like(t), r, theta) == pytest.approx(1.0, abs=1e-12)


def test_fourier_mode_extends_harmonically():
    u = poisson_kernel_state(lambda t: np.sin(3 * t), 0.5, 0.7)
    assert abs(u - 0.5**3 * math.sin(2.1)) < 1e-8


def test_center_value_is_mean():
    c = lambda t: 2 + np.cos(t) + np.sin(5 * t) ** 2
    assert poisson_kernel_state(c, 0.0, 1.3) == pytest.approx(2.5, abs=1e-12)


@pytest.mark.parametrize("r", [1.0, 1.5, -0.1])
def test_state_outside_disk_rejected(r):
    with pytest.raises(ValueError):
        poisson_kernel_state(np.cos, r, 0.0)


@pytest.mark.parametrize("K, a, b", [(3, 0.5, 0.5), (8, 1.0, 0.5), (8, 0.5, 1.2), (8, 0.0, 0.5)])
def test_model_hessian_preconditions(K, a, b):
    with pytest.raises(ValueError):
        model_hessian(K, a, b)


def test_circle_hessian_matches_compensated_oracle():
    H = model_hessian(32, 0.8, 0.8)
    assert H.is_circulant()
    ref = np.linalg.eigvalsh(model_hessian_fsum(32, 0.8, 0.8, 3000))
    assert H.condition_number == pytest.approx(ref[-1] / ref[0], rel=0.01)
    # the spectrum of a circulant matrix is the DFT of its first row
    dft = np.sort(np.fft.fft(H.entries[0]).real)
    np.testing.assert_allclose(np.sort(H.eigenvalues), dft, rtol=1e-10, atol=1e-14 * dft.max())


def test_ellipse_is_not_circulant_but_symmetric_positive():
    H = model_hessian(24, 0.9, 0.6)
    assert not H.is_circulant()
    np.testing.assert_array_equal(H.entries, H.entries.T)
    assert np.all(H.entries > 0)


def test_row_shapes_as_minor_axis_shrinks():
    K = 64
    rows = {b: model_hessian(K, 0.9, b).entries for b in (0.9, 0.7, 0.5)}
    top = {b: H[K // 4] for b, H in rows.items()}
    side = {b: H[K // 2] for b, H in rows.items()}
    width = lambda r: int(np.sum(r >= 0.5 * r.max()))
    # the control facing the minor axis: lower and wider response
    assert top[0.9].max() > top[0.7].max() > top[0.5].max()
    assert width(top[0.9]) < width(top[0.7]) < width(top[0.5])
    # the control facing the major axis barely changes
    assert width(side[0.5]) == width(side[0.9])
    assert abs(side[0.5].max() / side[0.9].max() - 1) < 0.15


def test_model_hessian_deterministic():
    a = model_hessian(40, 0.85, 0.6, adaptive=True)
    b = model_hessian(40, 0.85, 0.6, adaptive=True)
    np.testing.assert_array_equal(a.entries, b.entries)
    assert a.n == b.n and a.n >= 300


def test_trapezoid_converges_fast_for_interior_curves():
    k1 = model_hessian(50, 0.9, 0.9, 300).condition_number
    k2 = model_hessian(50, 0.9, 0.9, 600).condition_number
    assert abs(k2 / k1 - 1) < 1e-6


def test_sweep_rows_and_csv(tmp_path):
    rows = conditioning_sweep([(0.8, 0.8), (0.9, 0.7)], [16, 32])
    assert len(rows) == 4
    assert rows[0]["d_H"] == pytest.approx(0.2) and rows[2]["d_H"] == pytest.approx(0.3)
    assert rows[1]["h"] == pytest.approx(2 * math.pi / 32)
    text = sweep_to_csv(rows, tmp_path / "s.csv")
    assert text.splitlines()[0] == ",".join(SWEEP_COLUMNS)
    assert (tmp_path / "s.csv").read_text() == text
    assert sweep_to_csv(conditioning_sweep([(0.8, 0.8), (0.9, 0.7)], [16, 32])) == text


@pytest.mark.parametrize("n, R, expected", [(1, 1.0, 1.0), (10, 1.25, 1.25**10 * math.sqrt(1.25)), (3, 2.0, 8 * math.sqrt(2))])
def test_illposedness_amplification(n, R, expected):
    assert illposedness_demo(n, R) == pytest.approx(expected, rel=1e-12)


def test_illposedness_grows_with_mode():
    v = [illposedness_demo(n, 1.1) for n in range(1, 20)]
    assert all(b > a for a, b in zip(v, v[1:]))
    with pytest.raises(ValueError):
        illposedness_demo(0, 2.0)
    with pytest.raises(ValueError):
        illposedness_demo(2, 0.9)
