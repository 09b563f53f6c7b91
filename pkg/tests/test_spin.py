import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm
from scipy.special import comb

from oatcontrol.spin import (
    BlochDirection,
    DickeState,
    build_operators,
    coherent_state,
    husimi_grid,
    husimi_q,
    husimi_values,
    jz_eigenstate,
    moments,
    rotate,
    rotation_matrix,
    x_coherent_state,
)

sizes = st.integers(min_value=1, max_value=40)
angles = st.floats(min_value=-2 * np.pi, max_value=2 * np.pi, allow_nan=False)


def random_state(n, seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=n + 1) + 1j * rng.normal(size=n + 1)
    return DickeState(n, v / np.linalg.norm(v))


def binomial_css(n, theta, phi):
    """exp(i phi Jz) exp(i theta Jy)|j, j> from the Wigner small-d closed form."""
    j = n / 2
    m = np.arange(n + 1) - j
    amp = (
        np.sqrt(comb(n, j - m))
        * np.cos(theta / 2) ** (j + m)
        * (-np.sin(theta / 2)) ** (j - m)
    )
    return amp * np.exp(1j * phi * m)


@pytest.mark.parametrize("n", [1, 2, 3, 8, 51, 100])
def test_commutators(n):
    ops = build_operators(n)
    jx, jy, jz = ops.jx, ops.jy, ops.jz
    assert np.max(np.abs(jx @ jy - jy @ jx - 1j * jz)) < 1e-12
    assert np.max(np.abs(jy @ jz - jz @ jy - 1j * jx)) < 1e-12
    assert np.max(np.abs(jz @ jx - jx @ jz - 1j * jy)) < 1e-12


@pytest.mark.parametrize("n", [1, 4, 7, 100])
def test_casimir(n):
    ops = build_operators(n)
    j = n / 2
    casimir = ops.jx @ ops.jx + ops.jy @ ops.jy + ops.jz @ ops.jz
    assert np.allclose(casimir, j * (j + 1) * np.eye(n + 1), atol=1e-10)


def test_operators_hermitian_and_tridiagonal():
    ops = build_operators(12)
    for op in (ops.jx, ops.jy, ops.jz):
        assert np.allclose(op, op.conj().T)
        assert np.count_nonzero(np.triu(op, 2)) == 0


@settings(max_examples=40, deadline=None)
@given(n=sizes, axis=st.sampled_from("xyz"), angle=angles)
def test_rotation_matches_expm(n, axis, angle):
    gen = build_operators(n).axis(axis)
    assert np.allclose(rotation_matrix(n, axis, angle), expm(1j * angle * gen), atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(
    n=sizes,
    theta=st.floats(0, np.pi),
    phi=st.floats(0, 2 * np.pi, exclude_max=True),
)
def test_coherent_state_binomial_oracle(n, theta, phi):
    css = coherent_state(n, theta, phi)
    assert np.allclose(css.amplitudes, binomial_css(n, theta, phi), atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(n=sizes, axis=st.sampled_from("xyz"), angle=angles, seed=st.integers(0, 2**32 - 1))
def test_rotation_preserves_norm(n, axis, angle, seed):
    psi = random_state(n, seed)
    assert abs(rotate(psi, axis, angle).norm() - 1) < 1e-10


def test_rotate_zero_is_identity():
    psi = random_state(5, 1)
    assert rotate(psi, "x", 0.0) is psi


def test_x_coherent_state_moments():
    n = 100
    mo = moments(x_coherent_state(n))
    # standard matrices: exp(i pi/2 Jy)|N/2> points along -x
    assert mo.mean_x == pytest.approx(-n / 2, abs=1e-9)
    assert mo.mean_y == pytest.approx(0, abs=1e-9)
    assert mo.mean_z == pytest.approx(0, abs=1e-9)
    assert mo.var_x == pytest.approx(0, abs=1e-8)
    assert mo.var_y == pytest.approx(n / 4, rel=1e-10)
    assert mo.var_z == pytest.approx(n / 4, rel=1e-10)


@pytest.mark.parametrize("m", [-3, -1, 0, 2, 3])
def test_jz_eigenstate(m):
    psi = jz_eigenstate(6, m)
    mo = moments(psi)
    assert mo.mean_z == m
    assert mo.var_z == 0
    assert mo.var_x == pytest.approx((12 - m * m) / 2)


def test_validation():
    with pytest.raises(ValueError):
        DickeState(3, np.ones(3))
    with pytest.raises(ValueError):
        jz_eigenstate(4, 0.5)
    with pytest.raises(ValueError):
        BlochDirection(4.0, 0.0)
    with pytest.raises(ValueError):
        build_operators(0)


def test_state_is_read_only():
    psi = x_coherent_state(4)
    with pytest.raises(ValueError):
        psi.amplitudes[0] = 1.0


# -- Husimi-Q -------------------------------------------------------------------


def test_husimi_css_closed_form():
    # Q of a CSS at another CSS direction is ((1 + n.n')/2)^N
    n = 30
    css = coherent_state(n, 1.0, 0.5)
    thetas = np.linspace(0.05, 3.1, 7)
    phis = np.linspace(0, 6.2, 9)
    q = husimi_values(css, thetas, phis)
    n0 = np.array([np.sin(1.0) * np.cos(0.5), np.sin(1.0) * np.sin(0.5), np.cos(1.0)])
    for i, t in enumerate(thetas):
        for k, p in enumerate(phis):
            n1 = np.array([np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t)])
            assert q[i, k] == pytest.approx(((1 + n0 @ n1) / 2) ** n, abs=1e-10)


def test_husimi_initial_state_peak():
    grid = husimi_grid(x_coherent_state(100))
    i, k = np.unravel_index(np.argmax(grid.values), grid.values.shape)
    assert abs(grid.theta[i] - np.pi / 2) < 0.05
    assert grid.phi[k] == 0.0
    assert husimi_q(x_coherent_state(100), [BlochDirection(np.pi / 2, 0.0)])[0] == pytest.approx(1.0)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 100), seed=st.integers(0, 2**32 - 1))
def test_husimi_resolution_of_identity(n, seed):
    grid = husimi_grid(random_state(n, seed))
    assert abs(grid.normalization(n) - 1) < 1e-3


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 30), seed=st.integers(0, 2**32 - 1), gphase=angles)
def test_husimi_global_phase_invariance(n, seed, gphase):
    psi = random_state(n, seed)
    shifted = DickeState(n, np.exp(1j * gphase) * psi.amplitudes)
    th, ph = np.linspace(0, np.pi, 11), np.linspace(0, 6, 13)
    assert np.allclose(husimi_values(psi, th, ph), husimi_values(shifted, th, ph), atol=1e-12)


def test_husimi_list_matches_grid():
    psi = random_state(9, 3)
    dirs = [BlochDirection(0.3, 1.2), BlochDirection(2.0, 5.0)]
    q = husimi_q(psi, dirs)
    for d, v in zip(dirs, q):
        assert v == pytest.approx(husimi_values(psi, [d.theta], [d.phi])[0, 0])
