import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from wncs_game import matrix_core as mc
from wncs_game.scenarios import plant_A

finite_floats = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def square(n_min=1, n_max=5):
    return st.integers(n_min, n_max).flatmap(lambda n: arrays(np.float64, (n, n), elements=finite_floats))


def test_kron_examples():
    assert np.array_equal(mc.kron(np.eye(2), np.eye(2)), np.eye(4))
    assert np.array_equal(mc.kron([[2.0]], [[3.0]]), [[6.0]])


def test_vec_is_column_major():
    assert np.array_equal(mc.vec([[1, 3], [2, 4]]), [1, 2, 3, 4])
    assert np.array_equal(mc.vec(np.eye(2)), [1, 0, 0, 1])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_vec_kron_identity(n, seed):
    rng = np.random.default_rng(seed)
    a, x, b = rng.normal(size=(n, n)), rng.normal(size=(n, n)), rng.normal(size=(n, n))
    np.testing.assert_allclose(mc.vec(a @ x @ b), mc.kron(b.T, a) @ mc.vec(x), atol=1e-10)
    np.testing.assert_array_equal(mc.unvec(mc.vec(x), n), x)


def test_unvec_rejects_wrong_length():
    with pytest.raises(mc.MatrixError):
        mc.unvec(np.arange(5.0), 2)


def test_schur_complement_examples():
    np.testing.assert_allclose(mc.schur_complement([[2, 1], [1, 2]], 1), [[1.5]])
    m = np.block([[np.eye(2) * 3, np.zeros((2, 1))], [np.zeros((1, 2)), np.array([[7.0]])]])
    np.testing.assert_array_equal(mc.schur_complement(m, 2), [[7.0]])
    np.testing.assert_array_equal(mc.schur_complement(m, 2, "lower-right"), np.eye(2) * 3)
    with pytest.raises(mc.MatrixError):
        mc.schur_complement([[0.0, 1.0], [1.0, 2.0]], 1)


@settings(max_examples=50, deadline=None)
@given(square(2, 5))
def test_spectral_radius_bounds_norm(m):
    rho = mc.spectral_radius(m)
    assert 0.0 <= rho <= np.linalg.norm(m, 2) * (1 + 1e-12) + 1e-12


def test_spectral_radius_examples():
    assert mc.spectral_radius(np.eye(3)) == pytest.approx(1.0)
    assert mc.spectral_radius(np.diag([2.0, -3.0])) == pytest.approx(3.0)
    assert mc.spectral_radius(plant_A()) == pytest.approx(1.6016, abs=1e-3)


def test_psd_sqrt_examples():
    np.testing.assert_allclose(mc.psd_sqrt(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(mc.psd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))
    with pytest.raises(mc.MatrixError):
        mc.psd_sqrt(np.diag([1.0, -1.0]))


@settings(max_examples=50, deadline=None)
@given(square(1, 5))
def test_psd_sqrt_squares_back(g):
    m = g @ g.T
    r = mc.psd_sqrt(m)
    np.testing.assert_allclose(r @ r, m, atol=1e-8 * (1 + np.abs(m).max()))
    assert mc.is_psd(r)


def test_ordered_svd_examples():
    d = mc.ordered_svd(np.diag([1.0, 0.0]))
    np.testing.assert_array_equal(d.U, np.eye(2))
    np.testing.assert_array_equal(d.sigma, [1.0, 0.0])
    assert d.rank == 1
    np.testing.assert_array_equal(d.null_projector(), np.diag([0.0, 1.0]))
    e = mc.ordered_svd(np.eye(4))
    assert e.rank == 4 and np.allclose(e.sigma, 1.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5), st.integers(0, 5), st.integers(0, 2**31 - 1))
def test_ordered_svd_reconstructs(n, r, seed):
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(n, min(r, n)))
    m = g @ g.T
    d = mc.ordered_svd(m)
    assert np.all(np.diff(d.sigma) <= 1e-12)
    np.testing.assert_allclose(d.U.T @ np.diag(d.sigma) @ d.U, m, atol=1e-10 * (1 + np.abs(m).max()))
    assert d.rank == np.linalg.matrix_rank(m) if m.any() else d.rank == 0
    again = mc.ordered_svd(m)
    np.testing.assert_array_equal(again.U, d.U)


def test_loewner_order():
    assert mc.loewner_leq(np.eye(2), 2 * np.eye(2))
    assert not mc.loewner_leq(2 * np.eye(2), np.eye(2))
    assert mc.loewner_lt(np.eye(2), 2 * np.eye(2), margin=0.5)
    assert not mc.loewner_lt(np.eye(2), np.eye(2))
    assert mc.is_pd(np.eye(2)) and not mc.is_pd(np.diag([1.0, 0.0]))


def test_shape_errors():
    with pytest.raises(mc.MatrixError):
        mc.symmetrize(np.ones((2, 3)))
    with pytest.raises(mc.MatrixError):
        mc.spectral_radius(np.ones((2, 3)))
