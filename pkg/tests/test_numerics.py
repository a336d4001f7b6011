import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from rdmd import numerics
from conftest import crandn


def test_svd_identity_and_diagonal():
    assert np.allclose(numerics.svd(np.eye(3)).singular_values, [1, 1, 1])
    assert np.allclose(numerics.svd(np.diag([1.0, 3.0])).singular_values, [3, 1])


def test_svd_reconstruction_and_orthonormal_factors(rng):
    m = crandn(rng, 5, 3)
    f = numerics.svd(m)
    assert np.linalg.norm(f.reconstruct() - m) <= 1e-10 * max(1, np.linalg.norm(m))
    u, v = f.left_vectors, f.right_vectors
    assert np.max(np.abs(u.conj().T @ u - np.eye(3))) <= 1e-10
    assert np.max(np.abs(v.conj().T @ v - np.eye(3))) <= 1e-10
    assert np.all(np.diff(f.singular_values) <= 0) and np.all(f.singular_values >= 0)


def test_as_matrix_rejects_non_finite():
    with pytest.raises(ValueError):
        numerics.as_matrix(np.array([[1.0, np.nan]]))


def test_pinv_examples(rng):
    assert np.allclose(numerics.pinv(np.eye(3)), np.eye(3))
    assert np.allclose(numerics.pinv(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]))
    m = crandn(rng, 40, 12)
    assert np.max(np.abs(numerics.pinv(m) @ m - np.eye(12))) <= 1e-9


def test_pinv_of_zero_matrix_has_transposed_shape():
    p = numerics.pinv(np.zeros((4, 2)))
    assert p.shape == (2, 4) and not p.any()


def test_pinv_moore_penrose_on_rank_deficient(rng):
    m = crandn(rng, 8, 3) @ crandn(rng, 3, 6)
    p = numerics.pinv(m)
    assert np.linalg.norm(m @ p @ m - m) <= 1e-9 * np.linalg.norm(m)
    assert np.linalg.norm(p @ m @ p - p) <= 1e-9 * np.linalg.norm(p)


def test_eig_examples():
    vals = sorted(l.real for l, _ in numerics.eig(np.diag([0.9, 0.5])))
    assert np.allclose(vals, [0.5, 0.9])
    jordan = numerics.eig(np.array([[0.8, 1.0], [0.0, 0.8]]))
    assert len(jordan) == 2 and all(abs(l - 0.8) < 1e-8 for l, _ in jordan)
    companion = np.array([[1.0, -0.25], [1.0, 0.0]])  # z^2 - z + 0.25
    assert all(abs(l - 0.5) < 1e-7 for l, _ in numerics.eig(companion))


def test_eig_residuals(rng):
    m = crandn(rng, 7, 7)
    for lam, v in numerics.eig(m):
        assert np.linalg.norm(m @ v - lam * v) <= 1e-8 * np.linalg.norm(m, 2)


def test_sigma_min_examples():
    assert numerics.sigma_min(np.eye(3)) == pytest.approx(1.0)
    assert numerics.sigma_min(np.diag([3.0, 0.2])) == pytest.approx(0.2)
    assert numerics.sigma_min(np.array([[1.5 - 0.5]])) == pytest.approx(1.0)


def test_sigma_min_matches_inverse_norm(rng):
    m = crandn(rng, 6, 6)
    assert numerics.sigma_min(m) == pytest.approx(1 / np.linalg.norm(np.linalg.inv(m), 2), rel=1e-9)


def test_solve_examples(rng):
    b = crandn(rng, 3)
    assert np.allclose(numerics.solve(np.eye(3), b), b)
    assert np.allclose(numerics.solve(np.diag([2.0, 4.0]), np.array([2.0, 4.0])), [1, 1])
    m = crandn(rng, 10, 10) + 5 * np.eye(10)
    rhs = crandn(rng, 10, 2)
    x = numerics.solve(m, rhs)
    assert np.linalg.norm(m @ x - rhs) <= 1e-9 * np.linalg.norm(rhs)


def test_solve_singular_reports_ratio():
    with pytest.raises(numerics.SingularityError) as exc:
        numerics.solve(np.diag([1.0, 1e-16]), np.ones(2))
    assert exc.value.ratio <= 1e-14


square = st.integers(2, 6).flatmap(
    lambda n: arrays(np.float64, (2, n, n), elements=st.floats(-3, 3, allow_nan=False)))


@given(square)
def test_sigma_min_times_pinv_norm_is_one(parts):
    m = parts[0] + 1j * parts[1] + 4 * np.eye(parts.shape[1])
    s = numerics.svd(m).singular_values
    if s[-1] < 1e-6 * s[0]:
        return
    assert numerics.sigma_min(m) * numerics.spectral_norm(numerics.pinv(m)) == pytest.approx(1.0, rel=1e-8)
    assert np.linalg.norm(numerics.pinv(numerics.pinv(m)) - m) <= 1e-8 * np.linalg.norm(m)


@given(st.integers(2, 6), st.integers(0, 2 ** 31 - 1))
def test_normal_matrix_eigen_moduli_equal_singular_values(n, seed):
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(crandn(rng, n, n))
    lam = crandn(rng, n)
    m = q @ np.diag(lam) @ q.conj().T
    mods = np.sort([abs(l) for l, _ in numerics.eig(m)])
    assert np.allclose(mods, np.sort(numerics.svd(m).singular_values), atol=1e-8 * max(1, np.abs(lam).max()))
