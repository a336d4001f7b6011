import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import unitary_group

from rdmd import dictionary as dic, numerics, resolvent as rv

from conftest import crandn


def _ev(k):
    return rv.ResolventEvaluator.from_matrix(np.asarray(k, dtype=complex))


def _snap(x, y, dt=1.0):
    m = x.shape[0]
    return dic.SnapshotMatrices(x, y, np.full(m, 1.0 / m), dt)


def _normal(rng, n, eigs=None):
    u = unitary_group.rvs(n, random_state=rng)
    lam = crandn(rng, n) * 0.5 if eigs is None else np.asarray(eigs, dtype=complex)
    return u @ np.diag(lam) @ u.conj().T, lam


# ----------------------------------------------------------------- SMW route

def test_smw_zero_images_give_scaled_identity(rng):
    x = crandn(rng, 10, 3)
    ev = rv.ResolventEvaluator.from_snapshots(_snap(x, np.zeros_like(x)))
    z = 0.7 - 0.2j
    np.testing.assert_allclose(rv.smw_resolvent(ev, z), np.eye(3) / z, atol=1e-14)


def test_smw_scalar_example():
    ev = rv.ResolventEvaluator.from_snapshots(_snap(np.array([[1.0 + 0j]]), np.array([[0.5 + 0j]])))
    assert rv.smw_resolvent(ev, 2.0)[0, 0] == pytest.approx(2 / 3)


def test_smw_matches_direct_on_random_data(rng):
    ev = rv.ResolventEvaluator.from_snapshots(_snap(crandn(rng, 40, 12), crandn(rng, 40, 12)))
    for z in 1.5 * np.exp(2j * np.pi * np.arange(20) / 20):
        r1, r2 = rv.smw_resolvent(ev, z), rv.direct_resolvent(ev, z)
        assert np.linalg.norm(r1 - r2) <= 1e-10 * np.linalg.norm(r2)


@given(st.integers(0, 2 ** 31), st.integers(1, 10), st.integers(0, 20))
def test_smw_direct_equivalence_outside_norm_disc(seed, n, extra):
    rng = np.random.default_rng(seed)
    m = n + 1 + extra
    ev = rv.ResolventEvaluator.from_snapshots(_snap(crandn(rng, m, n), crandn(rng, m, n)))
    # beyond 2||K|| the resolvent is well conditioned, so the relative gap reflects the route alone
    r = 2.0 * numerics.spectral_norm(ev.matrix) + 0.1
    z = r * np.exp(1j * rng.uniform(0, 2 * np.pi))
    r1, r2 = rv.smw_resolvent(ev, z), rv.direct_resolvent(ev, z)
    assert np.linalg.norm(r1 - r2) <= 1e-10 * np.linalg.norm(r2)


def test_smw_generator_mode_matches_direct(rng):
    s = _snap(crandn(rng, 30, 6), crandn(rng, 30, 6), dt=0.1)
    ev = rv.ResolventEvaluator.from_snapshots(s, mode="generator")
    z = 3.0 + 40j
    r1, r2 = rv.smw_resolvent(ev, z), rv.direct_resolvent(ev, z)
    assert np.linalg.norm(r1 - r2) <= 1e-10 * np.linalg.norm(r2)


def test_smw_pole_and_guard(rng):
    ev = rv.ResolventEvaluator.from_snapshots(_snap(crandn(rng, 8, 3), crandn(rng, 8, 3)))
    with pytest.raises(rv.PoleError):
        rv.smw_resolvent(ev, 0.0)
    # inside the guard radius the direct route answers
    z = 1e-10
    np.testing.assert_allclose(rv.smw_resolvent(ev, z), rv.direct_resolvent(ev, z))


def test_smw_singular_inner_system_names_z():
    x = np.array([[1.0 + 0j]])
    ev = rv.ResolventEvaluator.from_snapshots(_snap(x, 0.5 * x))
    with pytest.raises(numerics.SingularityError) as info:
        rv.smw_resolvent(ev, 0.5)
    assert info.value.z == 0.5


def test_cached_product_matches_fresh_product(rng):
    ev = rv.ResolventEvaluator.from_snapshots(_snap(crandn(rng, 15, 4), crandn(rng, 15, 4)))
    np.testing.assert_allclose(ev.cached_product, ev.psi_y @ ev.psi_x_pinv, atol=1e-12)
    assert ev.cached_product is ev.cached_product
    with pytest.raises(ValueError):
        _ev(np.eye(2)).cached_product


# ----------------------------------------------------------------- direct route

def test_direct_examples():
    np.testing.assert_allclose(rv.direct_resolvent(_ev(np.zeros((3, 3))), 1.0), np.eye(3))
    np.testing.assert_allclose(rv.direct_resolvent(_ev(np.diag([0.5, 0.5])), 1.5), np.eye(2))


def test_direct_reports_eigenvalue_hit():
    with pytest.raises(rv.EigenvalueHit) as info:
        rv.direct_resolvent(_ev(np.diag([0.5, 0.2])), 0.5)
    assert info.value.z == 0.5


@given(st.integers(0, 2 ** 31), st.integers(1, 12))
def test_first_resolvent_identity(seed, n):
    rng = np.random.default_rng(seed)
    ev = _ev(crandn(rng, n, n) / np.sqrt(n))
    z, w = crandn(rng, 2) * 1.5
    lam = ev.eigenvalues
    if min(np.abs(lam - z).min(), np.abs(lam - w).min()) < 1e-3:
        return
    rz, rw = rv.direct_resolvent(ev, z), rv.direct_resolvent(ev, w)
    res = np.linalg.norm(rz - rw - (w - z) * rz @ rw, 2)
    assert res <= 1e-9 * max(1.0, np.linalg.norm(rz, 2) * np.linalg.norm(rw, 2))


# ----------------------------------------------------------------- norms

@pytest.mark.parametrize("method", ["svd", "schur", "smw"])
def test_inv_norm_scalar_distance(method):
    ev = rv.ResolventEvaluator.from_snapshots(_snap(np.eye(2, dtype=complex), 0.5 * np.eye(2, dtype=complex)))
    assert rv.inv_resolvent_norm(ev, 1.5, method) == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize("method", ["svd", "schur"])
def test_inv_norm_vanishes_at_exact_eigenvalue(method):
    assert rv.inv_resolvent_norm(_ev(np.diag([0.5, 0.25])), 0.25, method) == 0.0


def test_inv_norm_unknown_method():
    with pytest.raises(ValueError):
        rv.inv_resolvent_norm(_ev(np.eye(2)), 2.0, "qr")


def test_inv_norm_smw_cross_check(rng):
    ev = rv.ResolventEvaluator.from_snapshots(_snap(crandn(rng, 30, 8), crandn(rng, 30, 8)))
    for z in (1.2, -0.3 + 1.1j, 2j):
        a = rv.inv_resolvent_norm(ev, z, "svd")
        assert rv.inv_resolvent_norm(ev, z, "smw") == pytest.approx(a, rel=1e-8)


@given(st.integers(0, 2 ** 31), st.integers(2, 10))
def test_normal_matrix_inv_norm_is_distance_to_spectrum(seed, n):
    rng = np.random.default_rng(seed)
    k, lam = _normal(rng, n)
    ev = _ev(k)
    for z in crandn(rng, 4):
        d = np.abs(z - lam).min()
        assert abs(rv.inv_resolvent_norm(ev, z) - d) <= 1e-10 * max(1.0, abs(z))
        assert abs(rv.inv_resolvent_norm(ev, z, "schur") - d) <= 1e-10 * max(1.0, abs(z))


@given(st.integers(0, 2 ** 31), st.integers(1, 10))
def test_inv_norm_bounded_by_eigenvalue_distance(seed, n):
    rng = np.random.default_rng(seed)
    ev = _ev(crandn(rng, n, n))
    for z in crandn(rng, 4) * 2:
        assert rv.inv_resolvent_norm(ev, z) <= np.abs(z - ev.eigenvalues).min() + 1e-12


@given(st.integers(0, 2 ** 31), st.integers(1, 10))
def test_conjugate_symmetry_for_real_matrices(seed, n):
    rng = np.random.default_rng(seed)
    ev = _ev(rng.standard_normal((n, n)))
    for z in crandn(rng, 3):
        a, b = rv.inv_resolvent_norm(ev, z), rv.inv_resolvent_norm(ev, np.conj(z))
        assert abs(a - b) <= 1e-12 * max(1.0, a)


# ----------------------------------------------------------------- scans

def test_scan_circle_zero_operator():
    g = rv.scan_circle(_ev(np.zeros((3, 3))), 2.0, 16)
    np.testing.assert_allclose(g.inv_norms, 2.0, rtol=1e-12)
    assert g.grid_kind == "circle"


def test_scan_circle_minimum_at_angle_zero():
    g = rv.scan_circle(_ev(np.diag([0.9])), 1.01, 360)
    assert int(np.argmin(g.inv_norms)) == 0
    assert g.inv_norms.min() == pytest.approx(0.11, abs=1e-12)


def test_scan_circle_validation():
    with pytest.raises(ValueError):
        rv.scan_circle(_ev(np.eye(2)), 0.0, 10)
    with pytest.raises(ValueError):
        rv.scan_circle(_ev(np.eye(2)), 1.0, 3)


def test_scan_rectangle_zero_operator():
    g = rv.scan_rectangle(_ev(np.zeros((2, 2))), (1, 2), (0, 0), nx=2, ny=2)
    np.testing.assert_allclose(g.inv_norms, [1, 2, 1, 2], rtol=1e-12)
    assert g.shape == (2, 2)
    with pytest.raises(ValueError):
        rv.scan_rectangle(_ev(np.eye(2)), (0, 1), (0, 1), nx=1, ny=2)


def test_scan_rectangle_conjugate_symmetric_for_real_matrix(rng):
    ev = _ev(rng.standard_normal((15, 15)) / 4)
    g = rv.scan_rectangle(ev, (-1, 1), (-1, 1), nx=11, ny=11)
    v = g.inv_norms.reshape(11, 11)
    np.testing.assert_allclose(v, v[::-1], atol=1e-12)


def test_scan_rectangle_smw_route_handles_origin(rng):
    s = _snap(crandn(rng, 20, 4), crandn(rng, 20, 4), dt=0.1)
    ev = rv.ResolventEvaluator.from_snapshots(s, mode="generator")
    g = rv.scan_rectangle(ev, (-1, 1), (-1, 1), nx=3, ny=3, method="smw")
    ref = rv.scan_rectangle(ev, (-1, 1), (-1, 1), nx=3, ny=3, method="svd")
    np.testing.assert_allclose(g.inv_norms, ref.inv_norms, rtol=1e-8)


def test_scan_results_do_not_depend_on_thread_count(rng):
    ev = _ev(crandn(rng, 30, 30) / 6)
    zs = rv.circle_points(1.05, 50)
    one = rv.scan_points(ev, zs, threads=1)
    many = rv.scan_points(ev, zs, threads=4)
    np.testing.assert_array_equal(one, many)


def test_grid_csv_round_trip(tmp_path):
    g = rv.scan_circle(_ev(np.diag([0.9, 0.3j])), 1.01, 12)
    p = tmp_path / "g.csv"
    g.to_csv(p)
    assert p.read_text().splitlines()[0] == "re(z),im(z),inv_norm"
    back = rv.PseudospectrumGrid.from_csv(p)
    np.testing.assert_array_equal(back.points, g.points)
    np.testing.assert_array_equal(back.inv_norms, g.inv_norms)


def test_grid_validation():
    with pytest.raises(ValueError):
        rv.PseudospectrumGrid(np.zeros(2, complex), np.zeros(3), "points", {})
    with pytest.raises(ValueError):
        rv.PseudospectrumGrid(np.zeros(1, complex), np.array([-1.0]), "points", {})


# ----------------------------------------------------------------- detection

def test_detect_extremes():
    g = rv.scan_circle(_ev(np.diag([0.9, -0.5])), 1.01, 40)
    assert rv.detect(g, 0.5 * g.inv_norms.min()).count == 0
    assert rv.detect(g, 2 * g.inv_norms.max()).count == 40
    with pytest.raises(ValueError):
        rv.detect(g, 0.0)


def test_detect_is_strict():
    g = rv.PseudospectrumGrid(np.array([0, 1, 2], complex), np.array([0.1, 0.2, 0.3]), "points", {})
    np.testing.assert_array_equal(rv.detect(g, 0.2).detected, [0])


@given(st.lists(st.floats(0, 10), min_size=1, max_size=40), st.floats(1e-6, 10), st.floats(1e-6, 10))
def test_detect_monotone_in_threshold(vals, t1, t2):
    v = np.array(vals)
    g = rv.PseudospectrumGrid(np.arange(v.size).astype(complex), v, "points", {})
    lo, hi = sorted((t1, t2))
    a, b = rv.detect(g, lo), rv.detect(g, hi)
    assert set(a.detected.tolist()) <= set(b.detected.tolist())
    assert np.all(g.inv_norms[a.mask] < lo)


def test_detection_csv_has_flag_column(tmp_path):
    g = rv.scan_circle(_ev(np.diag([0.9])), 1.01, 8)
    d = rv.detect(g, 0.2)
    d.to_csv(tmp_path / "d.csv")
    rows = (tmp_path / "d.csv").read_text().splitlines()
    assert rows[0] == "re(z),im(z),inv_norm,detected"
    assert [r.split(",")[-1] for r in rows[1:]] == [str(int(m)) for m in d.mask]


# ----------------------------------------------------------------- pseudoeigenfunctions

def test_pseudoeigenfunction_picks_nearest_diagonal_mode():
    pf = rv.pseudoeigenfunction(_ev(np.diag([0.9, 0.1])), 0.95)
    np.testing.assert_allclose(pf.coeffs, [1, 0], atol=1e-14)
    assert pf.amplification == pytest.approx(20.0)


def test_pseudoeigenfunction_converges_to_eigenvector(rng):
    k, lam = _normal(rng, 6)
    pf = rv.pseudoeigenfunction(_ev(k), lam[2] + 1e-6)
    _, vecs = np.linalg.eig(k)
    v = vecs[:, np.argmin(np.abs(np.linalg.eigvals(k) - lam[2]))]
    assert abs(abs(np.vdot(v, pf.coeffs)) - 1.0) < 1e-8


@given(st.integers(0, 2 ** 31), st.integers(1, 10))
def test_pseudoeigenfunction_normalization_and_amplification(seed, n):
    rng = np.random.default_rng(seed)
    ev = _ev(crandn(rng, n, n))
    z = complex(crandn(rng, 1)[0])
    pf = rv.pseudoeigenfunction(ev, z)
    assert abs(np.linalg.norm(pf.coeffs) - 1.0) <= 1e-12
    assert pf.amplification * rv.inv_resolvent_norm(ev, z) == pytest.approx(1.0, abs=1e-10)
    i = np.argmax(np.abs(pf.coeffs))
    assert pf.coeffs[i].imag == 0 and pf.coeffs[i].real > 0


def test_pseudoeigenfunction_at_exact_eigenvalue():
    pf = rv.pseudoeigenfunction(_ev(np.diag([0.5, 0.2])), 0.2)
    assert pf.amplification == np.inf
    np.testing.assert_allclose(pf.coeffs, [0, 1], atol=1e-15)


def test_evaluator_validation(rng):
    with pytest.raises(ValueError):
        _ev(np.ones((2, 3)))
    with pytest.raises(ValueError):
        rv.ResolventEvaluator(np.eye(2), "semigroup")
    with pytest.raises(ValueError):
        rv.ResolventEvaluator(np.eye(2), "koopman", crandn(rng, 2, 5), crandn(rng, 4, 2))
