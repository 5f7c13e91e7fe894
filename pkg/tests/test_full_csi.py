import numpy as np
import pytest

from irsdiag.channel import ArrayGeometry, channel_vector, sample_paths
from irsdiag.errors import InvalidInputError
from irsdiag.full_csi import (LassoADMM, LassoConfig, build_sensing_matrix, default_lambda1,
                              diagnose_full_csi, lasso_objective, reference_signal, solve_lasso)
from irsdiag.system import (db_to_linear, observe_k, sample_failure_mask, sample_weights,
                            threshold_faults)


def ista(A, b, lam, iters=100_000):
    """Proximal gradient on ||b - A x||^2 + lam ||x||_1, fixed step 1/L."""
    L = 2.0 * np.linalg.norm(A, 2) ** 2
    x = np.zeros(A.shape[1], dtype=complex)
    for _ in range(iters):
        z = x - 2.0 * A.conj().T @ (A @ x - b) / L
        mag = np.abs(z)
        x = np.where(mag > lam / L, z * (1 - lam / L / np.maximum(mag, 1e-300)), 0)
    return x


def rand_instance(rng, K=20, N=40, s=4):
    A = (rng.standard_normal((K, N)) + 1j * rng.standard_normal((K, N))) / np.sqrt(2 * K)
    x = np.zeros(N, dtype=complex)
    x[rng.choice(N, s, replace=False)] = rng.standard_normal(s) + 1j * rng.standard_normal(s)
    b = A @ x + 0.01 * (rng.standard_normal(K) + 1j * rng.standard_normal(K))
    return A, b


def test_lasso_separable_closed_form():
    x, rec = solve_lasso(np.eye(2), np.array([2.0, 0.0]), LassoConfig(lam=1.0))
    np.testing.assert_allclose(x, [1.5, 0], atol=1e-6)
    assert rec.converged


def test_lasso_zero_rhs():
    rng = np.random.default_rng(0)
    A, _ = rand_instance(rng)
    x, _ = solve_lasso(A, np.zeros(20), LassoConfig(lam=0.1))
    np.testing.assert_array_equal(x, 0)


def test_lasso_matches_ista():
    rng = np.random.default_rng(1)
    A, b = rand_instance(rng)
    lam = 0.05
    x, _ = solve_lasso(A, b, LassoConfig(lam=lam, max_iter=20_000, reltol=1e-10, abstol=1e-12))
    ref = ista(A, b, lam)
    f, f_ref = lasso_objective(A, b, x, lam), lasso_objective(A, b, ref, lam)
    assert abs(f - f_ref) <= 1e-6 * f_ref


def test_lasso_scaling_covariance():
    rng = np.random.default_rng(2)
    A, b = rand_instance(rng)
    cfg = dict(max_iter=20_000, reltol=1e-10, abstol=1e-12)
    x1, _ = solve_lasso(A, b, LassoConfig(lam=0.05, **cfg))
    c = 3.0
    # rho scales with c^2 so the ADMM iterates coincide
    x2, _ = solve_lasso(c * A, c * b, LassoConfig(lam=0.05 * c * c, rho=c * c, **cfg))
    np.testing.assert_allclose(x1, x2, atol=1e-7)


def test_lasso_noiseless_exact():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
    b = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    x, _ = solve_lasso(A, b, LassoConfig(lam=1e-10, max_iter=50_000, reltol=1e-12, abstol=1e-14))
    ref = np.linalg.solve(A, b)
    assert np.linalg.norm(x - ref) <= 1e-6 * np.linalg.norm(ref)


def test_lasso_sparsity_monotone_in_lambda():
    rng = np.random.default_rng(4)
    A, b = rand_instance(rng)
    counts = []
    for lam in np.geomspace(1e-3, 1.0, 10):
        x, _ = solve_lasso(A, b, LassoConfig(lam=lam, max_iter=20_000, reltol=1e-10, abstol=1e-12))
        counts.append(np.sum(np.abs(x) > 1e-8))
    assert all(a >= b for a, b in zip(counts, counts[1:]))


def test_lasso_rejects_nan_and_flags_unconverged():
    with pytest.raises(InvalidInputError):
        solve_lasso(np.eye(2), np.array([np.nan, 0]), LassoConfig(lam=1.0))
    with pytest.raises(InvalidInputError):
        LassoConfig(lam=-1.0)
    rng = np.random.default_rng(5)
    A, b = rand_instance(rng)
    _, rec = solve_lasso(A, b, LassoConfig(lam=0.01, max_iter=2))
    assert not rec.converged and rec.iterations == 2


def test_group_penalty_row_shrink_at_identity():
    solver = LassoADMM(np.eye(3), rho=1.0, penalty="group")
    B = np.array([[3.0, 4.0], [0.1, 0.0], [0, 0]])
    # ||X - B||^2 + lam ||X||_{2,1} shrinks each row by lam/2
    Z, _, _ = solver.solve(B, 2.0, max_iter=5000, reltol=1e-12, abstol=1e-14)
    np.testing.assert_allclose(Z, [[2.4, 3.2], [0, 0], [0, 0]], atol=1e-6)


def test_sensing_matrix_and_reference():
    rng = np.random.default_rng(6)
    N, K = 10, 6
    F = sample_weights(K, N, rng)
    np.testing.assert_array_equal(build_sensing_matrix(F, np.ones(N), np.ones(N)), F)
    h_tx = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    h_rx = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    Fh = build_sensing_matrix(F, h_tx, h_rx)
    mask = sample_failure_mask(N, 3, rng)
    np.testing.assert_allclose(Fh @ mask.m, observe_k(mask, F, h_tx, h_rx, np.inf, rng).y, atol=1e-12)
    np.testing.assert_allclose(reference_signal(Fh), observe_k(np.ones(N), F, h_tx, h_rx, np.inf, rng).y,
                               atol=1e-12)
    np.testing.assert_array_equal(reference_signal(np.zeros((3, 4))), np.zeros(3))
    np.testing.assert_array_equal(reference_signal(np.ones((1, 4))), [4])


def _setup(rng, geo, n_faults, K, snr):
    N = geo.N
    h_tx = channel_vector(sample_paths(1, rng), geo)
    h_rx = channel_vector(sample_paths(1, rng, role="RX"), geo)
    mask = sample_failure_mask(N, n_faults, rng)
    F = sample_weights(K, N, rng)
    return mask, h_tx, h_rx, observe_k(mask, F, h_tx, h_rx, snr, rng)


def test_diagnose_no_faults_noiseless():
    rng = np.random.default_rng(7)
    geo = ArrayGeometry(4, 4)
    mask, h_tx, h_rx, ms = _setup(rng, geo, 0, 10, np.inf)
    res = diagnose_full_csi(ms, h_tx, h_rx, m_true=mask.m)
    np.testing.assert_allclose(res.m_hat, 1.0, atol=1e-6)
    np.testing.assert_array_equal(res.m_hat - 1, res.components["x_hat"])


def test_diagnose_single_fault_matches_least_squares():
    rng = np.random.default_rng(8)
    geo = ArrayGeometry(4, 4)
    N = geo.N
    h_tx = channel_vector(sample_paths(1, rng), geo)
    h_rx = channel_vector(sample_paths(1, rng, role="RX"), geo)
    m = np.ones(N, dtype=complex)
    m[5] = 0.3
    F = sample_weights(N, N, rng)
    ms = observe_k(m, F, h_tx, h_rx, np.inf, rng)
    res = diagnose_full_csi(ms, h_tx, h_rx, LassoConfig(lam=1e-8, max_iter=50_000, reltol=1e-12, abstol=1e-14))
    ls = np.linalg.lstsq(build_sensing_matrix(F, h_tx, h_rx), ms.y, rcond=None)[0]
    assert abs(res.m_hat[5] - ls[5]) < 1e-3
    assert abs(res.m_hat[5] - 0.3) < 1e-3


def test_diagnose_support_recovery_rate():
    geo = ArrayGeometry(16, 16)
    N = geo.N
    K = round(0.3 * N)
    snr = db_to_linear(30)
    hits = 0
    for seed in range(100):
        rng = np.random.default_rng([8, seed])
        mask, h_tx, h_rx, ms = _setup(rng, geo, 5, K, snr)
        res = diagnose_full_csi(ms, h_tx, h_rx, LassoConfig(lam=default_lambda1(K, snr)))
        hits += res.faults == threshold_faults(mask.m, 0.2)
    assert hits >= 95
