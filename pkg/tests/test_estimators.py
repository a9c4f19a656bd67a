"""Tests of the LS and sample-covariance LMMSE estimators."""

import numpy as np
import pytest
from conftest import crandn

from risce.errors import NumericError
from risce.estimators import (
    LeastSquares,
    SampleCovarianceLmmse,
    lmmse_estimate,
    ls_estimate,
    sample_covariance,
)
from risce.model import build_observation_matrix, vec, vec_batch
from risce.phases import dft_submatrix, random_phases


class TestLeastSquares:
    def test_exact_recovery_full_dft(self):
        rng = np.random.default_rng(0)
        m, el = 8, 16
        phases = dft_submatrix(el, el + 1)
        composite = crandn(rng, (m, el + 1))
        y = vec(composite @ phases.mat)
        estimate = ls_estimate(y, phases)
        assert np.abs(estimate - vec(composite)).max() < 1e-10

    def test_full_dft_pinv_closed_form(self):
        el = 6
        phases = dft_submatrix(el, el + 1).mat
        pinv = np.linalg.pinv(phases)
        assert np.allclose(pinv, phases.conj().T / (el + 1), atol=1e-12)

    def test_matches_full_observation_matrix_svd_oracle(self):
        # independent solver: pseudoinverse of the full Kronecker matrix
        rng = np.random.default_rng(1)
        m, el, n_v = 2, 2, 2
        phases = random_phases(el, n_v, rng)
        y = crandn(rng, m * n_v)
        a_mat = build_observation_matrix(phases, m)
        u, s, vh = np.linalg.svd(a_mat, full_matrices=False)
        keep = s > s.max() * max(a_mat.shape) * np.finfo(float).eps
        a_pinv = (vh[keep].conj().T / s[keep]) @ u[:, keep].conj().T
        assert np.allclose(ls_estimate(y, phases), a_pinv @ y, atol=1e-12)

    def test_rank_metadata(self):
        rng = np.random.default_rng(2)
        phases = random_phases(4, 2, rng)  # under-determined: N_v < L + 1
        y = crandn(rng, 3 * 2)
        estimate, rank = ls_estimate(y, phases, return_rank=True)
        assert estimate.shape == (3 * 5,)
        assert rank == 2

    def test_batch_agrees_with_single(self):
        rng = np.random.default_rng(3)
        phases = random_phases(3, 5, rng)
        ys = crandn(rng, (6, 2 * 5))
        batch = LeastSquares().estimate_batch(ys, phases, 0.0)
        for i in range(6):
            assert np.allclose(batch[i], ls_estimate(ys[i], phases), atol=1e-13)


class TestSampleCovariance:
    def test_single_basis_vector(self):
        e1 = np.zeros((1, 4), dtype=complex)
        e1[0, 0] = 1.0
        cov = sample_covariance(e1)
        expected = np.zeros((4, 4), dtype=complex)
        expected[0, 0] = 1.0
        assert np.array_equal(cov, expected)

    def test_law_of_large_numbers(self):
        rng = np.random.default_rng(4)
        draws = crandn(rng, (100_000, 6))
        cov = sample_covariance(draws)
        dev = np.linalg.norm(cov - np.eye(6)) / np.linalg.norm(np.eye(6))
        assert dev < 0.05

    def test_hermitian(self):
        rng = np.random.default_rng(5)
        cov = sample_covariance(crandn(rng, (50, 7)))
        assert np.abs(cov - cov.conj().T).max() < 1e-12

    def test_no_mean_subtraction(self):
        ones = np.ones((10, 3), dtype=complex)
        cov = sample_covariance(ones)
        assert np.allclose(cov, np.ones((3, 3)))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            sample_covariance(np.zeros((0, 3), dtype=complex))


class TestLmmse:
    def test_scalar_shrinkage(self):
        # C = I, A = I: estimate is y / (1 + sigma^2)
        y = np.array([1.0 + 1j, -2.0, 0.5j])
        phases = np.eye(3, dtype=complex)  # V = I (3 rows, 3 allocations), M = 1
        estimate = lmmse_estimate(y, phases, 0.5, np.eye(3, dtype=complex))
        assert np.allclose(estimate, y / 1.5, atol=1e-12)

    def test_shrinks_to_zero_with_noise(self):
        rng = np.random.default_rng(6)
        el, n_v, m = 3, 4, 2
        phases = random_phases(el, n_v, rng)
        cov = sample_covariance(crandn(rng, (500, m * (el + 1))))
        y = crandn(rng, m * n_v)
        norms = [np.linalg.norm(lmmse_estimate(y, phases, s2, cov)) for s2 in (1.0, 10.0, 100.0)]
        assert norms[0] > norms[1] > norms[2]

    def test_matches_dense_solver_oracle(self):
        rng = np.random.default_rng(7)
        el, n_v, m = 2, 3, 2
        phases = random_phases(el, n_v, rng)
        d = m * (el + 1)
        cov = sample_covariance(crandn(rng, (200, d)))
        y = crandn(rng, m * n_v)
        sigma2 = 0.3
        a_mat = build_observation_matrix(phases, m)
        inner = a_mat @ cov @ a_mat.conj().T + sigma2 * np.eye(m * n_v)
        oracle = cov @ a_mat.conj().T @ np.linalg.solve(inner, y)
        assert np.allclose(lmmse_estimate(y, phases, sigma2, cov), oracle, atol=1e-11)

    def test_singular_noise_free_raises(self):
        # rank-1 covariance, sigma^2 = 0: inner matrix singular
        cov = np.zeros((4, 4), dtype=complex)
        cov[0, 0] = 1.0
        y = np.ones(4, dtype=complex)
        with pytest.raises(NumericError, match="positive definite"):
            lmmse_estimate(y, np.eye(4, dtype=complex), 0.0, cov)

    def test_batch_agrees_with_single(self):
        rng = np.random.default_rng(8)
        el, n_v, m = 3, 3, 2
        phases = random_phases(el, n_v, rng)
        estimator = SampleCovarianceLmmse.fit(crandn(rng, (300, m * (el + 1))))
        ys = crandn(rng, (5, m * n_v))
        batch = estimator.estimate_batch(ys, phases, 0.2)
        for i in range(5):
            assert np.allclose(batch[i], estimator.estimate(ys[i], phases, 0.2), atol=1e-12)

    def test_fit_from_dataset_vectors(self):
        rng = np.random.default_rng(9)
        vectors = crandn(rng, (100, 6))
        estimator = SampleCovarianceLmmse.fit(vectors)
        assert np.allclose(estimator.cov, sample_covariance(vectors))

    def test_covariance_shape_mismatch(self):
        with pytest.raises(ValueError, match="covariance"):
            lmmse_estimate(np.ones(4, complex), np.eye(4, dtype=complex), 0.1,
                           np.eye(3, dtype=complex))


def test_vec_batch_consistency_with_estimators():
    # estimate_batch consumes rows produced by vec_batch
    rng = np.random.default_rng(10)
    phases = dft_submatrix(4, 5)
    composites = crandn(rng, (7, 3, 5))
    ys = vec_batch(composites @ phases.mat)
    estimates = LeastSquares().estimate_batch(ys, phases, 0.0)
    assert estimates.shape == (7, 15)
