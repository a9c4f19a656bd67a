"""Tests of the core observation model."""

import numpy as np
import pytest
from conftest import crandn, desk_dataset

from risce.model import (
    Observation,
    PhaseMatrix,
    SystemDims,
    assemble_composite,
    build_observation_matrix,
    complex_normal,
    nmse,
    observe,
    snr_to_noise_variance,
    unvec,
    unvec_batch,
    vec,
    vec_batch,
)


class TestSystemDims:
    def test_valid(self):
        dims = SystemDims(8, 16, 8)
        assert dims.composite_dim == 8 * 17

    @pytest.mark.parametrize("args", [(0, 1, 1), (1, 0, 1), (1, 1, 0), (-3, 2, 2)])
    def test_rejects_nonpositive(self, args):
        with pytest.raises(ValueError):
            SystemDims(*args)

    def test_more_phases_than_full_illumination_allowed(self):
        SystemDims(2, 3, 10)


class TestAssembleComposite:
    def test_zero_cascade(self):
        h0 = np.array([1.0 + 1j, 2.0])
        composite = assemble_composite(h0, np.zeros(3), np.ones((2, 3)))
        assert np.array_equal(composite[:, 0], h0)
        assert np.all(composite[:, 1:] == 0)

    def test_scalar_khatri_rao(self):
        composite = assemble_composite(np.array([1.0]), np.array([1j]), np.array([[2.0]]))
        assert np.allclose(composite, np.array([[1.0, 2.0j]]))

    def test_matches_entrywise_oracle(self):
        rng = np.random.default_rng(7)
        m, el = 2, 3
        h0, h1 = crandn(rng, m), crandn(rng, el)
        h2 = crandn(rng, (m, el))
        composite = assemble_composite(h0, h1, h2)
        # independent entry-by-entry loop
        for i in range(m):
            assert composite[i, 0] == h0[i]
            for l in range(el):
                assert composite[i, l + 1] == pytest.approx(h1[l] * h2[i, l])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="ris_bs"):
            assemble_composite(np.zeros(2), np.zeros(3), np.zeros((2, 4)))


class TestPhaseMatrix:
    def test_accepts_valid(self):
        mat = np.exp(1j * np.linspace(0, 3, 12)).reshape(3, 4)
        mat[0, :] = 1.0
        pm = PhaseMatrix(mat)
        assert pm.num_phases == 4
        assert pm.ris_elements == 2
        assert np.asarray(pm) is pm.mat

    def test_rejects_non_unimodular(self):
        mat = np.ones((3, 2), dtype=complex)
        mat[1, 0] = 0.5
        with pytest.raises(ValueError, match="unit modulus"):
            PhaseMatrix(mat)

    def test_rejects_bad_first_row(self):
        mat = np.ones((3, 2), dtype=complex)
        mat[0, 1] = 1j
        with pytest.raises(ValueError, match="first row"):
            PhaseMatrix(mat)


class TestObserve:
    def test_noiseless(self):
        rng = np.random.default_rng(0)
        composite = crandn(rng, (3, 5))
        v = np.exp(2j * np.pi * rng.random((5, 4)))
        v[0, :] = 1.0
        obs = observe(composite, v, 0.0)
        assert np.array_equal(obs.mat, composite @ v)
        assert isinstance(obs, Observation)

    def test_identity_phases(self):
        rng = np.random.default_rng(1)
        composite = crandn(rng, (3, 4))
        obs = observe(composite, np.eye(4), 0.0)
        assert np.allclose(obs.mat, composite)

    def test_noiseless_is_rng_independent(self):
        rng_a = np.random.default_rng(1)
        rng_b = np.random.default_rng(2)
        composite = crandn(np.random.default_rng(3), (2, 3))
        v = np.ones((3, 2), dtype=complex)
        obs_a = observe(composite, v, 0.0, rng_a)
        obs_b = observe(composite, v, 0.0, rng_b)
        assert np.array_equal(obs_a.mat, obs_b.mat)
        # and the rngs were never advanced
        assert rng_a.integers(100) == np.random.default_rng(1).integers(100)

    def test_vectorization_consistency(self):
        # vec(Y) = A vec(H) + vec(N) for a captured noise realization
        rng = np.random.default_rng(5)
        m, el, n_v = 2, 2, 2
        composite = crandn(rng, (m, el + 1))
        v = np.exp(2j * np.pi * rng.random((el + 1, n_v)))
        v[0, :] = 1.0
        noise_rng = np.random.default_rng(11)
        obs = observe(composite, v, 0.25, noise_rng)
        noise = obs.mat - composite @ v
        a_mat = build_observation_matrix(v, m)
        assert np.allclose(obs.vec, a_mat @ vec(composite) + vec(noise), atol=1e-14)

    def test_negative_variance_rejected(self):
        with pytest.raises(ValueError, match="nonnegative"):
            observe(np.ones((1, 2)), np.ones((2, 1)), -1.0)

    def test_rng_required_for_noise(self):
        with pytest.raises(ValueError, match="rng"):
            observe(np.ones((1, 2)), np.ones((2, 1)), 0.5)


class TestObservationMatrix:
    def test_identity_phases_give_identity(self):
        a_mat = build_observation_matrix(np.eye(4), 3)
        assert np.array_equal(a_mat, np.eye(12))

    def test_single_antenna_gives_transpose(self):
        rng = np.random.default_rng(2)
        v = np.exp(2j * np.pi * rng.random((3, 5)))
        assert np.array_equal(build_observation_matrix(v, 1), v.T)

    def test_kronecker_identity_random(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            m, el, n_v = 2, 1, 2
            v = np.exp(2j * np.pi * rng.random((el + 1, n_v)))
            v[0, :] = 1.0
            a_mat = build_observation_matrix(v, m)
            h = crandn(rng, (m, el + 1))
            assert np.allclose(a_mat @ vec(h), vec(h @ v), atol=1e-13)

    def test_kronecker_identity_sweep(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            m = int(rng.integers(1, 9))
            el = int(rng.integers(1, 9))
            n_v = int(rng.integers(1, el + 3))
            v = np.exp(2j * np.pi * rng.random((el + 1, n_v)))
            v[0, :] = 1.0
            a_mat = build_observation_matrix(v, m)
            h = crandn(rng, (m, el + 1))
            assert np.abs(a_mat @ vec(h) - vec(h @ v)).max() < 1e-12


class TestSnrConversion:
    @pytest.mark.parametrize("snr_db,expected", [(0.0, 1.0), (40.0, 1e-4), (-10.0, 10.0)])
    def test_values(self, snr_db, expected):
        assert snr_to_noise_variance(snr_db) == pytest.approx(expected, rel=1e-12)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            snr_to_noise_variance(np.inf)


class TestNmse:
    def test_perfect_estimate(self):
        h = np.ones((3, 2, 4), dtype=complex)
        assert nmse(h, h) == 0.0

    def test_hand_computed(self):
        true = np.array([[[1.0 + 0j, 0.0]]])
        est = np.zeros_like(true)
        assert nmse(true, est) == pytest.approx(0.5)

    def test_zero_estimator_on_normalized_data(self):
        dataset = desk_dataset(count=400, seed=9)
        composites = dataset.composites
        assert nmse(composites, np.zeros_like(composites)) == pytest.approx(1.0, abs=1e-9)

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError, match="nonempty"):
            nmse(np.zeros((0, 2, 2)), np.zeros((0, 2, 2)))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="mismatch"):
            nmse(np.zeros((1, 2, 2)), np.zeros((1, 2, 3)))


class TestNoiseStatistics:
    def test_complex_normal_variance(self):
        rng = np.random.default_rng(12)
        sigma2 = 0.7
        draws = complex_normal(rng, 400_000, sigma2)
        assert np.var(draws) == pytest.approx(sigma2, rel=0.02)
        assert np.var(draws.real) == pytest.approx(sigma2 / 2, rel=0.02)
        assert np.var(draws.imag) == pytest.approx(sigma2 / 2, rel=0.02)

    def test_rejects_negative_variance(self):
        with pytest.raises(ValueError):
            complex_normal(np.random.default_rng(0), 3, -0.1)


class TestVecHelpers:
    def test_vec_is_column_major(self):
        mat = np.array([[1, 2], [3, 4]])
        assert np.array_equal(vec(mat), [1, 3, 2, 4])
        assert np.array_equal(unvec(vec(mat), 2), mat)

    def test_batch_round_trip(self):
        rng = np.random.default_rng(6)
        mats = crandn(rng, (5, 3, 4))
        flat = vec_batch(mats)
        assert np.array_equal(flat[2], vec(mats[2]))
        assert np.array_equal(unvec_batch(flat, 3), mats)
