"""Tests of allocation constructors and the exhaustive DFT-column search."""

import csv
import itertools

import numpy as np
import pytest
from conftest import crandn, desk_dataset

from risce.estimators import LeastSquares
from risce.model import build_observation_matrix, vec
from risce.phases import (
    dft_column_subset,
    dft_submatrix,
    exhaustive_dft_search,
    random_phases,
    write_histogram_csv,
)


class TestDftSubmatrix:
    def test_full_square_orthogonal(self):
        el = 6
        mat = dft_submatrix(el, el + 1).mat
        gram = mat.conj().T @ mat
        assert np.allclose(gram, (el + 1) * np.eye(el + 1), atol=1e-10)

    def test_cited_entry(self):
        # second row, second column with 8 allocations: exp(j 2 pi / 8)
        mat = dft_submatrix(16, 8).mat
        expected = np.sqrt(2) / 2 * (1 + 1j)
        assert mat[1, 1] == pytest.approx(expected, abs=1e-12)

    def test_reduced_columns_not_orthogonal(self):
        mat = dft_submatrix(16, 8).mat
        gram = mat.conj().T @ mat
        off_diag = gram - np.diag(np.diag(gram))
        assert np.abs(off_diag).max() > 1.0

    def test_first_row_ones_and_unit_modulus(self):
        pm = dft_submatrix(5, 3)
        assert np.array_equal(pm.mat[0], np.ones(3))
        assert np.abs(np.abs(pm.mat) - 1).max() < 1e-12


class TestDftColumnSubset:
    def test_dc_column(self):
        pm = dft_column_subset(4, [1])
        assert np.allclose(pm.mat, np.ones((5, 1)))

    def test_all_columns_equal_full_dft(self):
        el = 7
        subset = dft_column_subset(el, range(1, el + 2)).mat
        full = dft_submatrix(el, el + 1).mat
        assert np.array_equal(subset, full)

    def test_paper_reported_best_set_constructs(self):
        pm = dft_column_subset(16, [1, 2, 3, 4, 14, 15, 16, 17])
        assert pm.mat.shape == (17, 8)
        assert np.abs(np.abs(pm.mat) - 1).max() < 1e-12

    def test_duplicate_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            dft_column_subset(4, [1, 1, 2])

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="outside"):
            dft_column_subset(4, [0, 2])
        with pytest.raises(ValueError, match="outside"):
            dft_column_subset(4, [6])


class TestRandomPhases:
    def test_unit_modulus(self):
        pm = random_phases(6, 4, np.random.default_rng(0))
        assert np.abs(np.abs(pm.mat) - 1).max() < 1e-12

    def test_first_row_ones(self):
        pm = random_phases(6, 4, np.random.default_rng(1))
        assert np.array_equal(pm.mat[0], np.ones(4))

    def test_deterministic_given_seed(self):
        a = random_phases(5, 3, np.random.default_rng(7))
        b = random_phases(5, 3, np.random.default_rng(7))
        assert np.array_equal(a.mat, b.mat)


def _oracle_search(dataset, num_phases, noise, noise_variance):
    """Independent brute force: explicit DFT entries, full observation
    matrix pseudoinverse per combination, per-sample python loops."""
    size = dataset.ris_elements + 1
    m = dataset.bs_antennas
    per_sample_best = []
    combo_errors = {}
    for combo in itertools.combinations(range(1, size + 1), num_phases):
        v = np.empty((size, num_phases), dtype=complex)
        for row in range(size):
            for pos, col in enumerate(combo):
                v[row, pos] = np.exp(2j * np.pi * row * (col - 1) / size)
        a_mat = build_observation_matrix(v, m)
        a_pinv = np.linalg.pinv(a_mat)
        errors = []
        for i in range(len(dataset)):
            h = dataset.composites[i]
            y = vec(h @ v + noise[i])
            estimate = a_pinv @ y
            errors.append(np.sum(np.abs(estimate - vec(h)) ** 2))
        combo_errors[combo] = errors
    combos = sorted(combo_errors)
    for i in range(len(dataset)):
        best = min(combos, key=lambda c: (combo_errors[c][i], c))
        per_sample_best.append(best)
    best_avg = min(combos, key=lambda c: (np.mean(combo_errors[c]), c))
    return per_sample_best, best_avg


class TestExhaustiveSearch:
    def test_single_combination_uniform_histogram(self):
        dataset = desk_dataset(count=5, seed=1)
        el = dataset.ris_elements
        result = exhaustive_dft_search(dataset, LeastSquares(), el + 1, 0.0)
        assert len(result.per_sample_best) == 5
        assert result.best_average_set == tuple(range(1, el + 2))
        assert np.allclose(result.histogram, 1.0 / (el + 1))

    def test_matches_independent_oracle(self):
        # small setup (L = 3) so the loop oracle stays fast
        from risce.channelgen import ScenarioConfig, generate, normalize
        from risce.model import SystemDims

        config = ScenarioConfig(
            dims=SystemDims(2, 3, 2), ris_rows=1, ris_cols=3,
            clusters_direct=2, clusters_mt_ris=2,
            rician_k_factor=5.0, angle_spread_deg=5.0, seed=2,
        )
        dataset = normalize(generate(config, 5))
        rng = np.random.default_rng(3)
        noise = crandn(rng, (5, 2, 2)) * np.sqrt(0.05)
        result = exhaustive_dft_search(dataset, LeastSquares(), 2, 0.05, noise=noise)
        oracle_best, oracle_avg = _oracle_search(dataset, 2, noise, 0.05)
        assert result.per_sample_best == oracle_best
        assert result.best_average_set == oracle_avg

    def test_combination_count_cap(self):
        dataset = desk_dataset(count=2, seed=3)
        with pytest.raises(ValueError, match="126"):
            exhaustive_dft_search(dataset, LeastSquares(), 4, 0.0, max_combinations=10)

    def test_histogram_sums_to_one(self):
        dataset = desk_dataset(count=8, seed=4)
        result = exhaustive_dft_search(dataset, LeastSquares(), 2, 0.0)
        assert result.histogram.sum() == pytest.approx(1.0, abs=1e-12)
        assert all(len(set(combo)) == 2 for combo in result.per_sample_best)

    def test_per_sample_independence(self):
        # adding a sample never changes another sample's recorded best set
        rng = np.random.default_rng(5)
        big = desk_dataset(count=6, seed=6)
        noise = crandn(rng, (6, 4, 2)) * np.sqrt(0.1)
        full = exhaustive_dft_search(big, LeastSquares(), 2, 0.1, noise=noise)
        small = exhaustive_dft_search(big.subset(0, 4), LeastSquares(), 2, 0.1,
                                      noise=noise[:4])
        assert full.per_sample_best[:4] == small.per_sample_best

    def test_noise_shape_validated(self):
        dataset = desk_dataset(count=3, seed=7)
        with pytest.raises(ValueError, match="noise shape"):
            exhaustive_dft_search(dataset, LeastSquares(), 2, 0.1,
                                  noise=np.zeros((3, 4, 3), complex))

    def test_rng_required_for_noisy_search(self):
        dataset = desk_dataset(count=3, seed=8)
        with pytest.raises(ValueError, match="rng"):
            exhaustive_dft_search(dataset, LeastSquares(), 2, 0.1)


class TestHistogramCsv:
    def test_schema_and_normalization(self, tmp_path):
        dataset = desk_dataset(count=6, seed=9)
        result = exhaustive_dft_search(dataset, LeastSquares(), 3, 0.0)
        path = tmp_path / "hist.csv"
        write_histogram_csv(result, path)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["column", "relative_frequency"]
        assert len(rows) == 1 + dataset.ris_elements + 1
        freqs = [float(r[1]) for r in rows[1:]]
        assert sum(freqs) == pytest.approx(1.0, abs=1e-12)
        assert [int(r[0]) for r in rows[1:]] == list(range(1, dataset.ris_elements + 2))
