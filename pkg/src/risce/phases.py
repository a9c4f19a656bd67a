"""Baseline phase allocation matrices and the exhaustive DFT-column study.

Two classic allocation books are provided: a DFT submatrix (rows wrap with
period ``N_v``) and random unimodular entries.  The exhaustive search
scores every combination of columns of the full ``(L + 1)``-point DFT
matrix per test sample and aggregates how often each column appears in the
winning combinations; it is a study tool, deliberately brute force.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .model import PhaseMatrix, complex_normal, vec_batch


def dft_submatrix(ris_elements: int, num_phases: int) -> PhaseMatrix:
    """DFT submatrix allocation: entry ``(m, n)`` is ``exp(j 2 pi m n / N_v)``
    with zero-based indices.

    For ``num_phases == ris_elements + 1`` this is the full square DFT
    matrix with orthogonal columns; for fewer allocations the columns are
    not orthogonal.
    """
    if num_phases < 1:
        raise ValueError(f"num_phases must be >= 1, got {num_phases}")
    rows = np.arange(ris_elements + 1)[:, np.newaxis]
    cols = np.arange(num_phases)[np.newaxis, :]
    mat = np.exp(2j * np.pi * rows * cols / num_phases)
    mat[0, :] = 1.0
    return PhaseMatrix(mat)


def dft_column_subset(ris_elements: int, columns) -> PhaseMatrix:
    """Allocation built from selected columns of the full ``(L + 1)``-point DFT.

    `columns` are 1-based indices into ``1..L+1``; duplicates or
    out-of-range indices raise ``ValueError``.
    """
    size = ris_elements + 1
    columns = list(columns)
    if len(columns) == 0:
        raise ValueError("need at least one DFT column")
    if len(set(columns)) != len(columns):
        raise ValueError(f"duplicate DFT column indices in {columns}")
    for c in columns:
        if not 1 <= c <= size:
            raise ValueError(f"DFT column index {c} outside 1..{size}")
    rows = np.arange(size)[:, np.newaxis]
    cols = np.asarray(columns)[np.newaxis, :] - 1
    mat = np.exp(2j * np.pi * rows * cols / size)
    mat[0, :] = 1.0
    return PhaseMatrix(mat)


def random_phases(ris_elements: int, num_phases: int, rng: np.random.Generator) -> PhaseMatrix:
    """Random unimodular allocation: i.i.d. complex Gaussian entries divided
    by their absolute value.

    The first row is forced to one afterwards; the physical direct path has
    no configurable coefficient, so the random recipe only applies to the
    RIS rows.
    """
    if num_phases < 1:
        raise ValueError(f"num_phases must be >= 1, got {num_phases}")
    draws = complex_normal(rng, (ris_elements + 1, num_phases))
    mat = draws / np.abs(draws)
    mat[0, :] = 1.0
    return PhaseMatrix(mat)


@dataclass(frozen=True)
class DftSearchResult:
    """Outcome of the exhaustive DFT-column search.

    `histogram` holds the relative frequency of each DFT column (1-based
    position = index + 1) among the per-sample winning combinations and
    sums to one.  `best_average_set` minimizes the mean squared error over
    all samples; ties break toward the lexicographically smallest set.
    """

    per_sample_best: list[tuple[int, ...]]
    histogram: np.ndarray
    best_average_set: tuple[int, ...]
    best_average_nmse: float


def exhaustive_dft_search(dataset, estimator, num_phases: int, noise_variance: float,
                          rng: np.random.Generator | None = None,
                          noise: np.ndarray | None = None,
                          max_combinations: int = 200_000) -> DftSearchResult:
    """Try every combination of DFT columns and record the winners.

    One noise realization is drawn per sample and reused across all
    combinations of that sample, so combinations compete on equal noise.
    The per-sample winner minimizes the squared error of the composite
    channel estimate.  `noise` may be passed explicitly (shape
    ``(N, M, num_phases)``) instead of `rng`, mainly for testing.

    Refuses to run when the number of combinations exceeds
    `max_combinations` (the count is part of the message).
    """
    size = dataset.ris_elements + 1
    if not 1 <= num_phases <= size:
        raise ValueError(f"num_phases must be in 1..{size}, got {num_phases}")
    n_samples = len(dataset)
    if n_samples == 0:
        raise ValueError("dataset must be nonempty")
    count = math.comb(size, num_phases)
    if count > max_combinations:
        raise ValueError(
            f"exhaustive search over {count} combinations exceeds the cap of "
            f"{max_combinations}; raise max_combinations to force it"
        )

    m = dataset.bs_antennas
    if noise is None:
        if noise_variance > 0:
            if rng is None:
                raise ValueError("rng required to draw search noise")
            noise = complex_normal(rng, (n_samples, m, num_phases), noise_variance)
        else:
            noise = np.zeros((n_samples, m, num_phases), dtype=np.complex128)
    elif noise.shape != (n_samples, m, num_phases):
        raise ValueError(
            f"noise shape {noise.shape} must be ({n_samples}, {m}, {num_phases})"
        )

    composites = dataset.composites
    targets = vec_batch(composites)
    combos = list(itertools.combinations(range(1, size + 1), num_phases))
    errors = np.empty((len(combos), n_samples))
    for ci, combo in enumerate(combos):
        phases = dft_column_subset(dataset.ris_elements, combo)
        ys = vec_batch(composites @ phases.mat + noise)
        estimates = estimator.estimate_batch(ys, phases, noise_variance)
        errors[ci] = np.sum(np.abs(estimates - targets) ** 2, axis=1)

    # np.argmin takes the first minimum, i.e. the lexicographically
    # smallest combination on ties.
    best_idx = np.argmin(errors, axis=0)
    per_sample_best = [combos[i] for i in best_idx]
    counts = np.zeros(size)
    for combo in per_sample_best:
        for c in combo:
            counts[c - 1] += 1
    histogram = counts / (n_samples * num_phases)

    mean_errors = errors.mean(axis=1)
    best_avg_idx = int(np.argmin(mean_errors))
    best_average_nmse = float(mean_errors[best_avg_idx] / dataset.composite_dim)
    return DftSearchResult(
        per_sample_best=per_sample_best,
        histogram=histogram,
        best_average_set=combos[best_avg_idx],
        best_average_nmse=best_average_nmse,
    )


def write_histogram_csv(result: DftSearchResult, path) -> None:
    """Write the column-occurrence histogram as ``column,relative_frequency``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["column", "relative_frequency"])
        for i, freq in enumerate(result.histogram, start=1):
            writer.writerow([i, repr(float(freq))])
