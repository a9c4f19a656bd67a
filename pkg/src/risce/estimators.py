"""Reference channel estimators behind one common interface.

Every estimator maps a vectorized pilot observation ``y`` of length
``M N_v``, the phase allocation matrix used to produce it, and the noise
variance to an estimate of the vectorized composite channel (length
``M (L + 1)``).  Batched variants operate on ``(num_samples, M N_v)``
stacks and exist purely for speed; they must agree with the per-sample
path.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import NumericError
from .model import as_phase_array, build_observation_matrix, unvec, unvec_batch, vec, vec_batch


def _infer_bs_antennas(y_size: int, num_phases: int) -> int:
    if y_size % num_phases:
        raise ValueError(
            f"observation length {y_size} is not divisible by {num_phases} phase allocations"
        )
    return y_size // num_phases


def pinv_tolerance(mat: np.ndarray) -> float:
    """Relative singular value cutoff: max(shape) * eps."""
    return max(mat.shape) * np.finfo(np.float64).eps


def ls_estimate(y: np.ndarray, phases, noise_variance: float = 0.0,
                return_rank: bool = False):
    """Least squares channel estimate via the pseudoinverse of the phase matrix.

    Solves ``min ||A h - y||`` with ``A = V^T (x) I``; thanks to the
    Kronecker structure this reduces to one pseudoinverse of ``V``.  The
    noise variance is accepted for interface uniformity but unused.  With
    ``return_rank=True`` also reports the numerical rank of ``V`` so callers
    can flag under-determined setups (rank below ``L + 1``); rank deficiency
    is not an error.
    """
    del noise_variance
    v = as_phase_array(phases)
    y = np.asarray(y).reshape(-1)
    m = _infer_bs_antennas(y.size, v.shape[1])
    y_mat = unvec(y, m)
    estimate = vec(y_mat @ np.linalg.pinv(v, rcond=pinv_tolerance(v)))
    if return_rank:
        rank = int(np.linalg.matrix_rank(v, tol=None))
        return estimate, rank
    return estimate


def sample_covariance(vectors: np.ndarray) -> np.ndarray:
    """Empirical second moment ``(1/N) sum h h^H`` (no mean subtraction)."""
    vectors = np.asarray(vectors)
    if vectors.ndim != 2 or vectors.shape[0] == 0:
        raise ValueError("sample_covariance expects a nonempty (N, d) array")
    cov = vectors.T @ vectors.conj() / vectors.shape[0]
    # enforce exact Hermitian symmetry against roundoff
    return 0.5 * (cov + cov.conj().T)


def _lmmse_gain(cov: np.ndarray, obs_mat: np.ndarray, noise_variance: float) -> np.ndarray:
    """Gain matrix ``C A^H (A C A^H + sigma^2 I)^{-1}``."""
    inner = obs_mat @ cov @ obs_mat.conj().T
    inner[np.diag_indices_from(inner)] += noise_variance
    try:
        factor = scipy.linalg.cho_factor(inner)
        # (inner^{-1} (A C))^H == C A^H inner^{-1} for Hermitian C, inner
        return scipy.linalg.cho_solve(factor, obs_mat @ cov).conj().T
    except scipy.linalg.LinAlgError as exc:
        raise NumericError(
            f"observation covariance not positive definite "
            f"(noise variance {noise_variance}): {exc}"
        ) from exc


def lmmse_estimate(y: np.ndarray, phases, noise_variance: float, cov: np.ndarray) -> np.ndarray:
    """Linear MMSE estimate with a given channel covariance.

    Implements ``C A^H (A C A^H + sigma^2 I)^{-1} y`` with
    ``A = V^T (x) I``; with ``sigma^2 == 0`` the inner matrix must be
    invertible, otherwise a :class:`NumericError` is raised.
    """
    v = as_phase_array(phases)
    y = np.asarray(y).reshape(-1)
    m = _infer_bs_antennas(y.size, v.shape[1])
    obs_mat = build_observation_matrix(v, m)
    if cov.shape != (obs_mat.shape[1], obs_mat.shape[1]):
        raise ValueError(
            f"covariance shape {cov.shape} incompatible with observation matrix {obs_mat.shape}"
        )
    return _lmmse_gain(cov, obs_mat, noise_variance) @ y


class Estimator:
    """Common estimator interface; subclasses override `estimate`."""

    name = "base"

    def estimate(self, y: np.ndarray, phases, noise_variance: float) -> np.ndarray:
        raise NotImplementedError

    def estimate_batch(self, ys: np.ndarray, phases, noise_variance: float) -> np.ndarray:
        """Default batched path: loop over samples."""
        ys = np.asarray(ys)
        return np.stack([self.estimate(row, phases, noise_variance) for row in ys])


class LeastSquares(Estimator):
    name = "ls"

    def estimate(self, y, phases, noise_variance=0.0):
        return ls_estimate(y, phases, noise_variance)

    def estimate_batch(self, ys, phases, noise_variance=0.0):
        v = as_phase_array(phases)
        ys = np.asarray(ys)
        m = _infer_bs_antennas(ys.shape[1], v.shape[1])
        y_mats = unvec_batch(ys, m)
        return vec_batch(y_mats @ np.linalg.pinv(v, rcond=pinv_tolerance(v)))


class SampleCovarianceLmmse(Estimator):
    """LMMSE estimator around the cell-wide sample covariance."""

    name = "sample_cov"

    def __init__(self, cov: np.ndarray):
        self.cov = np.asarray(cov)

    @classmethod
    def fit(cls, training_vectors: np.ndarray) -> "SampleCovarianceLmmse":
        return cls(sample_covariance(training_vectors))

    def estimate(self, y, phases, noise_variance):
        return lmmse_estimate(y, phases, noise_variance, self.cov)

    def estimate_batch(self, ys, phases, noise_variance):
        v = as_phase_array(phases)
        ys = np.asarray(ys)
        m = _infer_bs_antennas(ys.shape[1], v.shape[1])
        obs_mat = build_observation_matrix(v, m)
        gain = _lmmse_gain(self.cov, obs_mat, noise_variance)
        return ys @ gain.T
