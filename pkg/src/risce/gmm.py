"""Complex Gaussian mixture fitting and the mixture conditional-mean estimator.

The channel prior is modeled as a ``K``-component mixture of
circularly-symmetric complex Gaussians fitted by EM.  Estimation from a
pilot observation combines per-component linear MMSE terms weighted by the
posterior component probabilities; as ``K`` grows this approaches the true
conditional mean.  All densities are evaluated in the log domain (the
channel dimension easily exceeds one hundred, linear-domain Gaussians
underflow).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.special import logsumexp

from .errors import FormatError, NumericError
from .estimators import Estimator
from .model import as_phase_array, build_observation_matrix

MAGIC = b"RGMM"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHII")

_LOG_PI = np.log(np.pi)


@dataclass
class GmmModel:
    """Weights, means and covariances of a complex Gaussian mixture.

    `loglik_trace` carries the per-iteration training log-likelihood of the
    fit that produced the model; it is transient and not serialized.
    """

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    loglik_trace: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.asarray(self.means, dtype=np.complex128)
        self.covariances = np.asarray(self.covariances, dtype=np.complex128)
        k = self.weights.shape[0]
        if self.means.shape[0] != k or self.covariances.shape[0] != k:
            raise ValueError("component count mismatch between weights, means, covariances")
        d = self.means.shape[1]
        if self.covariances.shape[1:] != (d, d):
            raise ValueError("covariance blocks must be square and match the mean dimension")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {self.weights.sum()!r}")
        herm_dev = np.abs(self.covariances - self.covariances.conj().transpose(0, 2, 1)).max()
        if herm_dev > 1e-12:
            raise ValueError(f"covariances must be Hermitian (max deviation {herm_dev:.3e})")

    @property
    def components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def _chol_logpdf(x: np.ndarray, mean: np.ndarray, chol: np.ndarray) -> np.ndarray:
    """Log density of rows of `x` under a complex Gaussian with Cholesky factor `chol`."""
    d = mean.shape[0]
    z = scipy.linalg.solve_triangular(chol, (x - mean).T, lower=True)
    quad = np.sum(np.abs(z) ** 2, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(chol).real))
    return -d * _LOG_PI - logdet - quad


def _component_cholesky(cov: np.ndarray, what: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"covariance factorization failed for {what}: {exc}") from exc


def _log_joint(vectors: np.ndarray, model: GmmModel) -> np.ndarray:
    """Per-sample, per-component ``log p(k) + log N(x; mu_k, C_k)``, shape (N, K)."""
    n = vectors.shape[0]
    out = np.empty((n, model.components))
    for k in range(model.components):
        chol = _component_cholesky(model.covariances[k], f"component {k}")
        out[:, k] = np.log(model.weights[k]) + _chol_logpdf(vectors, model.means[k], chol)
    return out


def _kmeanspp_indices(vectors: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ style seeding over complex vectors."""
    n = vectors.shape[0]
    chosen = np.empty(k, dtype=np.intp)
    chosen[0] = rng.integers(n)
    dist = np.sum(np.abs(vectors - vectors[chosen[0]]) ** 2, axis=1)
    for j in range(1, k):
        total = dist.sum()
        if total <= 0.0:
            chosen[j] = rng.integers(n)
        else:
            chosen[j] = rng.choice(n, p=dist / total)
        dist = np.minimum(dist, np.sum(np.abs(vectors - vectors[chosen[j]]) ** 2, axis=1))
    return chosen


def _regularization(cov: np.ndarray, reg_floor: float, fallback_scale: float) -> float:
    mean_eig = np.trace(cov).real / cov.shape[0]
    if mean_eig <= 0.0:
        mean_eig = fallback_scale
    return reg_floor * mean_eig


def gmm_fit(vectors: np.ndarray, components: int, max_iter: int = 100,
            tol: float = 1e-5, reg_floor: float = 1e-6, rng=None) -> GmmModel:
    """Fit a complex Gaussian mixture by EM.

    Means are seeded k-means++ style, initial covariances are the global
    sample covariance, weights start uniform.  Each M-step adds
    ``reg_floor`` times the component's average eigenvalue to the diagonal
    so observation covariances stay invertible at high SNR.  Iteration stops
    when the relative log-likelihood improvement drops below `tol`.
    """
    vectors = np.asarray(vectors, dtype=np.complex128)
    if vectors.ndim != 2:
        raise ValueError("training set must be a (N, d) array")
    n, d = vectors.shape
    if components < 1:
        raise ValueError(f"component count must be >= 1, got {components}")
    if components > n:
        raise ValueError(f"cannot fit {components} components to {n} samples")
    rng = np.random.default_rng(rng)

    global_mean = vectors.mean(axis=0)
    centered = vectors - global_mean
    global_cov = centered.T @ centered.conj() / n
    global_cov = 0.5 * (global_cov + global_cov.conj().T)
    global_scale = max(np.trace(global_cov).real / d, np.finfo(np.float64).tiny)
    global_cov[np.diag_indices_from(global_cov)] += reg_floor * global_scale

    means = vectors[_kmeanspp_indices(vectors, components, rng)].copy()
    covariances = np.tile(global_cov, (components, 1, 1))
    weights = np.full(components, 1.0 / components)

    trace = []
    for iteration in range(max_iter):
        model = GmmModel(weights=weights, means=means, covariances=covariances)
        log_joint = _log_joint(vectors, model)
        log_norm = logsumexp(log_joint, axis=1)
        loglik = float(log_norm.sum())
        if not np.isfinite(loglik):
            raise NumericError(f"non-finite log-likelihood at EM iteration {iteration}")
        trace.append(loglik)
        if iteration > 0 and loglik - trace[-2] < tol * abs(trace[-2]):
            break

        resp = np.exp(log_joint - log_norm[:, np.newaxis])
        counts = resp.sum(axis=0)
        counts = np.maximum(counts, np.finfo(np.float64).tiny)
        weights = counts / n
        means = (resp.T @ vectors) / counts[:, np.newaxis]
        covariances = np.empty((components, d, d), dtype=np.complex128)
        for k in range(components):
            centered = vectors - means[k]
            cov = (centered * resp[:, k, np.newaxis]).T @ centered.conj() / counts[k]
            cov = 0.5 * (cov + cov.conj().T)
            cov[np.diag_indices_from(cov)] += _regularization(cov, reg_floor, global_scale)
            covariances[k] = cov

    return GmmModel(weights=weights, means=means, covariances=covariances,
                    loglik_trace=np.asarray(trace))


class _ObservationContext:
    """Per-component observation-space quantities for a fixed (V, sigma^2)."""

    def __init__(self, phases, noise_variance: float, model: GmmModel):
        v = as_phase_array(phases)
        if model.dim % v.shape[0]:
            raise ValueError(
                f"model dimension {model.dim} incompatible with phase matrix rows {v.shape[0]}"
            )
        m = model.dim // v.shape[0]
        self.obs_mat = build_observation_matrix(v, m)
        self.model = model
        self.noise_variance = float(noise_variance)
        self.obs_means = model.means @ self.obs_mat.T  # (K, M N_v): A mu_k rows
        self._chols = []
        self._gains = []
        for k in range(model.components):
            cross = self.obs_mat @ model.covariances[k]  # A C_k
            obs_cov = cross @ self.obs_mat.conj().T
            obs_cov = 0.5 * (obs_cov + obs_cov.conj().T)
            obs_cov[np.diag_indices_from(obs_cov)] += self.noise_variance
            try:
                chol = np.linalg.cholesky(obs_cov)
            except np.linalg.LinAlgError as exc:
                raise NumericError(
                    f"observation covariance factorization failed for component {k}: {exc}"
                ) from exc
            self._chols.append(chol)
            # C_k A^H (A C_k A^H + sigma^2 I)^{-1}, computed via the factor
            gain = scipy.linalg.cho_solve((chol, True), cross).conj().T
            self._gains.append(gain)

    def log_responsibilities(self, ys: np.ndarray) -> np.ndarray:
        """Log posterior component probabilities for each row of `ys`, shape (N, K)."""
        n = ys.shape[0]
        log_joint = np.empty((n, self.model.components))
        for k in range(self.model.components):
            log_joint[:, k] = np.log(self.model.weights[k]) + _chol_logpdf(
                ys, self.obs_means[k], self._chols[k]
            )
        return log_joint - logsumexp(log_joint, axis=1)[:, np.newaxis]

    def estimate(self, ys: np.ndarray) -> np.ndarray:
        """Mixture conditional-mean estimates for each row of `ys`, shape (N, d)."""
        resp = np.exp(self.log_responsibilities(ys))
        out = np.zeros((ys.shape[0], self.model.dim), dtype=np.complex128)
        for k in range(self.model.components):
            innovation = ys - self.obs_means[k]
            term = self.model.means[k] + innovation @ self._gains[k].T
            out += resp[:, k, np.newaxis] * term
        return out


def gmm_responsibilities(y: np.ndarray, phases, noise_variance: float,
                         model: GmmModel) -> np.ndarray:
    """Posterior component probabilities given one observation.

    Computed in the log domain with max subtraction, so the result is a
    valid probability vector even when all densities underflow linearly.
    """
    ctx = _ObservationContext(phases, noise_variance, model)
    y = np.asarray(y).reshape(1, -1)
    return np.exp(ctx.log_responsibilities(y))[0]


def gmm_estimate(y: np.ndarray, phases, noise_variance: float, model: GmmModel) -> np.ndarray:
    """Mixture conditional-mean channel estimate for one observation.

    Convex combination of per-component LMMSE terms
    ``mu_k + C_k A^H (A C_k A^H + sigma^2 I)^{-1} (y - A mu_k)`` weighted by
    the posterior component probabilities.
    """
    ctx = _ObservationContext(phases, noise_variance, model)
    y = np.asarray(y).reshape(1, -1)
    return ctx.estimate(y)[0]


class GmmEstimator(Estimator):
    """Estimator-interface wrapper caching per-(V, sigma^2) factorizations."""

    name = "gmm"

    def __init__(self, model: GmmModel):
        self.model = model
        self._cache_key = None
        self._cache = None

    def _context(self, phases, noise_variance: float) -> _ObservationContext:
        v = as_phase_array(phases)
        key = (v.tobytes(), float(noise_variance))
        if self._cache_key != key:
            self._cache = _ObservationContext(v, noise_variance, self.model)
            self._cache_key = key
        return self._cache

    def estimate(self, y, phases, noise_variance):
        ctx = self._context(phases, noise_variance)
        return ctx.estimate(np.asarray(y).reshape(1, -1))[0]

    def estimate_batch(self, ys, phases, noise_variance):
        ctx = self._context(phases, noise_variance)
        return ctx.estimate(np.asarray(ys))


def save_gmm(model: GmmModel, path) -> None:
    """Write a mixture model in the RGMM binary format.

    Layout (little-endian): magic "RGMM", version u16, K u32, d u32, then
    weights (K f64), means (K*d complex as f64 pairs), covariances
    (K*d*d complex, row-major).
    """
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, model.components, model.dim)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(model.weights.astype("<f8").tobytes())
        fh.write(model.means.astype("<c16").tobytes())
        fh.write(model.covariances.astype("<c16").tobytes())


def load_gmm(path) -> GmmModel:
    """Read a mixture model in the RGMM binary format."""
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) < _HEADER.size:
            raise FormatError(f"{path}: file too short for a GMM header")
        magic, version, k, d = _HEADER.unpack(raw)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, not a GMM file")
        if version != FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported format version {version}")
        if k < 1 or d < 1:
            raise FormatError(f"{path}: invalid header K={k}, d={d}")
        blob = fh.read()
    expected = k * 8 + k * d * 16 + k * d * d * 16
    if len(blob) != expected:
        raise FormatError(f"{path}: payload holds {len(blob)} bytes, header implies {expected}")
    weights = np.frombuffer(blob[:k * 8], dtype="<f8").astype(np.float64)
    off = k * 8
    means = np.frombuffer(blob[off:off + k * d * 16], dtype="<c16").astype(np.complex128)
    off += k * d * 16
    covs = np.frombuffer(blob[off:], dtype="<c16").astype(np.complex128)
    return GmmModel(weights=weights, means=means.reshape(k, d),
                    covariances=covs.reshape(k, d, d))
