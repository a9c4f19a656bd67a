"""Observation model for RIS-aided SIMO pilot transmission.

A single-antenna terminal transmits pilots while the RIS cycles through a
number of phase allocations.  The composite channel stacks the direct
channel and the cascaded (terminal -> RIS -> base station) channel so the
received pilot block is linear in the composite channel matrix.

Conventions used throughout the package:

* vectorization is column-major (``vec`` stacks matrix columns),
* the phase allocation matrix has shape ``(L + 1, N_v)``, unit-modulus
  entries and an all-ones first row (the direct path is not configurable),
* noise is circularly-symmetric complex Gaussian with per-entry variance
  ``sigma^2`` (real and imaginary parts each carry ``sigma^2 / 2``).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

UNIT_MODULUS_TOL = 1e-12


def complex_normal(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    """Draw circularly-symmetric complex Gaussian samples.

    Real and imaginary parts are drawn as two consecutive standard-normal
    blocks and scaled so the per-entry variance is `variance`.
    """
    if variance < 0:
        raise ValueError(f"noise variance must be nonnegative, got {variance}")
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def vec(mat: np.ndarray) -> np.ndarray:
    """Column-major vectorization of a matrix."""
    return np.asarray(mat).reshape(-1, order="F")


def unvec(v: np.ndarray, rows: int) -> np.ndarray:
    """Inverse of :func:`vec` for a known row count."""
    v = np.asarray(v)
    if v.size % rows:
        raise ValueError(f"cannot reshape length-{v.size} vector to {rows} rows")
    return v.reshape(rows, -1, order="F")


def vec_batch(mats: np.ndarray) -> np.ndarray:
    """Column-major vectorization applied along the leading batch axis."""
    mats = np.asarray(mats)
    if mats.ndim != 3:
        raise ValueError(f"expected a (batch, rows, cols) array, got shape {mats.shape}")
    n = mats.shape[0]
    return mats.transpose(0, 2, 1).reshape(n, -1)


def unvec_batch(vs: np.ndarray, rows: int) -> np.ndarray:
    """Inverse of :func:`vec_batch` for a known row count."""
    vs = np.asarray(vs)
    n, size = vs.shape
    if size % rows:
        raise ValueError(f"cannot reshape length-{size} vectors to {rows} rows")
    return vs.reshape(n, size // rows, rows).transpose(0, 2, 1)


@dataclass(frozen=True)
class SystemDims:
    """Antenna counts and number of phase allocations of one setup.

    ``num_phases`` may exceed ``ris_elements + 1``; values below full
    illumination are the reduced-allocation regime this package targets.
    """

    bs_antennas: int
    ris_elements: int
    num_phases: int

    def __post_init__(self):
        for name in ("bs_antennas", "ris_elements", "num_phases"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")

    @property
    def composite_dim(self) -> int:
        """Dimension of the vectorized composite channel, M * (L + 1)."""
        return self.bs_antennas * (self.ris_elements + 1)


def assemble_composite(direct: np.ndarray, mt_ris: np.ndarray, ris_bs: np.ndarray) -> np.ndarray:
    """Stack direct and cascaded channels into the composite matrix.

    Column 0 is the direct channel; column ``l`` (1-based) is the RIS->BS
    column ``l`` scaled by the terminal->RIS coefficient ``l`` (column-wise
    Khatri-Rao composition of the cascade).
    """
    direct = np.asarray(direct)
    mt_ris = np.asarray(mt_ris)
    ris_bs = np.asarray(ris_bs)
    if direct.ndim != 1 or mt_ris.ndim != 1 or ris_bs.ndim != 2:
        raise ValueError("expected direct (M,), mt_ris (L,), ris_bs (M, L)")
    m = direct.shape[0]
    el = mt_ris.shape[0]
    if ris_bs.shape != (m, el):
        raise ValueError(
            f"ris_bs has shape {ris_bs.shape}, expected ({m}, {el}) "
            "to match direct and mt_ris"
        )
    composite = np.empty((m, el + 1), dtype=np.complex128)
    composite[:, 0] = direct
    composite[:, 1:] = ris_bs * mt_ris[np.newaxis, :]
    return composite


@dataclass(frozen=True)
class ChannelSample:
    """One channel realization: direct, cascade parts and cached composite."""

    direct: np.ndarray
    mt_ris: np.ndarray
    ris_bs: np.ndarray
    composite: np.ndarray

    @classmethod
    def from_parts(cls, direct, mt_ris, ris_bs) -> "ChannelSample":
        composite = assemble_composite(direct, mt_ris, ris_bs)
        return cls(
            direct=np.asarray(direct, dtype=np.complex128),
            mt_ris=np.asarray(mt_ris, dtype=np.complex128),
            ris_bs=np.asarray(ris_bs, dtype=np.complex128),
            composite=composite,
        )


@dataclass(frozen=True)
class PhaseMatrix:
    """Validated phase allocation book of shape ``(L + 1, N_v)``.

    Every entry has unit modulus and the first row is all ones: the direct
    path always contributes with coefficient one, only the RIS rows carry
    configurable phases.
    """

    mat: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.mat, dtype=np.complex128)
        if mat.ndim != 2 or mat.shape[0] < 1 or mat.shape[1] < 1:
            raise ValueError(f"phase matrix must be 2-D and nonempty, got shape {mat.shape}")
        modulus_dev = np.abs(np.abs(mat) - 1.0).max()
        if modulus_dev > UNIT_MODULUS_TOL:
            raise ValueError(
                f"phase matrix entries must have unit modulus (max deviation {modulus_dev:.3e})"
            )
        first_row_dev = np.abs(mat[0, :] - 1.0).max()
        if first_row_dev > UNIT_MODULUS_TOL:
            raise ValueError(
                f"first row of a phase matrix must be all ones (max deviation {first_row_dev:.3e})"
            )
        object.__setattr__(self, "mat", mat)

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.mat
        return self.mat.astype(dtype)

    @property
    def num_phases(self) -> int:
        return self.mat.shape[1]

    @property
    def ris_elements(self) -> int:
        return self.mat.shape[0] - 1


def as_phase_array(phases) -> np.ndarray:
    """Accept a :class:`PhaseMatrix` or a bare array and return the array."""
    if isinstance(phases, PhaseMatrix):
        return phases.mat
    arr = np.asarray(phases, dtype=np.complex128)
    if arr.ndim != 2:
        raise ValueError(f"phase allocation must be a 2-D matrix, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class Observation:
    """Received pilot block ``Y`` and its vectorized form."""

    mat: np.ndarray
    noise_variance: float

    @cached_property
    def vec(self) -> np.ndarray:
        return vec(self.mat)


def observe(composite: np.ndarray, phases, noise_variance: float,
            rng: np.random.Generator | None = None) -> Observation:
    """Simulate one pilot block: ``Y = H V + N``.

    With ``noise_variance == 0`` the result is deterministic and `rng` is
    not touched.
    """
    v = as_phase_array(phases)
    composite = np.asarray(composite)
    if composite.ndim != 2 or composite.shape[1] != v.shape[0]:
        raise ValueError(
            f"composite channel {composite.shape} incompatible with phase matrix {v.shape}"
        )
    if noise_variance < 0:
        raise ValueError(f"noise variance must be nonnegative, got {noise_variance}")
    y = composite @ v
    if noise_variance > 0:
        if rng is None:
            raise ValueError("rng required for noisy observations")
        y = y + complex_normal(rng, y.shape, noise_variance)
    return Observation(mat=y, noise_variance=float(noise_variance))


def build_observation_matrix(phases, bs_antennas: int) -> np.ndarray:
    """Kronecker observation matrix mapping ``vec(H)`` to ``vec(H V)``.

    Returns ``V^T (x) I_M`` of shape ``(M N_v, M (L + 1))``; the transpose is
    plain (not conjugated).
    """
    v = as_phase_array(phases)
    if bs_antennas < 1:
        raise ValueError(f"bs_antennas must be positive, got {bs_antennas}")
    return np.kron(v.T, np.eye(bs_antennas))


def snr_to_noise_variance(snr_db: float) -> float:
    """Noise variance for a target SNR in dB under unit channel scaling."""
    snr_db = float(snr_db)
    if not np.isfinite(snr_db):
        raise ValueError(f"snr_db must be finite, got {snr_db}")
    return 10.0 ** (-snr_db / 10.0)


def nmse(true_batch: np.ndarray, est_batch: np.ndarray) -> float:
    """Normalized mean squared error of channel estimates.

    Mean squared Frobenius error over the batch divided by ``M (L + 1)``,
    so an all-zero estimator scores ~1 on a dataset normalized to
    ``E[||vec(H)||^2] = M (L + 1)``.
    """
    true_batch = np.asarray(true_batch)
    est_batch = np.asarray(est_batch)
    if true_batch.shape != est_batch.shape:
        raise ValueError(
            f"shape mismatch: true {true_batch.shape} vs estimate {est_batch.shape}"
        )
    if true_batch.ndim < 2 or true_batch.shape[0] == 0:
        raise ValueError("nmse requires a nonempty batch with leading batch axis")
    diff = (true_batch - est_batch).reshape(true_batch.shape[0], -1)
    per_sample = np.sum(np.abs(diff) ** 2, axis=1)
    return float(np.mean(per_sample) / diff.shape[1])
