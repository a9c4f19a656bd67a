"""Synthetic scenario-specific channel datasets and their binary file format.

The generator stands in for a full geometry-based simulator: terminals are
dropped uniformly in a 120 degree sector, the direct and terminal->RIS links
are sums of a few scattering clusters around the geometric angle, and the
RIS->BS link is Rician with a fixed line-of-sight component determined by
the (static) RIS placement.  What matters downstream is that the resulting
channels concentrate on scenario-dependent spatial structure that phase
optimization can exploit.

Dataset file format ("RISD", little-endian)::

    magic     4 bytes  b"RISD"
    version   u16      currently 1
    M         u32      BS antenna count
    L         u32      RIS element count
    N         u64      sample count
    flags     u8       bit 0: dataset was normalized
    payload   N samples, each:
                direct   M  complex
                mt_ris   L  complex
                ris_bs   M*L complex, column-major
              each complex number stored as two f64 (re, im)

Files produced elsewhere (e.g. converted simulator exports) load fine as
long as they follow this layout.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .errors import DataError, FormatError
from .model import ChannelSample, SystemDims, assemble_composite, complex_normal

MAGIC = b"RISD"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHIIQB")

# Fixed deployment geometry (meters / degrees). Only angles enter the
# channels; absolute distances matter through them alone since path gain
# is removed by normalization.
SECTOR_DEG = 120.0
RIS_DISTANCE = 500.0
BS_HEIGHT = 25.0
RIS_HEIGHT = 25.0
MT_HEIGHT = 1.5
MT_RANGE = (30.0, 250.0)


def ula_steering(num_antennas: int, azimuth_rad) -> np.ndarray:
    """Half-wavelength ULA response, one column per azimuth."""
    azimuth_rad = np.atleast_1d(azimuth_rad)
    idx = np.arange(num_antennas)[:, np.newaxis]
    return np.exp(1j * np.pi * idx * np.sin(azimuth_rad)[np.newaxis, :])


def ura_steering(rows: int, cols: int, azimuth_rad, elevation_rad) -> np.ndarray:
    """Half-wavelength URA response, flattened row-major, one column per angle pair."""
    azimuth_rad = np.atleast_1d(azimuth_rad)
    elevation_rad = np.atleast_1d(elevation_rad)
    u = np.sin(elevation_rad)
    w = np.cos(elevation_rad) * np.sin(azimuth_rad)
    r_idx = np.arange(rows)[:, np.newaxis, np.newaxis]
    c_idx = np.arange(cols)[np.newaxis, :, np.newaxis]
    phase = np.pi * (r_idx * u[np.newaxis, np.newaxis, :] + c_idx * w[np.newaxis, np.newaxis, :])
    return np.exp(1j * phase).reshape(rows * cols, -1)


@dataclass(frozen=True)
class ScenarioConfig:
    """Parameters of the synthetic deployment.

    ``downtilt_deg == 0`` is the parallel-panel orientation; positive values
    tilt the RIS panel downward, which changes the spatial signature of the
    terminal->RIS link and of the LOS component toward the BS.
    """

    dims: SystemDims
    ris_rows: int
    ris_cols: int
    downtilt_deg: float = 0.0
    clusters_direct: int = 3
    clusters_mt_ris: int = 3
    rician_k_factor: float = 10.0
    angle_spread_deg: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.ris_rows < 1 or self.ris_cols < 1:
            raise ValueError("RIS grid dimensions must be positive")
        if self.ris_rows * self.ris_cols != self.dims.ris_elements:
            raise ValueError(
                f"RIS grid {self.ris_rows}x{self.ris_cols} does not match "
                f"{self.dims.ris_elements} elements"
            )
        if self.clusters_direct < 1 or self.clusters_mt_ris < 1:
            raise ValueError("cluster counts must be >= 1")
        if self.rician_k_factor < 0:
            raise ValueError("Rician K-factor must be nonnegative")
        if self.angle_spread_deg < 0:
            raise ValueError("angle spread must be nonnegative")


@dataclass(frozen=True)
class ChannelDataset:
    """Stacked channel realizations of one scenario.

    Arrays are batch-first: ``direct (N, M)``, ``mt_ris (N, L)``,
    ``ris_bs (N, M, L)``.  Individual :class:`ChannelSample` views are
    available through indexing.
    """

    direct: np.ndarray
    mt_ris: np.ndarray
    ris_bs: np.ndarray
    normalized: bool = False
    config: ScenarioConfig | None = None

    def __post_init__(self):
        n, m = self.direct.shape
        if self.mt_ris.shape[0] != n or self.ris_bs.shape != (n, m, self.mt_ris.shape[1]):
            raise ValueError("dataset arrays have inconsistent shapes")

    def __len__(self) -> int:
        return self.direct.shape[0]

    @property
    def bs_antennas(self) -> int:
        return self.direct.shape[1]

    @property
    def ris_elements(self) -> int:
        return self.mt_ris.shape[1]

    @property
    def composite_dim(self) -> int:
        return self.bs_antennas * (self.ris_elements + 1)

    @cached_property
    def composites(self) -> np.ndarray:
        """Composite channel matrices, shape ``(N, M, L + 1)``."""
        out = np.empty((len(self), self.bs_antennas, self.ris_elements + 1),
                       dtype=np.complex128)
        out[:, :, 0] = self.direct
        out[:, :, 1:] = self.ris_bs * self.mt_ris[:, np.newaxis, :]
        return out

    def sample(self, i: int) -> ChannelSample:
        return ChannelSample(
            direct=self.direct[i],
            mt_ris=self.mt_ris[i],
            ris_bs=self.ris_bs[i],
            composite=assemble_composite(self.direct[i], self.mt_ris[i], self.ris_bs[i]),
        )

    def subset(self, start: int, stop: int) -> "ChannelDataset":
        return ChannelDataset(
            direct=self.direct[start:stop],
            mt_ris=self.mt_ris[start:stop],
            ris_bs=self.ris_bs[start:stop],
            normalized=self.normalized,
            config=self.config,
        )

    def second_moment(self) -> float:
        """Empirical mean of ``||vec(H)||^2`` over the dataset."""
        return float(np.mean(np.sum(np.abs(self.composites) ** 2, axis=(1, 2))))


def _rician_weights(k_factor: float) -> tuple[float, float]:
    if math.isinf(k_factor):
        return 1.0, 0.0
    return math.sqrt(k_factor / (1.0 + k_factor)), math.sqrt(1.0 / (1.0 + k_factor))


def generate(config: ScenarioConfig, count: int) -> ChannelDataset:
    """Generate `count` channel samples; a pure function of (config, count).

    Per-sample random streams are spawned from the config seed, so the loop
    can be parallelized over samples without changing the result.
    """
    if count < 1:
        raise ValueError(f"sample count must be >= 1, got {count}")
    m = config.dims.bs_antennas
    el = config.dims.ris_elements
    spread = math.radians(config.angle_spread_deg)
    tilt = math.radians(config.downtilt_deg)
    half_sector = math.radians(SECTOR_DEG / 2.0)
    w_los, w_scatter = _rician_weights(config.rician_k_factor)

    # LOS component of the RIS->BS link is fixed by the deployment: the BS
    # sees the RIS on boresight, the RIS sees the BS at its own tilt.
    bs_to_ris = ula_steering(m, 0.0)[:, 0]
    ris_to_bs = ura_steering(config.ris_rows, config.ris_cols, 0.0, tilt)[:, 0]
    los = np.outer(bs_to_ris, ris_to_bs.conj())

    direct = np.empty((count, m), dtype=np.complex128)
    mt_ris = np.empty((count, el), dtype=np.complex128)
    ris_bs = np.empty((count, m, el), dtype=np.complex128)

    streams = np.random.SeedSequence(config.seed).spawn(count)
    for i in range(count):
        rng = np.random.default_rng(streams[i])

        # Terminal drop: uniform over the sector area, annulus in range.
        radius = math.sqrt(rng.uniform(MT_RANGE[0] ** 2, MT_RANGE[1] ** 2))
        azimuth = rng.uniform(-half_sector, half_sector)
        x_mt = radius * math.cos(azimuth)
        y_mt = radius * math.sin(azimuth)

        gains = complex_normal(rng, config.clusters_direct, 1.0 / config.clusters_direct)
        cluster_az = azimuth + spread * rng.standard_normal(config.clusters_direct)
        direct[i] = ula_steering(m, cluster_az) @ gains

        # Angles of the terminal as seen from the RIS panel (boresight faces
        # the BS, i.e. the -x direction; tilting shifts local elevation).
        dx = x_mt - RIS_DISTANCE
        horizontal = math.hypot(dx, y_mt)
        az_local = math.atan2(y_mt, dx) - math.pi
        az_local = (az_local + math.pi) % (2.0 * math.pi) - math.pi
        el_local = math.atan2(MT_HEIGHT - RIS_HEIGHT, horizontal) + tilt

        gains = complex_normal(rng, config.clusters_mt_ris, 1.0 / config.clusters_mt_ris)
        cl_az = az_local + spread * rng.standard_normal(config.clusters_mt_ris)
        cl_el = el_local + 0.5 * spread * rng.standard_normal(config.clusters_mt_ris)
        mt_ris[i] = ura_steering(config.ris_rows, config.ris_cols, cl_az, cl_el) @ gains

        scatter = complex_normal(rng, (m, el), 1.0)
        ris_bs[i] = w_los * los + w_scatter * scatter

    return ChannelDataset(direct=direct, mt_ris=mt_ris, ris_bs=ris_bs,
                          normalized=False, config=config)


def normalize(dataset: ChannelDataset) -> ChannelDataset:
    """Scale the dataset so the mean of ``||vec(H)||^2`` equals ``M (L + 1)``.

    One common real scalar multiplies the direct and terminal->RIS channels
    (the composite then scales by the same factor).  Idempotent up to
    floating point.
    """
    if len(dataset) == 0:
        raise ValueError("cannot normalize an empty dataset")
    total = np.sum(np.abs(dataset.composites) ** 2)
    if total == 0.0:
        raise DataError("cannot normalize an all-zero dataset")
    scale = math.sqrt(len(dataset) * dataset.composite_dim / total)
    return ChannelDataset(
        direct=dataset.direct * scale,
        mt_ris=dataset.mt_ris * scale,
        ris_bs=dataset.ris_bs,
        normalized=True,
        config=dataset.config,
    )


def save(dataset: ChannelDataset, path) -> None:
    """Write a dataset in the RISD binary format."""
    n = len(dataset)
    m = dataset.bs_antennas
    el = dataset.ris_elements
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, m, el, n, 1 if dataset.normalized else 0)
    payload = np.empty((n, m + el + m * el), dtype=np.complex128)
    payload[:, :m] = dataset.direct
    payload[:, m:m + el] = dataset.mt_ris
    # column-major RIS->BS block per sample
    payload[:, m + el:] = dataset.ris_bs.transpose(0, 2, 1).reshape(n, m * el)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.astype("<c16").tobytes())


def load(path) -> ChannelDataset:
    """Read a dataset in the RISD binary format.

    Raises :class:`FormatError` on bad magic, unsupported version,
    inconsistent header dimensions, or a payload whose size does not match
    the header.
    """
    with open(path, "rb") as fh:
        raw_header = fh.read(_HEADER.size)
        if len(raw_header) < _HEADER.size:
            raise FormatError(f"{path}: file too short for a dataset header")
        magic, version, m, el, n, flags = _HEADER.unpack(raw_header)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, not a channel dataset file")
        if version != FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported format version {version}")
        if m < 1 or el < 1 or n < 1:
            raise FormatError(f"{path}: invalid header dimensions M={m}, L={el}, N={n}")
        per_sample = m + el + m * el
        expected = n * per_sample * 16
        blob = fh.read()
    if len(blob) != expected:
        raise FormatError(
            f"{path}: payload holds {len(blob)} bytes, header implies {expected} "
            f"({n} samples)"
        )
    payload = np.frombuffer(blob, dtype="<c16").astype(np.complex128).reshape(n, per_sample)
    direct = payload[:, :m].copy()
    mt_ris = payload[:, m:m + el].copy()
    ris_bs = payload[:, m + el:].reshape(n, el, m).transpose(0, 2, 1).copy()
    return ChannelDataset(direct=direct, mt_ris=mt_ris, ris_bs=ris_bs,
                          normalized=bool(flags & 1), config=None)


def with_seed(config: ScenarioConfig, seed: int) -> ScenarioConfig:
    """Copy of `config` with a different generator seed."""
    return replace(config, seed=seed)
