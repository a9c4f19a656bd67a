"""Shared test helpers: independent oracles and small dataset factories."""

import numpy as np

from risce.channelgen import ChannelDataset, ScenarioConfig, generate, normalize
from risce.model import SystemDims


def crandn(rng, shape):
    """Unit-variance circularly-symmetric complex Gaussian array."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def desk_scenario(seed=0, num_phases=4, **overrides) -> ScenarioConfig:
    params = dict(
        dims=SystemDims(4, 8, num_phases),
        ris_rows=2,
        ris_cols=4,
        downtilt_deg=0.0,
        clusters_direct=3,
        clusters_mt_ris=3,
        rician_k_factor=10.0,
        angle_spread_deg=5.0,
        seed=seed,
    )
    params.update(overrides)
    return ScenarioConfig(**params)


def desk_dataset(count=200, seed=0, **overrides) -> ChannelDataset:
    return normalize(generate(desk_scenario(seed=seed, **overrides), count))


def naive_conv2d_forward(x, w, b):
    """Direct-loop same-padding correlation; the reference all backends must match."""
    batch, c_in, height, width = x.shape
    c_out, _, kh, kw = w.shape
    ph, pw = kh // 2, kw // 2
    y = np.zeros((batch, c_out, height, width))
    for bi in range(batch):
        for co in range(c_out):
            for i in range(height):
                for j in range(width):
                    acc = b[co]
                    for ci in range(c_in):
                        for ki in range(kh):
                            for kj in range(kw):
                                ii, jj = i + ki - ph, j + kj - pw
                                if 0 <= ii < height and 0 <= jj < width:
                                    acc += w[co, ci, ki, kj] * x[bi, ci, ii, jj]
                    y[bi, co, i, j] = acc
    return y


def finite_difference_gradient(loss_fn, param, step=1e-4):
    """Central finite differences of a scalar loss w.r.t. one array (in place)."""
    grad = np.zeros_like(param)
    it = np.nditer(param, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        original = param[idx]
        param[idx] = original + step
        plus = loss_fn()
        param[idx] = original - step
        minus = loss_fn()
        param[idx] = original
        grad[idx] = (plus - minus) / (2.0 * step)
    return grad


def gradient_relative_error(analytic, fd, floor=1e-6):
    """Max deviation scaled by the larger gradient magnitude (floored).

    The floor keeps structurally zero gradients (e.g. a conv bias feeding a
    batch norm) from dividing finite-difference noise by itself.
    """
    scale = max(np.abs(analytic).max(), np.abs(fd).max(), floor)
    return np.abs(analytic - fd).max() / scale
