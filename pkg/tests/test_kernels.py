"""Backend equivalence tests for the convolution kernels."""

import numpy as np
import pytest
from conftest import finite_difference_gradient, naive_conv2d_forward

from risce import kernels

BACKENDS = kernels.available_backends()


@pytest.fixture(params=BACKENDS)
def backend(request):
    return kernels.get_backend(request.param)


def _random_case(rng, batch=3, c_in=2, c_out=4, height=4, width=5, k=3):
    x = rng.standard_normal((batch, c_in, height, width))
    w = rng.standard_normal((c_out, c_in, k, k))
    b = rng.standard_normal(c_out)
    return x, w, b


def test_selected_backend_is_exposed():
    assert kernels.BACKEND in BACKENDS
    assert callable(kernels.conv2d_forward)


def test_forward_matches_naive_oracle(backend):
    forward, _, _ = backend
    rng = np.random.default_rng(0)
    x, w, b = _random_case(rng)
    assert np.allclose(forward(x, w, b), naive_conv2d_forward(x, w, b), atol=1e-12)


def test_forward_single_pixel_width(backend):
    forward, _, _ = backend
    rng = np.random.default_rng(1)
    x, w, b = _random_case(rng, width=1)
    assert np.allclose(forward(x, w, b), naive_conv2d_forward(x, w, b), atol=1e-12)


def test_backends_agree():
    if len(BACKENDS) < 2:
        pytest.skip("compiled backend not built")
    rng = np.random.default_rng(2)
    x, w, b = _random_case(rng, batch=2, height=5, width=4)
    results = {}
    for name in BACKENDS:
        forward, backward_input, backward_weights = kernels.get_backend(name)
        y = forward(x, w, b)
        gy = np.ones_like(y)
        results[name] = (y, backward_input(gy, w), backward_weights(x, gy, 3, 3))
    y_np, gx_np, (gw_np, gb_np) = results["numpy"]
    y_cy, gx_cy, (gw_cy, gb_cy) = results["cython"]
    assert np.allclose(y_np, y_cy, atol=1e-12)
    assert np.allclose(gx_np, gx_cy, atol=1e-12)
    assert np.allclose(gw_np, gw_cy, atol=1e-12)
    assert np.allclose(gb_np, gb_cy, atol=1e-12)


def test_backward_input_matches_finite_differences(backend):
    forward, backward_input, _ = backend
    rng = np.random.default_rng(3)
    x, w, b = _random_case(rng, batch=1, c_in=2, c_out=2, height=3, width=3)
    gy = rng.standard_normal((1, 2, 3, 3))

    def loss():
        return float(np.sum(forward(x, w, b) * gy))

    fd = finite_difference_gradient(loss, x, step=1e-6)
    assert np.abs(backward_input(gy, w) - fd).max() < 1e-7


def test_backward_weights_matches_finite_differences(backend):
    forward, _, backward_weights = backend
    rng = np.random.default_rng(4)
    x, w, b = _random_case(rng, batch=2, c_in=1, c_out=2, height=3, width=4)
    gy = rng.standard_normal((2, 2, 3, 4))

    def loss():
        return float(np.sum(forward(x, w, b) * gy))

    fd_w = finite_difference_gradient(loss, w, step=1e-6)
    fd_b = finite_difference_gradient(loss, b, step=1e-6)
    gw, gb = backward_weights(x, gy, 3, 3)
    assert np.abs(gw - fd_w).max() < 1e-7
    assert np.abs(gb - fd_b).max() < 1e-7


def test_pure_python_env_override(monkeypatch):
    import importlib
    import os
    import subprocess
    import sys

    env = dict(os.environ, RISCE_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "from risce import kernels; print(kernels.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "numpy"
