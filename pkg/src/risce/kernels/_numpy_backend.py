"""Pure NumPy convolution kernels (fallback backend).

Same-padding, stride-1 2-D convolution expressed as a short loop over
kernel offsets with tensordot doing the heavy lifting.  Must match the
compiled backend to floating point noise.
"""

import numpy as np


def conv2d_forward(x, w, b):
    """Correlate ``x (B, Cin, H, W)`` with ``w (Cout, Cin, KH, KW)`` plus bias.

    Returns ``(B, Cout, H, W)`` with zero same-padding and stride 1.
    """
    batch, _, height, width = x.shape
    c_out, _, kh, kw = w.shape
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    acc = np.zeros((batch, height, width, c_out))
    for ki in range(kh):
        for kj in range(kw):
            patch = xp[:, :, ki:ki + height, kj:kj + width]
            acc += np.tensordot(patch, w[:, :, ki, kj], axes=([1], [1]))
    return np.ascontiguousarray(acc.transpose(0, 3, 1, 2)) + b.reshape(1, -1, 1, 1)


def conv2d_backward_input(gy, w):
    """Gradient of the forward pass with respect to its input."""
    batch, _, height, width = gy.shape
    _, c_in, kh, kw = w.shape
    ph, pw = kh // 2, kw // 2
    gxp = np.zeros((batch, c_in, height + 2 * ph, width + 2 * pw))
    for ki in range(kh):
        for kj in range(kw):
            contrib = np.tensordot(gy, w[:, :, ki, kj], axes=([1], [0]))
            gxp[:, :, ki:ki + height, kj:kj + width] += contrib.transpose(0, 3, 1, 2)
    return np.ascontiguousarray(gxp[:, :, ph:ph + height, pw:pw + width])


def conv2d_backward_weights(x, gy, kh, kw):
    """Gradients of the forward pass with respect to kernels and biases."""
    batch, c_in, height, width = x.shape
    c_out = gy.shape[1]
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    gw = np.empty((c_out, c_in, kh, kw))
    for ki in range(kh):
        for kj in range(kw):
            patch = xp[:, :, ki:ki + height, kj:kj + width]
            gw[:, :, ki, kj] = np.tensordot(gy, patch, axes=([0, 2, 3], [0, 2, 3]))
    gb = gy.sum(axis=(0, 2, 3))
    return gw, gb
