"""Building blocks of the joint phase + estimator network.

All layers operate on float64 ``(batch, channels, height, width)`` tensors,
cache what they need during a training-mode forward pass and raise if
backward is called without one.  Parameters and gradients are exposed as
parallel lists so one optimizer instance can update the whole network.
"""

from __future__ import annotations

import numpy as np

from .. import kernels
from ..model import PhaseMatrix


def _silu_grad(x, sig):
    return sig * (1.0 + x * (1.0 - sig))


def apply_activation(name: str, z: np.ndarray) -> np.ndarray:
    if name == "linear":
        return z
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    if name == "silu":
        return z / (1.0 + np.exp(-z))
    if name == "elu":
        return np.where(z > 0, z, np.expm1(z))
    raise ValueError(f"unknown activation {name!r}")


def activation_gradient(name: str, z: np.ndarray, out: np.ndarray) -> np.ndarray:
    """Derivative of the activation, using the cached output where cheaper."""
    if name == "linear":
        return np.ones_like(z)
    if name == "relu":
        return (z > 0).astype(z.dtype)
    if name == "tanh":
        return 1.0 - out ** 2
    if name == "sigmoid":
        return out * (1.0 - out)
    if name == "silu":
        return _silu_grad(z, 1.0 / (1.0 + np.exp(-z)))
    if name == "elu":
        return np.where(z > 0, 1.0, out + 1.0)
    raise ValueError(f"unknown activation {name!r}")


ACTIVATIONS = ("linear", "relu", "tanh", "sigmoid", "silu", "elu")


class BatchNorm:
    """Per-channel batch normalization with running statistics."""

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        self.gamma = np.ones(channels)
        self.beta = np.zeros(channels)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum = momentum
        self.eps = eps
        self.grad_gamma = np.zeros_like(self.gamma)
        self.grad_beta = np.zeros_like(self.beta)
        self._cache = None

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        if training:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mean
            self.running_var = (1 - self.momentum) * self.running_var + self.momentum * var
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[:, None, None]) * inv_std[:, None, None]
        if training:
            self._cache = (xhat, inv_std, x.shape)
        return self.gamma[:, None, None] * xhat + self.beta[:, None, None]

    def backward(self, gy: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise RuntimeError("batch-norm backward called without a cached training forward")
        xhat, inv_std, shape = self._cache
        count = shape[0] * shape[2] * shape[3]
        self.grad_gamma = np.sum(gy * xhat, axis=(0, 2, 3))
        self.grad_beta = np.sum(gy, axis=(0, 2, 3))
        gxhat = gy * self.gamma[:, None, None]
        mean_g = gxhat.mean(axis=(0, 2, 3), keepdims=True)
        mean_gx = (gxhat * xhat).sum(axis=(0, 2, 3), keepdims=True) / count
        return inv_std[:, None, None] * (gxhat - mean_g - xhat * mean_gx)

    def parameters(self):
        return [self.gamma, self.beta]

    def gradients(self):
        return [self.grad_gamma, self.grad_beta]


class Conv2d:
    """3x3 same-padding convolution with activation and optional batch norm."""

    def __init__(self, in_channels: int, out_channels: int, activation: str,
                 rng: np.random.Generator, kernel_size: int = 3,
                 batch_norm: bool = False):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        fan_in = in_channels * kernel_size * kernel_size
        self.weights = rng.standard_normal(
            (out_channels, in_channels, kernel_size, kernel_size)) * np.sqrt(2.0 / fan_in)
        self.bias = np.zeros(out_channels)
        self.activation = activation
        self.norm = BatchNorm(out_channels) if batch_norm else None
        self.grad_weights = np.zeros_like(self.weights)
        self.grad_bias = np.zeros_like(self.bias)
        self._cache = None

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=np.float64)
        z = kernels.conv2d_forward(x, self.weights, self.bias)
        if self.norm is not None:
            z = self.norm.forward(z, training)
        out = apply_activation(self.activation, z)
        if training:
            self._cache = (x, z, out)
        return out

    def backward(self, gy: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise RuntimeError("conv backward called without a cached training forward")
        x, z, out = self._cache
        gz = np.ascontiguousarray(gy * activation_gradient(self.activation, z, out))
        if self.norm is not None:
            gz = np.ascontiguousarray(self.norm.backward(gz))
        kh, kw = self.weights.shape[2:]
        self.grad_weights, self.grad_bias = kernels.conv2d_backward_weights(x, gz, kh, kw)
        return kernels.conv2d_backward_input(gz, self.weights)

    def parameters(self):
        params = [self.weights, self.bias]
        if self.norm is not None:
            params += self.norm.parameters()
        return params

    def gradients(self):
        grads = [self.grad_weights, self.grad_bias]
        if self.norm is not None:
            grads += self.norm.gradients()
        return grads


def _interpolation_matrix(width_in: int, width_out: int) -> np.ndarray:
    """Linear-interpolation resampling matrix; identity when widths match."""
    mat = np.zeros((width_in, width_out))
    if width_in == 1:
        mat[0, :] = 1.0
        return mat
    for q in range(width_out):
        pos = q * (width_in - 1) / max(width_out - 1, 1)
        lo = int(np.floor(pos))
        hi = min(lo + 1, width_in - 1)
        frac = pos - lo
        mat[lo, q] += 1.0 - frac
        mat[hi, q] += frac
    return mat


class WidthResize:
    """Learned linear resampling along the width axis.

    Maps ``(B, C, H, W_in)`` to ``(B, C, H, W_out)`` with a shared
    ``(W_in, W_out)`` weight matrix, initialized to linear interpolation.
    This is the stage adapting the number of phase allocations to the
    composite channel width.
    """

    def __init__(self, width_in: int, width_out: int):
        self.weights = _interpolation_matrix(width_in, width_out)
        self.bias = np.zeros(width_out)
        self.grad_weights = np.zeros_like(self.weights)
        self.grad_bias = np.zeros_like(self.bias)
        self._cache = None

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        out = np.tensordot(x, self.weights, axes=([3], [0])) + self.bias
        if training:
            self._cache = x
        return out

    def backward(self, gy: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise RuntimeError("resize backward called without a cached training forward")
        x = self._cache
        self.grad_weights = np.tensordot(x, gy, axes=([0, 1, 2], [0, 1, 2]))
        self.grad_bias = gy.sum(axis=(0, 1, 2))
        return np.tensordot(gy, self.weights, axes=([3], [1]))

    def parameters(self):
        return [self.weights, self.bias]

    def gradients(self):
        return [self.grad_weights, self.grad_bias]


class PhaseLayer:
    """Unit-modulus phase allocation layer parameterized by angles.

    Emits ``cos(angles) + j sin(angles)``, so the unit-modulus constraint
    holds for every parameter value; no projection is ever needed.  With
    `lock_first_row` the first row is emitted as exactly one and receives
    zero gradient (the direct path has no configurable coefficient).
    """

    def __init__(self, angles: np.ndarray, lock_first_row: bool = True):
        self.angles = np.asarray(angles, dtype=np.float64)
        if self.angles.ndim != 2:
            raise ValueError("phase angles must form a 2-D matrix")
        self.lock_first_row = lock_first_row
        self.grad_angles = np.zeros_like(self.angles)

    @classmethod
    def random(cls, rows: int, cols: int, rng: np.random.Generator,
               lock_first_row: bool = True) -> "PhaseLayer":
        return cls(rng.uniform(-np.pi, np.pi, size=(rows, cols)), lock_first_row)

    def forward(self) -> np.ndarray:
        out = np.cos(self.angles) + 1j * np.sin(self.angles)
        if self.lock_first_row:
            out[0, :] = 1.0
        return out

    def backward(self, grad_re: np.ndarray, grad_im: np.ndarray) -> np.ndarray:
        grad = -np.sin(self.angles) * grad_re + np.cos(self.angles) * grad_im
        if self.lock_first_row:
            grad[0, :] = 0.0
        self.grad_angles = grad
        return grad

    def phase_matrix(self) -> PhaseMatrix:
        """Emitted allocation as a validated :class:`PhaseMatrix`.

        An unlocked first row is canonicalized by rotating each column so
        its first entry equals one; the rotation is unimodular, so this is
        an information-preserving reparameterization.
        """
        out = self.forward()
        if not self.lock_first_row:
            out = out * (out[0, :].conj() / np.abs(out[0, :]))[np.newaxis, :]
            out[0, :] = 1.0
        return PhaseMatrix(out)

    def parameters(self):
        return [self.angles]

    def gradients(self):
        return [self.grad_angles]


def phase_forward(angles: np.ndarray, lock_first_row: bool = True) -> np.ndarray:
    """Functional form of :meth:`PhaseLayer.forward`."""
    return PhaseLayer(angles, lock_first_row).forward()


def phase_backward(angles: np.ndarray, grad_re: np.ndarray, grad_im: np.ndarray,
                   lock_first_row: bool = True) -> np.ndarray:
    """Functional form of :meth:`PhaseLayer.backward`."""
    return PhaseLayer(angles, lock_first_row).backward(grad_re, grad_im)
