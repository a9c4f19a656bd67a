"""Joint phase-allocation + CNN channel estimation network.

The network front end emits the unit-modulus allocation matrix; an
observation is emulated by multiplying it with a channel batch and adding
noise.  The complex observation is split into real and imaginary planes,
passed through a stack of 3x3 convolutions, and a final learned width
resampling maps the allocation count to the composite channel width.  The
complex estimate is recombined from the two output planes.
"""

from __future__ import annotations

import numpy as np

from ..model import PhaseMatrix, SystemDims, unvec_batch, vec_batch
from .layers import Conv2d, PhaseLayer, WidthResize


def planes_from_complex(mats: np.ndarray) -> np.ndarray:
    """Stack real and imaginary parts as channels: ``(B, 2, H, W)``."""
    mats = np.asarray(mats)
    return np.ascontiguousarray(np.stack([mats.real, mats.imag], axis=1))


def complex_from_planes(planes: np.ndarray) -> np.ndarray:
    return planes[:, 0] + 1j * planes[:, 1]


class PhaseCnnModel:
    """Trainable phase layer plus convolutional estimator."""

    def __init__(self, dims: SystemDims, phase: PhaseLayer, conv_layers: list[Conv2d],
                 resize: WidthResize):
        self.dims = dims
        self.phase = phase
        self.conv_layers = conv_layers
        self.resize = resize

    @classmethod
    def build(cls, dims: SystemDims, num_kernels: int = 24, num_layers: int = 3,
              activation: str = "silu", batch_norm: bool = False,
              lock_first_row: bool = True,
              rng: np.random.Generator | None = None) -> "PhaseCnnModel":
        """Construct a randomly initialized model.

        `num_layers` counts convolution layers; the last one maps back to
        the two real/imaginary planes with a linear activation, hidden ones
        use `activation` (and batch norm when enabled).
        """
        if num_layers < 1:
            raise ValueError(f"need at least one conv layer, got {num_layers}")
        rng = np.random.default_rng(rng)
        phase = PhaseLayer.random(dims.ris_elements + 1, dims.num_phases, rng,
                                  lock_first_row=lock_first_row)
        widths = [2] + [num_kernels] * (num_layers - 1) + [2]
        conv_layers = []
        for i in range(num_layers):
            last = i == num_layers - 1
            conv_layers.append(Conv2d(
                widths[i], widths[i + 1],
                activation="linear" if last else activation,
                rng=rng,
                batch_norm=batch_norm and not last,
            ))
        resize = WidthResize(dims.num_phases, dims.ris_elements + 1)
        return cls(dims, phase, conv_layers, resize)

    # ---- CNN part ----------------------------------------------------

    def cnn_forward(self, planes: np.ndarray, training: bool = False) -> np.ndarray:
        """Map observation planes ``(B, 2, M, N_v)`` to estimate planes
        ``(B, 2, M, L + 1)``."""
        planes = np.asarray(planes, dtype=np.float64)
        expected = (2, self.dims.bs_antennas, self.dims.num_phases)
        if planes.ndim != 4 or planes.shape[1:] != expected:
            raise ValueError(f"expected input planes (B, {expected}), got {planes.shape}")
        out = planes
        for layer in self.conv_layers:
            out = layer.forward(out, training)
        return self.resize.forward(out, training)

    def cnn_backward(self, grad_out: np.ndarray) -> np.ndarray:
        """Backpropagate through the CNN; returns the input-plane gradient."""
        grad = self.resize.backward(np.asarray(grad_out, dtype=np.float64))
        for layer in reversed(self.conv_layers):
            grad = layer.backward(grad)
        return grad

    # ---- joint forward on complex channel batches ---------------------

    def emit_phases(self) -> np.ndarray:
        return self.phase.forward()

    def estimate_planes(self, observations: np.ndarray, training: bool = False) -> np.ndarray:
        """Complex observation batch ``(B, M, N_v)`` to complex estimates
        ``(B, M, L + 1)``."""
        planes = self.cnn_forward(planes_from_complex(observations), training)
        return complex_from_planes(planes)

    def backward_to_phases(self, composites: np.ndarray, grad_planes: np.ndarray) -> np.ndarray:
        """Push the observation-plane gradient into the phase angles.

        The observation is ``Y = H V + N``, linear in the emitted matrix, so
        the matrix gradient accumulates ``H^T``-weighted plane gradients
        over the batch; the phase layer then maps it onto the angles.
        """
        g_re = grad_planes[:, 0]
        g_im = grad_planes[:, 1]
        h_re = composites.real
        h_im = composites.imag
        grad_v_re = np.einsum("bml,bmn->ln", h_re, g_re) + np.einsum("bml,bmn->ln", h_im, g_im)
        grad_v_im = np.einsum("bml,bmn->ln", h_re, g_im) - np.einsum("bml,bmn->ln", h_im, g_re)
        return self.phase.backward(grad_v_re, grad_v_im)

    # ---- parameter plumbing -------------------------------------------

    def parameters(self) -> list[np.ndarray]:
        params = self.phase.parameters()
        for layer in self.conv_layers:
            params += layer.parameters()
        params += self.resize.parameters()
        return params

    def gradients(self) -> list[np.ndarray]:
        grads = self.phase.gradients()
        for layer in self.conv_layers:
            grads += layer.gradients()
        grads += self.resize.gradients()
        return grads

    def phase_matrix(self) -> PhaseMatrix:
        return self.phase.phase_matrix()


def export_phases(model: PhaseCnnModel) -> PhaseMatrix:
    """Trained phase allocations as a validated :class:`PhaseMatrix`.

    The result plugs into any estimator that consumes an allocation matrix
    (the ablation pairing learned phases with the mixture estimator).
    """
    return model.phase_matrix()


class CnnEstimator:
    """Estimator-interface adapter around a trained model.

    The phase allocation argument is accepted for interface compatibility;
    observations are expected to follow the allocation the model was
    trained with (its own :meth:`PhaseCnnModel.phase_matrix`), which is the
    only pairing with meaningful performance.
    """

    name = "cnn"

    def __init__(self, model: PhaseCnnModel):
        self.model = model

    def estimate(self, y, phases, noise_variance):
        return self.estimate_batch(np.asarray(y).reshape(1, -1), phases, noise_variance)[0]

    def estimate_batch(self, ys, phases, noise_variance):
        del noise_variance
        ys = np.asarray(ys)
        m = self.model.dims.bs_antennas
        if ys.ndim != 2 or ys.shape[1] != m * self.model.dims.num_phases:
            raise ValueError(
                f"observation length {ys.shape} incompatible with model dims {self.model.dims}"
            )
        y_mats = unvec_batch(ys, m)
        estimates = self.model.estimate_planes(y_mats, training=False)
        return vec_batch(estimates)
