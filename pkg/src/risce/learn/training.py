"""Joint gradient training of the phase layer and the CNN estimator.

Each minibatch draws channel realizations from the training set, emulates
the pilot observation with the current phase matrix plus fresh noise at the
configured SNR, and minimizes the batch-mean squared Frobenius error of the
channel estimate.  A single backward pass updates the CNN parameters and
the phase angles simultaneously.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import TrainingError
from ..model import SystemDims, complex_normal, nmse, snr_to_noise_variance
from .layers import ACTIVATIONS
from .network import PhaseCnnModel, planes_from_complex


@dataclass(frozen=True)
class TrainConfig:
    """Hyper-parameters of one joint training run.

    `snr_range_db` switches from a fixed training SNR to per-minibatch SNRs
    drawn uniformly from the range.
    """

    batch_size: int = 128
    learning_rate: float = 1e-3
    epochs: int = 20
    snr_db: float = 20.0
    num_kernels: int = 24
    num_layers: int = 3
    activation: str = "silu"
    batch_norm: bool = False
    lock_first_row: bool = True
    snr_range_db: tuple[float, float] | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        # zero is allowed (and leaves parameters untouched); negative is not
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be nonnegative, got {self.learning_rate}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be nonnegative, got {self.epochs}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


class Adam:
    """Adaptive moment estimation over a list of parameter arrays (updated in place)."""

    def __init__(self, params: list[np.ndarray], learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        bias1 = 1.0 - self.beta1 ** self.t
        bias2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + self.eps)


@dataclass
class TrainingLog:
    """Per-epoch training loss and validation NMSE."""

    epochs: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    val_nmse: list[float] = field(default_factory=list)

    def append(self, epoch: int, loss: float, val: float) -> None:
        self.epochs.append(epoch)
        self.train_loss.append(loss)
        self.val_nmse.append(val)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "val_nmse"])
            for row in zip(self.epochs, self.train_loss, self.val_nmse):
                writer.writerow([row[0], repr(row[1]), repr(row[2])])


def mse_loss_and_grad(est_planes: np.ndarray, target_planes: np.ndarray):
    """Batch-mean squared Frobenius error and its gradient w.r.t. the estimate."""
    diff = est_planes - target_planes
    batch = diff.shape[0]
    loss = float(np.sum(diff ** 2) / batch)
    return loss, 2.0 * diff / batch


def _training_step(model: PhaseCnnModel, composites: np.ndarray, noise_variance: float,
                   rng: np.random.Generator, optimizer: Adam) -> float:
    emitted = model.emit_phases()
    observations = composites @ emitted
    if noise_variance > 0:
        observations = observations + complex_normal(rng, observations.shape, noise_variance)
    est_planes = model.cnn_forward(planes_from_complex(observations), training=True)
    loss, grad_est = mse_loss_and_grad(est_planes, planes_from_complex(composites))
    grad_planes = model.cnn_backward(grad_est)
    model.backward_to_phases(composites, grad_planes)
    optimizer.step(model.gradients())
    return loss


def validation_nmse(model: PhaseCnnModel, dataset, noise_variance: float,
                    rng: np.random.Generator) -> float:
    """NMSE of the model on a dataset with one fresh noise realization."""
    composites = dataset.composites
    observations = composites @ model.emit_phases()
    if noise_variance > 0:
        observations = observations + complex_normal(rng, observations.shape, noise_variance)
    estimates = model.estimate_planes(observations, training=False)
    return nmse(composites, estimates)


def train_joint(dataset, dims: SystemDims, config: TrainConfig,
                val_dataset=None, verbose: bool = False):
    """Train a :class:`PhaseCnnModel` on a (normalized) channel dataset.

    Returns the trained model and a :class:`TrainingLog`.  Raises
    :class:`TrainingError` if the loss turns non-finite.
    """
    if len(dataset) < 1:
        raise ValueError("training dataset is empty")
    if not dataset.normalized:
        raise ValueError("train on a normalized dataset (see channelgen.normalize)")
    if dataset.bs_antennas != dims.bs_antennas or dataset.ris_elements != dims.ris_elements:
        raise ValueError(f"dataset dimensions do not match {dims}")

    rng = np.random.default_rng(config.seed)
    model = PhaseCnnModel.build(
        dims,
        num_kernels=config.num_kernels,
        num_layers=config.num_layers,
        activation=config.activation,
        batch_norm=config.batch_norm,
        lock_first_row=config.lock_first_row,
        rng=rng,
    )
    optimizer = Adam(model.parameters(), config.learning_rate,
                     config.beta1, config.beta2, config.eps)
    composites = dataset.composites
    n = len(dataset)
    log = TrainingLog()
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            batch = composites[order[start:start + config.batch_size]]
            if config.snr_range_db is not None:
                snr_db = rng.uniform(*config.snr_range_db)
            else:
                snr_db = config.snr_db
            loss = _training_step(model, batch, snr_to_noise_variance(snr_db), rng, optimizer)
            if not math.isfinite(loss):
                raise TrainingError(f"training loss diverged at epoch {epoch}")
            losses.append(loss)
        val = math.nan
        if val_dataset is not None:
            val = validation_nmse(model, val_dataset,
                                  snr_to_noise_variance(config.snr_db), rng)
        log.append(epoch, float(np.mean(losses)), val)
        if verbose:
            print(f"epoch {epoch:3d}  train_loss {log.train_loss[-1]:.3e}  val_nmse {val:.3e}")
    return model, log


@dataclass(frozen=True)
class HyperRanges:
    """Sampling ranges of the random hyper-parameter search."""

    batch_size_log2: tuple[int, int] = (5, 11)
    learning_rate: tuple[float, float] = (1e-5, 1e-1)
    num_kernels: tuple[int, int] = (16, 512)
    num_layers: tuple[int, int] = (3, 9)
    activations: tuple[str, ...] = ("relu", "tanh", "sigmoid", "silu", "elu")
    batch_norm_choices: tuple[bool, ...] = (False, True)


def sample_config(base: TrainConfig, ranges: HyperRanges,
                  rng: np.random.Generator, seed: int) -> TrainConfig:
    """Draw one random configuration (learning rate log-uniform)."""
    log_lo, log_hi = np.log10(ranges.learning_rate[0]), np.log10(ranges.learning_rate[1])
    return replace(
        base,
        batch_size=2 ** int(rng.integers(ranges.batch_size_log2[0],
                                         ranges.batch_size_log2[1] + 1)),
        learning_rate=float(10.0 ** rng.uniform(log_lo, log_hi)),
        num_kernels=int(rng.integers(ranges.num_kernels[0], ranges.num_kernels[1] + 1)),
        num_layers=int(rng.integers(ranges.num_layers[0], ranges.num_layers[1] + 1)),
        activation=str(rng.choice(ranges.activations)),
        batch_norm=bool(rng.choice(ranges.batch_norm_choices)),
        seed=seed,
    )


def hyper_search(dataset, dims: SystemDims, base: TrainConfig, val_dataset,
                 trials: int = 10, ranges: HyperRanges | None = None,
                 rng=None, verbose: bool = False):
    """Random hyper-parameter search; returns (best config, model, trial table).

    Trials that diverge are recorded with infinite score and skipped.
    Deterministic for a given rng seed.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    ranges = ranges or HyperRanges()
    rng = np.random.default_rng(rng)
    noise_variance = snr_to_noise_variance(base.snr_db)
    results = []
    best = None
    for trial in range(trials):
        config = sample_config(base, ranges, rng, seed=int(rng.integers(2 ** 31)))
        try:
            model, _ = train_joint(dataset, dims, config)
            score = validation_nmse(model, val_dataset, noise_variance,
                                    np.random.default_rng(config.seed + 1))
        except TrainingError:
            model, score = None, math.inf
        results.append((config, score))
        if verbose:
            print(f"trial {trial:3d}  val_nmse {score:.4e}")
        if model is not None and (best is None or score < best[1]):
            best = (config, score, model)
    if best is None:
        raise TrainingError("all hyper-parameter search trials diverged")
    return best[0], best[2], results
