"""Channel estimation for RIS-aided SIMO systems with reduced phase allocations.

Library + CLI for synthesizing scenario-specific channels, evaluating
least-squares / sample-covariance LMMSE / Gaussian-mixture conditional-mean
estimators under DFT, random, exhaustively searched and gradient-learned
phase allocation matrices, and jointly training a unit-modulus phase layer
with a small CNN estimator.
"""

from .model import (
    ChannelSample,
    Observation,
    PhaseMatrix,
    SystemDims,
    assemble_composite,
    build_observation_matrix,
    nmse,
    observe,
    snr_to_noise_variance,
)

__version__ = "0.1.0"

__all__ = [
    "ChannelSample",
    "Observation",
    "PhaseMatrix",
    "SystemDims",
    "assemble_composite",
    "build_observation_matrix",
    "nmse",
    "observe",
    "snr_to_noise_variance",
    "__version__",
]
