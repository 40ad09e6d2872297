"""csiauth: channel-extrapolation physical-layer authentication.

A collaborator's CSI fingerprint conditions a generative diffusion model
that predicts the legitimate transmitter's fingerprint; authentication
compares the prediction against the fingerprint under test.
"""

__version__ = "0.1.0"

from .config import DenoiserSpec, ExperimentPlan, ScenarioConfig, TrainConfig
from .csi import ALICE, EVE, JACK, ComplexCsi, empirical_correlation
from .bundle import DatasetBundle, load_bundle, load_external_dataset, save_bundle
from .fingerprint import (FingerprintImage, NormalizationMeta, batchify,
                          denormalize, normalize, unbatchify)
from .scenario import (add_estimation_noise, generate_eve_samples,
                       generate_pair_sequence, split_dataset)

__all__ = [
    "ALICE", "EVE", "JACK",
    "ComplexCsi", "DatasetBundle", "DenoiserSpec", "ExperimentPlan",
    "FingerprintImage", "NormalizationMeta", "ScenarioConfig", "TrainConfig",
    "add_estimation_noise", "batchify", "denormalize", "empirical_correlation",
    "generate_eve_samples", "generate_pair_sequence", "load_bundle",
    "load_external_dataset", "normalize", "save_bundle", "split_dataset",
    "unbatchify",
]
