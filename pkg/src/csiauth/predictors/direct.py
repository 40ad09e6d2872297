"""Baseline 3: compare the fingerprint under test against Jack's directly."""

from __future__ import annotations

import numpy as np

from ..bundle import DatasetBundle
from ..csi import REFERENCE, ComplexCsi
from .base import Predictor, meta_from_header


def direct_reference(x_j: ComplexCsi) -> ComplexCsi:
    """Relabel Jack's fingerprint as the reference; no learning involved."""
    return x_j.relabel(REFERENCE, provenance="predicted")


class DirectPredictor(Predictor):
    kind = "direct"

    @classmethod
    def train(cls, bundle: DatasetBundle, *_args, **_kwargs) -> "DirectPredictor":
        return cls(bundle.fingerprint_shape)

    def predict_batch(self, windows: np.ndarray, rng_seed: int = 0) -> np.ndarray:
        windows = self._check_windows(windows)
        return windows[:, -1].copy()

    def predict(self, x_j: ComplexCsi, rng_seed: int = 0) -> ComplexCsi:
        self._check_shape(x_j.values.shape)
        return direct_reference(x_j)

    @classmethod
    def from_checkpoint(cls, header: dict, state: dict) -> "DirectPredictor":
        self = cls(tuple(header["fingerprint_shape"]), header["norm_mode"],
                   meta_from_header(header))
        return self
