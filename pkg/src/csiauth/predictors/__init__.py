"""Predictor registry: five interchangeable schemes behind one contract."""

from __future__ import annotations

from ..bundle import DatasetBundle
from ..config import DenoiserSpec, TrainConfig
from .base import (Predictor, checkpoint_hash, checkpoint_header,
                   checkpoint_state, load_predictor)
from .direct import DirectPredictor, direct_reference
from .gdm import GdmPredictor
from .recurrent import GRUCell, LSTMCell, RecurrentPredictor
from .vae import VaePredictor

_CLASSES = {
    "gdm": GdmPredictor,
    "vae": VaePredictor,
    "lstm": RecurrentPredictor,
    "gru": RecurrentPredictor,
    "direct": DirectPredictor,
}


def predictor_class(kind: str):
    if kind not in _CLASSES:
        raise ValueError(f"unknown predictor kind {kind!r}; "
                         f"choose from {sorted(_CLASSES)}")
    return _CLASSES[kind]


def train_predictor(kind: str, bundle: DatasetBundle, cfg: TrainConfig,
                    spec: DenoiserSpec | None = None,
                    norm_mode: str = "per_sample") -> Predictor:
    """Train any scheme on a bundle; the harness's single entry point."""
    if kind == "gdm":
        return GdmPredictor.train(bundle, spec or DenoiserSpec(), cfg, norm_mode)
    if kind == "vae":
        return VaePredictor.train(bundle, cfg, norm_mode)
    if kind in ("lstm", "gru"):
        return RecurrentPredictor.train(bundle, kind, cfg, norm_mode)
    if kind == "direct":
        return DirectPredictor.train(bundle)
    raise ValueError(f"unknown predictor kind {kind!r}")


def train_vae(bundle, cfg: TrainConfig, norm_mode: str = "per_sample"):
    return VaePredictor.train(bundle, cfg, norm_mode)


def train_recurrent(bundle, kind: str, cfg: TrainConfig,
                    norm_mode: str = "per_sample"):
    return RecurrentPredictor.train(bundle, kind, cfg, norm_mode)


def train_gdm(bundle, spec: DenoiserSpec, cfg: TrainConfig,
              norm_mode: str = "per_sample"):
    return GdmPredictor.train(bundle, spec, cfg, norm_mode)


__all__ = [
    "DirectPredictor", "GdmPredictor", "Predictor", "RecurrentPredictor",
    "VaePredictor", "checkpoint_hash", "checkpoint_header", "checkpoint_state",
    "direct_reference", "load_predictor", "predictor_class", "train_gdm",
    "train_predictor", "train_recurrent", "train_vae",
]
