"""Shared predictor contract and the self-describing checkpoint container.

Every scheme (gdm, vae, lstm, gru, direct) trains on a bundle and predicts
Alice's fingerprint from a window of Jack observations, so the harness can
swap any of them behind the same calls.

Checkpoints are ``.npz`` archives: a JSON ``header`` (kind, normalization
mode, architecture descriptors, schedule, seed, training log) plus one array
per parameter under ``param::<name>``.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from ..csi import ALICE, ComplexCsi, signal_power
from ..errors import ShapeError, TrainingFault
from ..fingerprint import NormalizationMeta, denormalize_batch, normalize_batch

PREDICTOR_KINDS = ("gdm", "vae", "lstm", "gru", "direct")


class Predictor:
    """Base class: window plumbing, normalization conventions, checkpoints."""

    kind: str = "base"

    def __init__(self, fingerprint_shape: tuple[int, int], norm_mode: str = "per_sample",
                 dataset_meta: NormalizationMeta | None = None):
        self.fingerprint_shape = tuple(fingerprint_shape)
        self.norm_mode = norm_mode
        self.dataset_meta = dataset_meta
        self.training_log: list[tuple[int, float]] = []

    # -- prediction -------------------------------------------------------
    def predict_batch(self, windows: np.ndarray, rng_seed: int = 0) -> np.ndarray:
        """Predict Alice fingerprints from jack windows [N, F, A, K]."""
        raise NotImplementedError

    def predict(self, x_j: ComplexCsi, rng_seed: int = 0) -> ComplexCsi:
        """Single-fingerprint contract; recurrent kinds see a constant window."""
        self._check_shape(x_j.values.shape)
        windows = np.broadcast_to(x_j.values, (1, self.min_window()) + x_j.values.shape)
        out = self.predict_batch(np.ascontiguousarray(windows), rng_seed=rng_seed)
        return ComplexCsi(out[0], ALICE, x_j.time_index, snr_db=x_j.snr_db,
                          provenance="predicted")

    def min_window(self) -> int:
        """Number of context frames the predictor consumes (incl. current)."""
        return 1

    def _check_shape(self, shape):
        if tuple(shape) != self.fingerprint_shape:
            raise ShapeError(
                f"{self.kind}: fingerprint shape {tuple(shape)} does not match "
                f"training shape {self.fingerprint_shape}")

    def _check_windows(self, windows: np.ndarray) -> np.ndarray:
        windows = np.asarray(windows, dtype=np.complex128)
        if windows.ndim != 4:
            raise ShapeError(f"windows must be [N, frames, A, K], got {windows.shape}")
        self._check_shape(windows.shape[2:])
        if windows.shape[1] < self.min_window():
            raise ShapeError(f"{self.kind} needs >= {self.min_window()} context "
                             f"frames, got {windows.shape[1]}")
        return windows

    # -- normalization conventions ----------------------------------------
    def _cond_planes_meta(self, frames: np.ndarray):
        """Normalize observation frames; returns planes and the meta rows used.

        Per-sample mode keys everything to the most recent frame's own range
        (the only statistics available online); per-dataset mode applies the
        stored training-set meta.
        """
        n, f = frames.shape[0], frames.shape[1]
        if self.norm_mode == "per_dataset":
            m = self.dataset_meta
            scale = 2.0 / m.range_common
            planes = np.empty((n, f, 2) + frames.shape[2:], dtype=np.float64)
            planes[:, :, 0] = (frames.real - m.mid_real) * scale
            planes[:, :, 1] = (frames.imag - m.mid_imag) * scale
            metas = np.tile(np.array(m.to_tuple()), (n, 1))
            return planes, metas
        _, metas = normalize_batch(frames[:, -1])
        scale = (2.0 / metas[:, 0])[:, None, None, None]
        planes = np.empty((n, f, 2) + frames.shape[2:], dtype=np.float64)
        planes[:, :, 0] = (frames.real - metas[:, 1][:, None, None, None]) * scale
        planes[:, :, 1] = (frames.imag - metas[:, 2][:, None, None, None]) * scale
        return planes, metas

    def _target_planes(self, alice: np.ndarray, metas: np.ndarray) -> np.ndarray:
        """Normalize training targets in the condition's coordinate frame."""
        scale = (2.0 / metas[:, 0])[:, None, None]
        return np.stack([(alice.real - metas[:, 1][:, None, None]) * scale,
                         (alice.imag - metas[:, 2][:, None, None]) * scale], axis=1)

    def _denorm(self, planes: np.ndarray, metas: np.ndarray) -> np.ndarray:
        return denormalize_batch(planes, metas)

    # -- checkpoint io ------------------------------------------------------
    def _header(self) -> dict:
        return {
            "kind": self.kind,
            "norm_mode": self.norm_mode,
            "fingerprint_shape": list(self.fingerprint_shape),
            "dataset_meta": (None if self.dataset_meta is None
                             else list(self.dataset_meta.to_tuple())),
            "training_log": self.training_log,
        }

    def _state(self) -> dict[str, np.ndarray]:
        return {}

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        arrays = {f"param::{k}": v for k, v in self._state().items()}
        np.savez(path, header=json.dumps(self._header(), sort_keys=True), **arrays)
        return path


def checkpoint_header(path: str | Path) -> dict:
    with np.load(path, allow_pickle=False) as z:
        return json.loads(str(z["header"]))


def checkpoint_state(path: str | Path) -> dict[str, np.ndarray]:
    with np.load(path, allow_pickle=False) as z:
        return {k[len("param::"):]: z[k] for k in z.files if k.startswith("param::")}


def checkpoint_hash(path: str | Path) -> str:
    """Content hash over header and parameters (stable across container
    rewrites, unlike a raw file hash: npz archives embed timestamps)."""
    with np.load(path, allow_pickle=False) as z:
        h = hashlib.sha256(str(z["header"]).encode())
        for key in sorted(z.files):
            if key.startswith("param::"):
                arr = np.ascontiguousarray(z[key])
                h.update(key.encode())
                h.update(arr.tobytes())
    return h.hexdigest()[:16]


def load_predictor(path: str | Path) -> Predictor:
    """Reconstruct any saved predictor from its checkpoint file."""
    from . import predictor_class
    header = checkpoint_header(path)
    cls = predictor_class(header["kind"])
    return cls.from_checkpoint(header, checkpoint_state(path))


def meta_from_header(header: dict) -> NormalizationMeta | None:
    raw = header.get("dataset_meta")
    return None if raw is None else NormalizationMeta.from_tuple(raw)


class DivergenceGuard:
    """Abort training when the loss blows past 10x its initial level."""

    def __init__(self, factor: float = 10.0, patience: int = 3):
        self.factor = factor
        self.patience = patience
        self.initial = None
        self.strikes = 0

    def update(self, loss: float, log: list):
        if self.initial is None:
            self.initial = loss
            return
        if loss > self.factor * self.initial:
            self.strikes += 1
            if self.strikes >= self.patience:
                raise TrainingFault(
                    f"training diverged: loss {loss:.4g} exceeded "
                    f"{self.factor}x initial {self.initial:.4g} for "
                    f"{self.patience} consecutive windows",
                    diagnostics={"log": log[-10:]})
        else:
            self.strikes = 0
