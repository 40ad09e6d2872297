"""Diffusion-based fingerprint predictor: the proposed scheme."""

from __future__ import annotations

import numpy as np

from ..bundle import DatasetBundle
from ..config import DenoiserSpec, TrainConfig
from ..diffusion import DiffusionSchedule, build_schedule, ddim_sample, loss_step
from ..errors import TrainingFault
from ..fingerprint import NormalizationMeta, dataset_meta
from ..nn.optim import Adam
from ..nn.threads import blas_single_thread
from ..scenario import add_noise_array
from ..unet import ConditionalUNet
from .base import DivergenceGuard, Predictor, meta_from_header


class GdmPredictor(Predictor):
    kind = "gdm"

    def __init__(self, spec: DenoiserSpec, sched: DiffusionSchedule,
                 fingerprint_shape, norm_mode="per_sample", dataset_meta=None,
                 ddim_steps: int = 20, ddim_eta: float = 0.0,
                 model: ConditionalUNet | None = None, init_seed: int = 0,
                 x0_clip: float = 1.5, dtype=np.float32):
        super().__init__(fingerprint_shape, norm_mode, dataset_meta)
        self.spec = spec
        self.sched = sched
        self.ddim_steps = ddim_steps
        self.ddim_eta = ddim_eta
        self.x0_clip = x0_clip
        self.init_seed = init_seed
        self.model = model if model is not None else ConditionalUNet(
            spec, rng=np.random.default_rng(init_seed), dtype=dtype)

    # -- training -----------------------------------------------------------
    @classmethod
    def train(cls, bundle: DatasetBundle, spec: DenoiserSpec,
              cfg: TrainConfig, norm_mode: str = "per_sample",
              sched: DiffusionSchedule | None = None) -> "GdmPredictor":
        if bundle.n_pairs == 0:
            raise ValueError("cannot train on an empty bundle")
        if sched is None:
            sched = build_schedule(cfg.schedule_kind, cfg.t_train,
                                   cfg.beta_start, cfg.beta_end)
        dtype = np.float32 if cfg.dtype == "float32" else np.float64
        self = cls(spec, sched, bundle.fingerprint_shape, norm_mode,
                   dataset_meta=(dataset_meta([bundle.jack_values, bundle.alice_values])
                                 if norm_mode == "per_dataset" else None),
                   init_seed=cfg.seed, dtype=dtype)
        rng = np.random.default_rng([cfg.seed, 17])
        opt = Adam(self.model.parameters(), lr=cfg.lr)
        guard = DivergenceGuard()
        jack, alice = bundle.jack_values, bundle.alice_values
        n = bundle.n_pairs
        window_losses = []
        with blas_single_thread():
            for step in range(cfg.steps):
                idx = rng.integers(0, n, size=cfg.batch_size)
                jb, ab = jack[idx], alice[idx]
                if cfg.cond_snr_augment is not None:
                    snr = rng.uniform(*cfg.cond_snr_augment)
                    jb = add_noise_array(jb, snr, rng)
                planes, metas = self._cond_planes_meta(jb[:, None])
                cond = np.ascontiguousarray(planes[:, 0])
                x0 = self._target_planes(ab, metas)
                self.model.zero_grad()
                loss = loss_step(self.model, x0, cond, sched, rng, train=True)
                opt.step()
                window_losses.append(loss)
                if (step + 1) % cfg.log_every == 0 or step == cfg.steps - 1:
                    mean_loss = float(np.mean(window_losses))
                    window_losses = []
                    self.training_log.append((step + 1, mean_loss))
                    guard.update(mean_loss, self.training_log)
        return self

    # -- inference ------------------------------------------------------------
    def predict_batch(self, windows: np.ndarray, rng_seed: int = 0,
                      denorm_metas: np.ndarray | None = None,
                      chunk: int = 256) -> np.ndarray:
        windows = self._check_windows(windows)
        n = windows.shape[0]
        h, w = self.fingerprint_shape
        out = np.empty((n, h, w), dtype=np.complex128)
        noise_rng = np.random.default_rng([rng_seed, 23])
        init = noise_rng.standard_normal((n, 2, h, w))
        with blas_single_thread():
            for lo in range(0, n, chunk):
                hi = min(lo + chunk, n)
                planes, metas = self._cond_planes_meta(windows[lo:hi])
                cond = np.ascontiguousarray(planes[:, -1])
                cond32 = cond.astype(self.model.dtype)
                feats = self.model.cond_features(cond32, train=False)
                sample = ddim_sample(
                    lambda x, t, c: self.model.forward(x, t, cond32, train=False,
                                                       cond_feats=c),
                    (hi - lo, 2, h, w), self.sched, steps=self.ddim_steps,
                    eta=self.ddim_eta, init_noise=init[lo:hi],
                    rng=np.random.default_rng([rng_seed, 29, lo]), cond=feats,
                    clip_x0=self.x0_clip)
                use_metas = metas if denorm_metas is None else denorm_metas[lo:hi]
                out[lo:hi] = self._denorm(sample, use_metas)
        return out

    # -- checkpoints ------------------------------------------------------------
    def _header(self) -> dict:
        h = super()._header()
        h.update({
            "denoiser_spec": self.spec.to_dict(),
            "schedule": self.sched.to_dict(),
            "ddim_steps": self.ddim_steps,
            "ddim_eta": self.ddim_eta,
            "x0_clip": self.x0_clip,
            "init_seed": self.init_seed,
            "dtype": str(np.dtype(self.model.dtype)),
        })
        return h

    def _state(self) -> dict:
        return self.model.state_dict()

    @classmethod
    def from_checkpoint(cls, header: dict, state: dict) -> "GdmPredictor":
        spec = DenoiserSpec(**header["denoiser_spec"])
        sched = DiffusionSchedule.from_dict(header["schedule"])
        self = cls(spec, sched, tuple(header["fingerprint_shape"]),
                   header["norm_mode"], meta_from_header(header),
                   ddim_steps=header["ddim_steps"], ddim_eta=header["ddim_eta"],
                   init_seed=header["init_seed"],
                   x0_clip=header.get("x0_clip", 1.5),
                   dtype=np.dtype(header.get("dtype", "float32")).type)
        self.model.load_state_dict(state)
        self.training_log = [tuple(x) for x in header.get("training_log", [])]
        return self
