"""Conditional VAE baseline with cross-attention conditioning.

Posterior encoder sees (target, condition) stacked as a 4-plane image and
emits a Gaussian latent; the decoder rebuilds the target from the latent
while attending to condition features at two resolutions.  ELBO =
reconstruction MSE + beta_kl * KL(q || N(0, I)), with the KL normalized per
image element so beta_kl = 1 stays balanced.  Inference decodes the prior
mean (latent = 0), which makes predictions deterministic.
"""

from __future__ import annotations

import math

import numpy as np

from ..bundle import DatasetBundle
from ..config import TrainConfig
from ..errors import TrainingFault
from ..fingerprint import dataset_meta
from ..nn.modules import (AttentionBlock2d, AvgPool2, Conv2d, GroupNorm, Linear,
                          Module, SiLU, UpNearest2)
from ..nn.optim import Adam
from ..nn.threads import blas_single_thread
from ..scenario import add_noise_array
from ..unet import ResBlock
from .base import DivergenceGuard, Predictor, meta_from_header


class CondVaeNet(Module):
    def __init__(self, shape: tuple[int, int], latent_dim: int,
                 rng: np.random.Generator, base: int = 16, dtype=np.float32):
        h, w = shape
        if h % 2 or w % 2:
            raise ValueError(f"fingerprint dims must be even, got {shape}")
        self.shape = shape
        self.latent_dim = latent_dim
        self.base = base
        deep = base * 2
        self.flat = deep * (h // 2) * (w // 2)

        self.c_in = Conv2d(2, base, 3, rng, dtype)
        self.c_res0 = ResBlock(base, base, rng, None, dtype)
        self.c_pool = AvgPool2()
        self.c_res1 = ResBlock(base, deep, rng, None, dtype)

        self.e_in = Conv2d(4, base, 3, rng, dtype)
        self.e_res0 = ResBlock(base, base, rng, None, dtype)
        self.e_pool = AvgPool2()
        self.e_res1 = ResBlock(base, deep, rng, None, dtype)
        self.e_fc = Linear(self.flat, 2 * latent_dim, rng, dtype)

        self.d_fc = Linear(latent_dim, self.flat, rng, dtype)
        self.d_res1 = ResBlock(deep, deep, rng, None, dtype)
        self.d_attn1 = AttentionBlock2d(deep, rng, cross=True, dtype=dtype)
        self.d_up = UpNearest2()
        self.d_res0 = ResBlock(deep, base, rng, None, dtype)
        self.d_attn0 = AttentionBlock2d(base, rng, cross=True, dtype=dtype)
        self.d_norm = GroupNorm(base, dtype=dtype)
        self.d_act = SiLU()
        self.d_out = Conv2d(base, 2, 3, rng, dtype)

    def cond_features(self, cond: np.ndarray, train: bool = False):
        f0 = self.c_res0.forward(self.c_in.forward(cond, train), None, train)
        f1 = self.c_res1.forward(self.c_pool.forward(f0, train), None, train)
        return f0, f1

    def encode(self, target: np.ndarray, cond: np.ndarray, train: bool = False):
        h = self.e_in.forward(np.concatenate([target, cond], axis=1), train)
        h = self.e_res0.forward(h, None, train)
        h = self.e_res1.forward(self.e_pool.forward(h, train), None, train)
        stats = self.e_fc.forward(h.reshape(h.shape[0], -1), train)
        if train:
            self._enc_shape = h.shape
        return stats[:, :self.latent_dim], stats[:, self.latent_dim:]

    def decode(self, z: np.ndarray, f0: np.ndarray, f1: np.ndarray,
               train: bool = False) -> np.ndarray:
        hh, ww = self.shape[0] // 2, self.shape[1] // 2
        h = self.d_fc.forward(z, train).reshape(len(z), -1, hh, ww)
        h = self.d_res1.forward(h, None, train)
        h = self.d_attn1.forward(h, f1, train=train)
        h = self.d_res0.forward(self.d_up.forward(h, train), None, train)
        h = self.d_attn0.forward(h, f0, train=train)
        h = self.d_act.forward(self.d_norm.forward(h, train), train)
        return self.d_out.forward(h, train)

    def backward(self, grecon: np.ndarray, gmu_kl: np.ndarray, glv_kl: np.ndarray,
                 eps: np.ndarray, logvar: np.ndarray):
        """Backprop decoder + reparametrized latent + encoder + cond branch."""
        g = self.d_norm.backward(self.d_act.backward(self.d_out.backward(grecon)))
        g, gf0 = self.d_attn0.backward(g)
        g, _ = self.d_res0.backward(g)
        g = self.d_up.backward(g)
        g, gf1 = self.d_attn1.backward(g)
        g, _ = self.d_res1.backward(g)
        gz = self.d_fc.backward(g.reshape(len(g), -1))
        gmu = gz + gmu_kl
        glv = gz * eps * 0.5 * np.exp(0.5 * logvar) + glv_kl
        gstats = np.concatenate([gmu, glv], axis=1)
        gh = self.e_fc.backward(gstats).reshape(self._enc_shape)
        gh, _ = self.e_res1.backward(gh)
        gh = self.e_pool.backward(gh)
        gh, _ = self.e_res0.backward(gh)
        self.e_in.backward(gh)
        g1, _ = self.c_res1.backward(gf1)
        g0, _ = self.c_res0.backward(gf0 + self.c_pool.backward(g1))
        self.c_in.backward(g0)


class VaePredictor(Predictor):
    kind = "vae"

    def __init__(self, fingerprint_shape, latent_dim: int = 64,
                 norm_mode="per_sample", dataset_meta=None, init_seed: int = 0,
                 beta_kl: float = 1.0, net: CondVaeNet | None = None,
                 dtype=np.float32):
        super().__init__(fingerprint_shape, norm_mode, dataset_meta)
        self.latent_dim = latent_dim
        self.beta_kl = beta_kl
        self.init_seed = init_seed
        self.net = net if net is not None else CondVaeNet(
            tuple(fingerprint_shape), latent_dim, np.random.default_rng(init_seed),
            dtype=dtype)

    @classmethod
    def train(cls, bundle: DatasetBundle, cfg: TrainConfig,
              norm_mode: str = "per_sample") -> "VaePredictor":
        if bundle.n_pairs == 0:
            raise ValueError("cannot train on an empty bundle")
        dtype = np.float32 if cfg.dtype == "float32" else np.float64
        self = cls(bundle.fingerprint_shape, cfg.latent_dim, norm_mode,
                   dataset_meta=(dataset_meta([bundle.jack_values, bundle.alice_values])
                                 if norm_mode == "per_dataset" else None),
                   init_seed=cfg.seed, beta_kl=cfg.beta_kl, dtype=dtype)
        rng = np.random.default_rng([cfg.seed, 41])
        opt = Adam(self.net.parameters(), lr=cfg.lr)
        guard = DivergenceGuard()
        jack, alice = bundle.jack_values, bundle.alice_values
        n = bundle.n_pairs
        window = []
        with blas_single_thread():
            for step in range(cfg.steps):
                idx = rng.integers(0, n, size=cfg.batch_size)
                jb, ab = jack[idx], alice[idx]
                if cfg.cond_snr_augment is not None:
                    jb = add_noise_array(jb, rng.uniform(*cfg.cond_snr_augment), rng)
                planes, metas = self._cond_planes_meta(jb[:, None])
                cond = np.ascontiguousarray(planes[:, 0], dtype=self.net.d_out.weight.value.dtype)
                x0 = self._target_planes(ab, metas).astype(cond.dtype)

                self.net.zero_grad()
                f0, f1 = self.net.cond_features(cond, train=True)
                mu, logvar = self.net.encode(x0, cond, train=True)
                logvar = np.clip(logvar, -12.0, 12.0)
                eps = rng.standard_normal(mu.shape).astype(mu.dtype)
                z = mu + np.exp(0.5 * logvar) * eps
                recon = self.net.decode(z, f0, f1, train=True)

                resid = recon - x0
                d_img = resid.size
                recon_loss = float(np.mean(resid ** 2))
                kl_total = float(-0.5 * np.sum(1 + logvar - mu ** 2 - np.exp(logvar)))
                loss = recon_loss + self.beta_kl * kl_total / d_img
                if not math.isfinite(loss):
                    raise TrainingFault("non-finite VAE loss",
                                        diagnostics={"step": step, "recon": recon_loss,
                                                     "kl": kl_total})
                scale = self.beta_kl / d_img
                self.net.backward(2.0 * resid / d_img, scale * mu,
                                  scale * 0.5 * (np.exp(logvar) - 1.0), eps, logvar)
                opt.step()
                window.append(loss)
                if (step + 1) % cfg.log_every == 0 or step == cfg.steps - 1:
                    mean_loss = float(np.mean(window))
                    window = []
                    self.training_log.append((step + 1, mean_loss))
                    guard.update(mean_loss, self.training_log)
        return self

    def predict_batch(self, windows: np.ndarray, rng_seed: int = 0,
                      chunk: int = 512) -> np.ndarray:
        windows = self._check_windows(windows)
        n = windows.shape[0]
        out = np.empty((n,) + self.fingerprint_shape, dtype=np.complex128)
        with blas_single_thread():
            for lo in range(0, n, chunk):
                hi = min(lo + chunk, n)
                planes, metas = self._cond_planes_meta(windows[lo:hi])
                cond = np.ascontiguousarray(planes[:, -1],
                                            dtype=self.net.d_out.weight.value.dtype)
                f0, f1 = self.net.cond_features(cond, train=False)
                z = np.zeros((hi - lo, self.latent_dim), dtype=cond.dtype)
                recon = self.net.decode(z, f0, f1, train=False)
                out[lo:hi] = self._denorm(recon, metas)
        return out

    def _header(self) -> dict:
        h = super()._header()
        h.update({"latent_dim": self.latent_dim, "beta_kl": self.beta_kl,
                  "init_seed": self.init_seed,
                  "dtype": str(self.net.d_out.weight.value.dtype)})
        return h

    def _state(self) -> dict:
        return self.net.state_dict()

    @classmethod
    def from_checkpoint(cls, header: dict, state: dict) -> "VaePredictor":
        self = cls(tuple(header["fingerprint_shape"]), header["latent_dim"],
                   header["norm_mode"], meta_from_header(header),
                   init_seed=header["init_seed"], beta_kl=header["beta_kl"],
                   dtype=np.dtype(header.get("dtype", "float32")).type)
        self.net.load_state_dict(state)
        self.training_log = [tuple(x) for x in header.get("training_log", [])]
        return self
