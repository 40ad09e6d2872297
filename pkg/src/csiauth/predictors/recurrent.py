"""LSTM/GRU time-series baselines.

These schemes regress Alice's fingerprint at time T from the sequence of
Jack's *past* fingerprints (T-W .. T-1): pure temporal extrapolation with no
same-instant spatial inference, which is what separates them from the
conditional schemes.  ``include_current`` shifts the window to end at T for
ablation.  Per-step input is the flattened two-plane image; a linear head on
the final hidden state emits the target planes.
"""

from __future__ import annotations

import math

import numpy as np

from ..bundle import DatasetBundle
from ..config import TrainConfig
from ..errors import TrainingFault
from ..fingerprint import dataset_meta
from ..nn.modules import Linear, Module, Param
from ..nn.optim import Adam
from ..nn.threads import blas_single_thread
from ..scenario import add_noise_array
from .base import DivergenceGuard, Predictor, meta_from_header


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


class LSTMCell(Module):
    """Stateless cell: forward returns the cache needed for BPTT."""

    def __init__(self, d_in: int, d_hidden: int, rng: np.random.Generator,
                 dtype=np.float32):
        self.d_in, self.d_hidden = d_in, d_hidden
        sx = math.sqrt(1.0 / d_in)
        sh = math.sqrt(1.0 / d_hidden)
        self.wx = Param((rng.standard_normal((4 * d_hidden, d_in)) * sx).astype(dtype))
        self.wh = Param((rng.standard_normal((4 * d_hidden, d_hidden)) * sh).astype(dtype))
        b = np.zeros(4 * d_hidden, dtype=dtype)
        b[d_hidden:2 * d_hidden] = 1.0  # forget-gate bias
        self.b = Param(b)

    def forward(self, x, h, c):
        gates = x @ self.wx.value.T + h @ self.wh.value.T + self.b.value
        hh = self.d_hidden
        i = _sigmoid(gates[:, :hh])
        f = _sigmoid(gates[:, hh:2 * hh])
        g = np.tanh(gates[:, 2 * hh:3 * hh])
        o = _sigmoid(gates[:, 3 * hh:])
        c2 = f * c + i * g
        h2 = o * np.tanh(c2)
        return h2, c2, (x, h, c, i, f, g, o, c2)

    def backward(self, cache, gh2, gc2):
        x, h, c, i, f, g, o, c2 = cache
        tc2 = np.tanh(c2)
        gc = gc2 + gh2 * o * (1.0 - tc2 ** 2)
        d_i = (gc * g) * i * (1.0 - i)
        d_f = (gc * c) * f * (1.0 - f)
        d_g = (gc * i) * (1.0 - g ** 2)
        d_o = (gh2 * tc2) * o * (1.0 - o)
        dgates = np.concatenate([d_i, d_f, d_g, d_o], axis=1)
        self.wx.add_grad(dgates.T @ x)
        self.wh.add_grad(dgates.T @ h)
        self.b.add_grad(dgates.sum(axis=0))
        return dgates @ self.wx.value, dgates @ self.wh.value, gc * f


class GRUCell(Module):
    def __init__(self, d_in: int, d_hidden: int, rng: np.random.Generator,
                 dtype=np.float32):
        self.d_in, self.d_hidden = d_in, d_hidden
        sx = math.sqrt(1.0 / d_in)
        sh = math.sqrt(1.0 / d_hidden)
        self.wx_rz = Param((rng.standard_normal((2 * d_hidden, d_in)) * sx).astype(dtype))
        self.wh_rz = Param((rng.standard_normal((2 * d_hidden, d_hidden)) * sh).astype(dtype))
        self.b_rz = Param(np.zeros(2 * d_hidden, dtype=dtype))
        self.wx_n = Param((rng.standard_normal((d_hidden, d_in)) * sx).astype(dtype))
        self.wh_n = Param((rng.standard_normal((d_hidden, d_hidden)) * sh).astype(dtype))
        self.bx_n = Param(np.zeros(d_hidden, dtype=dtype))
        self.bh_n = Param(np.zeros(d_hidden, dtype=dtype))

    def forward(self, x, h, c=None):
        hh = self.d_hidden
        rz = _sigmoid(x @ self.wx_rz.value.T + h @ self.wh_rz.value.T + self.b_rz.value)
        r, z = rz[:, :hh], rz[:, hh:]
        hn = h @ self.wh_n.value.T + self.bh_n.value
        n = np.tanh(x @ self.wx_n.value.T + self.bx_n.value + r * hn)
        h2 = (1.0 - z) * n + z * h
        return h2, None, (x, h, r, z, n, hn)

    def backward(self, cache, gh2, gc2=None):
        x, h, r, z, n, hn = cache
        gz = gh2 * (h - n)
        gn = gh2 * (1.0 - z)
        gh_prev = gh2 * z
        dn = gn * (1.0 - n ** 2)
        self.wx_n.add_grad(dn.T @ x)
        self.bx_n.add_grad(dn.sum(axis=0))
        dr_hn = dn * r
        self.wh_n.add_grad(dr_hn.T @ h)
        self.bh_n.add_grad(dr_hn.sum(axis=0))
        gh_prev = gh_prev + dr_hn @ self.wh_n.value
        gr = dn * hn
        d_r = gr * r * (1.0 - r)
        d_z = gz * z * (1.0 - z)
        drz = np.concatenate([d_r, d_z], axis=1)
        self.wx_rz.add_grad(drz.T @ x)
        self.wh_rz.add_grad(drz.T @ h)
        self.b_rz.add_grad(drz.sum(axis=0))
        gx = dn @ self.wx_n.value + drz @ self.wx_rz.value
        gh_prev = gh_prev + drz @ self.wh_rz.value
        return gx, gh_prev, None


class RecurrentNet(Module):
    def __init__(self, kind: str, d_in: int, d_hidden: int, rng, dtype=np.float32):
        cell_cls = {"lstm": LSTMCell, "gru": GRUCell}[kind]
        self.kind = kind
        self.cell = cell_cls(d_in, d_hidden, rng, dtype)
        self.head = Linear(d_hidden, d_in, rng, dtype)
        self.d_hidden = d_hidden

    def forward(self, seq: np.ndarray, train: bool = False) -> np.ndarray:
        """seq [B, W, D] -> prediction [B, D]."""
        b = seq.shape[0]
        dt = self.head.weight.value.dtype
        h = np.zeros((b, self.d_hidden), dtype=dt)
        c = np.zeros((b, self.d_hidden), dtype=dt)
        caches = []
        for w in range(seq.shape[1]):
            h, c, cache = self.cell.forward(seq[:, w].astype(dt), h, c)
            caches.append(cache)
        if train:
            self._caches = caches
        return self.head.forward(h, train)

    def backward(self, gy: np.ndarray):
        gh = self.head.backward(gy)
        gc = np.zeros_like(gh)
        for cache in reversed(self._caches):
            _, gh, gc_prev = self.cell.backward(cache, gh, gc)
            gc = gc_prev if gc_prev is not None else np.zeros_like(gh)
        self._caches = None


class RecurrentPredictor(Predictor):
    """Sequence-to-one regressor over flattened normalized fingerprints."""

    def __init__(self, kind: str, fingerprint_shape, window: int = 8,
                 hidden_size: int = 192, include_current: bool = False,
                 norm_mode="per_sample", dataset_meta=None, init_seed: int = 0,
                 net: RecurrentNet | None = None, dtype=np.float32):
        if kind not in ("lstm", "gru"):
            raise ValueError(f"recurrent kind must be 'lstm' or 'gru', got {kind!r}")
        super().__init__(fingerprint_shape, norm_mode, dataset_meta)
        self.kind = kind
        self.window = window
        self.hidden_size = hidden_size
        self.include_current = include_current
        self.init_seed = init_seed
        d_in = 2 * fingerprint_shape[0] * fingerprint_shape[1]
        self.net = net if net is not None else RecurrentNet(
            kind, d_in, hidden_size, np.random.default_rng(init_seed), dtype)

    def min_window(self) -> int:
        return self.window + 1

    def _input_frames(self, planes: np.ndarray) -> np.ndarray:
        """Select the W model inputs from [N, W+1, 2, H, W] context planes."""
        return planes[:, 1:] if self.include_current else planes[:, :-1]

    @classmethod
    def train(cls, bundle: DatasetBundle, kind: str, cfg: TrainConfig,
              norm_mode: str = "per_sample") -> "RecurrentPredictor":
        if bundle.n_pairs == 0:
            raise ValueError("cannot train on an empty bundle")
        w = cfg.window
        if bundle.n_pairs < w + 1:
            raise ValueError(f"bundle has {bundle.n_pairs} pairs; need at least "
                             f"window+1 = {w + 1} time-ordered samples")
        dtype = np.float32 if cfg.dtype == "float32" else np.float64
        self = cls(kind, bundle.fingerprint_shape, window=w,
                   hidden_size=cfg.hidden_size, include_current=cfg.include_current,
                   norm_mode=norm_mode,
                   dataset_meta=(dataset_meta([bundle.jack_values, bundle.alice_values])
                                 if norm_mode == "per_dataset" else None),
                   init_seed=cfg.seed, dtype=dtype)
        ordered = bundle.ordered_by_time()
        jack, alice = ordered.jack_values, ordered.alice_values
        n = ordered.n_pairs
        targets = np.arange(w, n)
        rng = np.random.default_rng([cfg.seed, 59])
        opt = Adam(self.net.parameters(), lr=cfg.lr)
        guard = DivergenceGuard()
        window_losses = []
        with blas_single_thread():
            for step in range(cfg.steps):
                ti = targets[rng.integers(0, len(targets), size=cfg.batch_size)]
                ctx = np.stack([jack[i - w:i + 1] for i in ti])  # [B, W+1, A, K]
                ab = alice[ti]
                if cfg.cond_snr_augment is not None:
                    snr = rng.uniform(*cfg.cond_snr_augment)
                    flat = ctx.reshape(-1, *ctx.shape[2:])
                    ctx = add_noise_array(flat, snr, rng).reshape(ctx.shape)
                planes, metas = self._cond_planes_meta(ctx)
                seq = self._input_frames(planes).reshape(len(ti), w, -1)
                target = self._target_planes(ab, metas).reshape(len(ti), -1)

                self.net.zero_grad()
                pred = self.net.forward(seq, train=True)
                resid = pred - target.astype(pred.dtype)
                loss = float(np.mean(resid ** 2))
                if not math.isfinite(loss):
                    raise TrainingFault(f"non-finite {kind} loss", diagnostics={"step": step})
                self.net.backward(2.0 * resid / resid.size)
                opt.step()
                window_losses.append(loss)
                if (step + 1) % cfg.log_every == 0 or step == cfg.steps - 1:
                    mean_loss = float(np.mean(window_losses))
                    window_losses = []
                    self.training_log.append((step + 1, mean_loss))
                    guard.update(mean_loss, self.training_log)
        return self

    def predict_batch(self, windows: np.ndarray, rng_seed: int = 0,
                      chunk: int = 1024) -> np.ndarray:
        windows = self._check_windows(windows)
        windows = windows[:, -(self.window + 1):]
        n = windows.shape[0]
        a, k = self.fingerprint_shape
        out = np.empty((n, a, k), dtype=np.complex128)
        with blas_single_thread():
            for lo in range(0, n, chunk):
                hi = min(lo + chunk, n)
                planes, metas = self._cond_planes_meta(windows[lo:hi])
                seq = self._input_frames(planes).reshape(hi - lo, self.window, -1)
                pred = self.net.forward(seq, train=False)
                out[lo:hi] = self._denorm(pred.reshape(hi - lo, 2, a, k), metas)
        return out

    def _header(self) -> dict:
        h = super()._header()
        h.update({"recurrent_kind": self.kind, "window": self.window,
                  "hidden_size": self.hidden_size,
                  "include_current": self.include_current,
                  "init_seed": self.init_seed,
                  "dtype": str(self.net.head.weight.value.dtype)})
        return h

    def _state(self) -> dict:
        return self.net.state_dict()

    @classmethod
    def from_checkpoint(cls, header: dict, state: dict) -> "RecurrentPredictor":
        self = cls(header["recurrent_kind"], tuple(header["fingerprint_shape"]),
                   window=header["window"], hidden_size=header["hidden_size"],
                   include_current=header["include_current"],
                   norm_mode=header["norm_mode"], dataset_meta=meta_from_header(header),
                   init_seed=header["init_seed"],
                   dtype=np.dtype(header.get("dtype", "float32")).type)
        self.net.load_state_dict(state)
        self.training_log = [tuple(x) for x in header.get("training_log", [])]
        return self
