"""Denoising-diffusion machinery: schedules, forward noising, loss, sampling.

The model is trained to predict the injected noise:

    L = E_{x0, cond, eps, t} || eps - model(x_t, t, cond) ||^2,
    x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps.

Sampling uses the deterministic DDIM update on a strided timestep
subsequence; ``eta`` interpolates toward ancestral sampling (eta=1 on the
full schedule reproduces it).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import TrainingFault


@dataclass
class DiffusionSchedule:
    """Per-step noise coefficients beta_t, alpha_t and their running product."""

    t_train: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    schedule_kind: str

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=np.float64)
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        self.alpha_bar = np.asarray(self.alpha_bar, dtype=np.float64)
        if len(self.beta) != self.t_train:
            raise ValueError("beta length must equal t_train")
        if np.any(self.beta <= 0) or np.any(self.beta >= 1):
            raise ValueError("every beta_t must lie in (0, 1)")
        if np.any(np.diff(self.alpha_bar) >= 0):
            raise ValueError("alpha_bar must be strictly decreasing")
        if self.alpha_bar[0] > 1.0 or self.alpha_bar[-1] <= 0.0:
            raise ValueError("alpha_bar must stay in (0, 1]")

    def alpha_bar_at(self, t) -> np.ndarray:
        """alpha_bar for 1-based step indices; t=0 maps to 1 (no noise)."""
        t = np.asarray(t, dtype=np.int64)
        if np.any(t < 0) or np.any(t > self.t_train):
            raise ValueError(f"t out of range [0, {self.t_train}]")
        out = np.where(t > 0, self.alpha_bar[np.maximum(t, 1) - 1], 1.0)
        return out

    def to_dict(self) -> dict:
        return {"t_train": self.t_train, "schedule_kind": self.schedule_kind,
                "beta": self.beta.tolist()}

    @staticmethod
    def from_dict(d: dict) -> "DiffusionSchedule":
        beta = np.asarray(d["beta"], dtype=np.float64)
        alpha = 1.0 - beta
        return DiffusionSchedule(d["t_train"], beta, alpha, np.cumprod(alpha),
                                 d["schedule_kind"])


def build_schedule(kind: str = "linear", t_train: int = 1000,
                   beta_start: float = 1e-4, beta_end: float = 0.02) -> DiffusionSchedule:
    """Construct a noise schedule; ``kind`` is 'linear' or 'cosine'."""
    if t_train < 1:
        raise ValueError("t_train must be >= 1")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ValueError(f"need 0 < beta_start <= beta_end < 1, "
                         f"got ({beta_start}, {beta_end})")
    if kind == "linear":
        beta = np.linspace(beta_start, beta_end, t_train)
    elif kind == "cosine":
        s = 0.008
        steps = np.arange(t_train + 1) / t_train
        f = np.cos((steps + s) / (1 + s) * math.pi / 2.0) ** 2
        abar = f / f[0]
        beta = np.clip(1.0 - abar[1:] / abar[:-1], 1e-8, 0.999)
    else:
        raise ValueError(f"unknown schedule kind {kind!r}")
    alpha = 1.0 - beta
    return DiffusionSchedule(t_train, beta, alpha, np.cumprod(alpha), kind)


def forward_diffuse(x0: np.ndarray, t: np.ndarray, eps: np.ndarray,
                    sched: DiffusionSchedule) -> np.ndarray:
    """Closed-form forward marginal x_t for 1-based steps ``t`` (per sample)."""
    t = np.asarray(t)
    if np.any(t < 1) or np.any(t > sched.t_train):
        raise ValueError(f"t must lie in [1, {sched.t_train}]")
    ab = sched.alpha_bar_at(t).reshape((-1,) + (1,) * (x0.ndim - 1))
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def diffusion_loss(model, x0: np.ndarray, cond: np.ndarray, t: np.ndarray,
                   eps: np.ndarray, sched: DiffusionSchedule,
                   train: bool = False) -> float:
    """Noise-prediction MSE for fixed (t, eps); backprops when ``train``."""
    x_t = forward_diffuse(x0, t, eps, sched)
    pred = model.forward(x_t, t, cond, train=train)
    resid = pred - eps.astype(pred.dtype)
    loss = float(np.mean(resid ** 2))
    if not math.isfinite(loss):
        raise TrainingFault("non-finite diffusion loss", diagnostics={
            "t": np.asarray(t).tolist(),
            "batch_abs_max": float(np.max(np.abs(x0))),
            "pred_abs_max": float(np.max(np.abs(pred))),
        })
    if train:
        model.backward(2.0 * resid / resid.size)
    return loss


def loss_step(model, x0: np.ndarray, cond: np.ndarray, sched: DiffusionSchedule,
              rng: np.random.Generator, train: bool = False) -> float:
    """One training objective evaluation with freshly drawn (t, eps)."""
    b = x0.shape[0]
    t = rng.integers(1, sched.t_train + 1, size=b)
    eps = rng.standard_normal(x0.shape)
    return diffusion_loss(model, x0, cond, t, eps, sched, train=train)


def ddim_timesteps(t_train: int, steps: int) -> np.ndarray:
    """Descending 1-based timestep subsequence from T down to 1."""
    if not 1 <= steps <= t_train:
        raise ValueError(f"steps must lie in [1, {t_train}], got {steps}")
    taus = np.unique(np.round(np.linspace(t_train, 1, steps)).astype(np.int64))[::-1]
    return taus


def ddim_sample(eps_fn, shape: tuple, sched: DiffusionSchedule, steps: int = 20,
                eta: float = 0.0, rng: np.random.Generator | None = None,
                init_noise: np.ndarray | None = None, cond=None,
                clip_x0: float | None = None) -> np.ndarray:
    """Deterministic (eta=0) or stochastic DDIM sampling.

    ``eps_fn(x_t, t_batch, cond)`` predicts the injected noise.  With
    ``eta=1`` and ``steps == t_train`` the update reduces to ancestral
    DDPM sampling.

    ``clip_x0`` bounds the per-step clean-sample estimate.  Early steps
    amplify noise-prediction error by 1/sqrt(alpha_bar) (over 100x at the
    start of a long schedule); clamping to the known data range keeps the
    trajectory on-distribution.  The effective noise estimate is recomputed
    from the clamped value so the update stays self-consistent.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    if init_noise is None:
        if rng is None:
            raise ValueError("provide init_noise or rng")
        x = rng.standard_normal(shape)
    else:
        x = np.array(init_noise, copy=True)
        if x.shape != tuple(shape):
            raise ValueError(f"init_noise shape {x.shape} != {tuple(shape)}")
    taus = ddim_timesteps(sched.t_train, steps)
    b = shape[0]
    for i, t in enumerate(taus):
        t_prev = int(taus[i + 1]) if i + 1 < len(taus) else 0
        ab_t = float(sched.alpha_bar_at(int(t)))
        ab_prev = float(sched.alpha_bar_at(t_prev))
        eps = eps_fn(x, np.full(b, t, dtype=np.int64), cond)
        x0_pred = (x - math.sqrt(1.0 - ab_t) * eps) / math.sqrt(ab_t)
        if clip_x0 is not None:
            x0_pred = np.clip(x0_pred, -clip_x0, clip_x0)
            eps = (x - math.sqrt(ab_t) * x0_pred) / math.sqrt(1.0 - ab_t)
        sigma = 0.0
        if eta > 0.0 and t_prev > 0:
            sigma = (eta * math.sqrt((1.0 - ab_prev) / (1.0 - ab_t))
                     * math.sqrt(1.0 - ab_t / ab_prev))
        dir_coeff = math.sqrt(max(1.0 - ab_prev - sigma ** 2, 0.0))
        x = math.sqrt(ab_prev) * x0_pred + dir_coeff * eps
        if sigma > 0.0:
            if rng is None:
                raise ValueError("eta > 0 requires an rng for the noise term")
            x = x + sigma * rng.standard_normal(shape)
    return x
