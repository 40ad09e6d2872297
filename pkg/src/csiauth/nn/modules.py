"""Minimal neural-network layers with explicit forward/backward passes.

Every layer implements ``forward(x, ..., train=False)`` and, when ``train``
was set, ``backward(gy)`` consuming the cached activations.  Parameter
gradients accumulate into ``Param.grad``.  Inference (``train=False``) never
mutates layer state, so a loaded model can serve concurrent callers.

Array layout is ``[B, C, H, W]`` for feature maps and ``[B, N, C]`` for
attention tokens.  Convolutions route through the selected kernel backend
(compiled or numpy).
"""

from __future__ import annotations

import math

import numpy as np

from . import backend


class Param:
    """A trainable array plus its accumulated gradient."""

    __slots__ = ("value", "grad")

    def __init__(self, value: np.ndarray):
        self.value = value
        self.grad = None

    def add_grad(self, g: np.ndarray):
        if self.grad is None:
            self.grad = g.astype(self.value.dtype, copy=True)
        else:
            self.grad += g

    @property
    def shape(self):
        return self.value.shape


class Module:
    """Base class: parameter discovery, grad reset, state dict round trip."""

    def named_parameters(self, prefix: str = ""):
        for name, attr in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(attr, Param):
                yield full, attr
            elif isinstance(attr, Module):
                yield from attr.named_parameters(f"{full}.")
            elif isinstance(attr, (list, tuple)):
                for i, item in enumerate(attr):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")
                    elif isinstance(item, Param):
                        yield f"{full}.{i}", item

    def parameters(self) -> list[Param]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.value.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise KeyError(f"state dict mismatch: missing={sorted(missing)} "
                           f"unexpected={sorted(extra)}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=p.value.dtype)
            if arr.shape != p.value.shape:
                raise ValueError(f"parameter {name}: shape {arr.shape} != {p.value.shape}")
            p.value = arr.copy()

    def n_parameters(self) -> int:
        return sum(p.value.size for p in self.parameters())


def norm_groups(channels: int, max_groups: int = 8) -> int:
    g = min(max_groups, channels)
    while channels % g:
        g -= 1
    return g


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator,
                 dtype=np.float32, scale: float | None = None):
        std = scale if scale is not None else math.sqrt(1.0 / n_in)
        self.weight = Param((rng.standard_normal((n_out, n_in)) * std).astype(dtype))
        self.bias = Param(np.zeros(n_out, dtype=dtype))
        self._cache = None

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        y = x @ self.weight.value.T + self.bias.value
        if train:
            self._cache = x
        return y

    def backward(self, gy: np.ndarray) -> np.ndarray:
        x = self._cache
        self._cache = None
        flat_x = x.reshape(-1, x.shape[-1])
        flat_g = gy.reshape(-1, gy.shape[-1])
        self.weight.add_grad(flat_g.T @ flat_x)
        self.bias.add_grad(flat_g.sum(axis=0))
        return gy @ self.weight.value


class Conv2d(Module):
    """3x3 (or 1x1) same-padding convolution, stride 1."""

    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator,
                 dtype=np.float32, zero_init: bool = False):
        self.kernel = kernel
        self.pad = kernel // 2
        std = math.sqrt(2.0 / (c_in * kernel * kernel))
        w = rng.standard_normal((c_out, c_in, kernel, kernel)) * std
        if zero_init:
            w = np.zeros_like(w)
        self.weight = Param(w.astype(dtype))
        self.bias = Param(np.zeros(c_out, dtype=dtype))
        self._cache = None

    def _padded(self, x, pad):
        if pad == 0:
            return x
        return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        xpad = self._padded(x, self.pad)
        y = backend.conv2d_valid(xpad, self.weight.value, self.bias.value)
        if train:
            self._cache = xpad
        return y

    def backward(self, gy: np.ndarray) -> np.ndarray:
        xpad = self._cache
        self._cache = None
        gy = np.ascontiguousarray(gy)
        self.weight.add_grad(
            backend.conv2d_grad_weight(xpad, gy, self.kernel, self.kernel))
        self.bias.add_grad(gy.sum(axis=(0, 2, 3)))
        # input gradient = valid conv of re-padded gy with the rotated kernel
        w_rot = np.ascontiguousarray(
            self.weight.value[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
        gpad = self._padded(gy, self.kernel - 1 - self.pad)
        gx = backend.conv2d_valid(gpad, w_rot, None)
        if self.pad == 0 and self.kernel > 1:
            return gx
        return gx


class GroupNorm(Module):
    def __init__(self, channels: int, rng: np.random.Generator | None = None,
                 groups: int | None = None, eps: float = 1e-5, dtype=np.float32):
        self.groups = groups if groups is not None else norm_groups(channels)
        self.eps = eps
        self.gamma = Param(np.ones(channels, dtype=dtype))
        self.beta = Param(np.zeros(channels, dtype=dtype))
        self._cache = None

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        b, c, h, w = x.shape
        g = self.groups
        xg = x.reshape(b, g, -1)
        mu = xg.mean(axis=2, keepdims=True)
        var = xg.var(axis=2, keepdims=True)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = ((xg - mu) * inv).reshape(b, c, h, w)
        y = xhat * self.gamma.value[None, :, None, None] + self.beta.value[None, :, None, None]
        if train:
            self._cache = (xhat, inv)
        return y

    def backward(self, gy: np.ndarray) -> np.ndarray:
        xhat, inv = self._cache
        self._cache = None
        b, c, h, w = gy.shape
        g = self.groups
        self.gamma.add_grad((gy * xhat).sum(axis=(0, 2, 3)))
        self.beta.add_grad(gy.sum(axis=(0, 2, 3)))
        gxhat = (gy * self.gamma.value[None, :, None, None]).reshape(b, g, -1)
        xhat_g = xhat.reshape(b, g, -1)
        m1 = gxhat.mean(axis=2, keepdims=True)
        m2 = (gxhat * xhat_g).mean(axis=2, keepdims=True)
        gx = (gxhat - m1 - xhat_g * m2) * inv
        return gx.reshape(b, c, h, w)


class SiLU(Module):
    def __init__(self):
        self._cache = None

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        s = 1.0 / (1.0 + np.exp(-x))
        if train:
            self._cache = (x, s)
        return x * s

    def backward(self, gy: np.ndarray) -> np.ndarray:
        x, s = self._cache
        self._cache = None
        return gy * s * (1.0 + x * (1.0 - s))


class AvgPool2(Module):
    """2x2 average pooling; feature dims must be even."""

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        b, c, h, w = x.shape
        if h % 2 or w % 2:
            raise ValueError(f"AvgPool2 needs even spatial dims, got {h}x{w}")
        return x.reshape(b, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))

    def backward(self, gy: np.ndarray) -> np.ndarray:
        g = np.repeat(np.repeat(gy, 2, axis=2), 2, axis=3)
        return g * 0.25


class UpNearest2(Module):
    """2x nearest-neighbour upsampling."""

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        return np.repeat(np.repeat(x, 2, axis=2), 2, axis=3)

    def backward(self, gy: np.ndarray) -> np.ndarray:
        b, c, h, w = gy.shape
        return gy.reshape(b, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))


def softmax_last(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class Attention(Module):
    """Single-head scaled dot-product attention over token sequences.

    Query tokens come from ``x``; keys/values from ``ctx`` (cross-attention)
    or from ``x`` itself when ``ctx`` is None (self-attention).
    """

    def __init__(self, dim: int, rng: np.random.Generator, dtype=np.float32):
        std = math.sqrt(1.0 / dim)
        self.wq = Param((rng.standard_normal((dim, dim)) * std).astype(dtype))
        self.wk = Param((rng.standard_normal((dim, dim)) * std).astype(dtype))
        self.wv = Param((rng.standard_normal((dim, dim)) * std).astype(dtype))
        self.wo = Param(np.zeros((dim, dim), dtype=dtype))  # residual-friendly
        self.scale = 1.0 / math.sqrt(dim)
        self._cache = None

    @staticmethod
    def _outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """sum_bn a[b,n,:] (x) b[b,n,:] -> [C, D] via one gemm."""
        c = a.shape[-1]
        return a.reshape(-1, c).T @ b.reshape(-1, b.shape[-1])

    @staticmethod
    def _proj(x: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Token projection as one flat gemm (numpy would loop the batch)."""
        return (x.reshape(-1, x.shape[-1]) @ w.T).reshape(x.shape[:-1] + (w.shape[0],))

    def forward(self, x: np.ndarray, ctx: np.ndarray | None = None,
                train: bool = False) -> np.ndarray:
        kv = x if ctx is None else ctx
        q = self._proj(x, self.wq.value)
        k = self._proj(kv, self.wk.value)
        v = self._proj(kv, self.wv.value)
        p = softmax_last(q @ k.transpose(0, 2, 1) * self.scale)
        o = p @ v
        y = self._proj(o, self.wo.value)
        if train:
            self._cache = (x, kv, ctx is None, q, k, v, p, o)
        return y

    def backward(self, gy: np.ndarray):
        x, kv, is_self, q, k, v, p, o = self._cache
        self._cache = None
        go = self._proj(gy, self.wo.value.T)
        self.wo.add_grad(self._outer(gy, o))
        dp = go @ v.transpose(0, 2, 1)
        dv = p.transpose(0, 2, 1) @ go
        ds = (dp - (dp * p).sum(axis=-1, keepdims=True)) * p * self.scale
        dq = ds @ k
        dk = ds.transpose(0, 2, 1) @ q
        self.wq.add_grad(self._outer(dq, x))
        self.wk.add_grad(self._outer(dk, kv))
        self.wv.add_grad(self._outer(dv, kv))
        gx = self._proj(dq, self.wq.value.T)
        gkv = self._proj(dk, self.wk.value.T) + self._proj(dv, self.wv.value.T)
        if is_self:
            return gx + gkv, None
        return gx, gkv


class AttentionBlock2d(Module):
    """Normalized residual attention over flattened feature-map pixels."""

    def __init__(self, channels: int, rng: np.random.Generator,
                 cross: bool = False, dtype=np.float32):
        self.cross = cross
        self.norm = GroupNorm(channels, dtype=dtype)
        self.norm_ctx = GroupNorm(channels, dtype=dtype) if cross else None
        self.attn = Attention(channels, rng, dtype=dtype)
        self._shape = None

    @staticmethod
    def _tokens(x):
        b, c, h, w = x.shape
        return np.ascontiguousarray(x.reshape(b, c, h * w).transpose(0, 2, 1))

    @staticmethod
    def _maps(tok, shape):
        b, c, h, w = shape
        return np.ascontiguousarray(tok.transpose(0, 2, 1).reshape(b, c, h, w))

    def forward(self, x: np.ndarray, ctx: np.ndarray | None = None,
                train: bool = False) -> np.ndarray:
        if self.cross and ctx is None:
            raise ValueError("cross-attention block requires a context")
        self._shape = x.shape if train else self._shape
        xn = self.norm.forward(x, train)
        tok = self._tokens(xn)
        ctx_tok = None
        if self.cross:
            self._ctx_shape = ctx.shape if train else None
            cn = self.norm_ctx.forward(ctx, train)
            ctx_tok = self._tokens(cn)
        y = self.attn.forward(tok, ctx_tok, train)
        return x + self._maps(y, x.shape)

    def backward(self, gy: np.ndarray):
        gtok = self._tokens(gy)
        gx_tok, gctx_tok = self.attn.backward(gtok)
        gx = self.norm.backward(self._maps(gx_tok, self._shape)) + gy
        gctx = None
        if self.cross:
            gctx = self.norm_ctx.backward(self._maps(gctx_tok, self._ctx_shape))
        return gx, gctx


def sinusoidal_embedding(t: np.ndarray, dim: int, max_period: float = 10000.0,
                         dtype=np.float32) -> np.ndarray:
    """Standard transformer-style timestep encoding, shape [B, dim]."""
    half = dim // 2
    freqs = np.exp(-math.log(max_period) * np.arange(half) / half)
    ang = np.asarray(t, dtype=np.float64)[:, None] * freqs[None, :]
    return np.concatenate([np.cos(ang), np.sin(ang)], axis=1).astype(dtype)


class TimeEmbedding(Module):
    """Sinusoidal encoding followed by a two-layer MLP."""

    def __init__(self, dim: int, rng: np.random.Generator, dtype=np.float32):
        self.dim = dim
        self.fc1 = Linear(dim, dim, rng, dtype)
        self.act = SiLU()
        self.fc2 = Linear(dim, dim, rng, dtype)
        self.dtype = dtype

    def forward(self, t: np.ndarray, train: bool = False) -> np.ndarray:
        enc = sinusoidal_embedding(t, self.dim, dtype=self.dtype)
        return self.fc2.forward(self.act.forward(self.fc1.forward(enc, train), train), train)

    def backward(self, gy: np.ndarray):
        self.fc1.backward(self.act.backward(self.fc2.backward(gy)))
