"""Dual-branch conditional U-Net noise predictor.

A noisy-target branch and a condition branch run mirrored encoders; the
condition features are fused into the target stream by cross-attention at
every resolution level and in the bottleneck (which also carries
self-attention).  Timesteps enter through a sinusoidal embedding projected
into every target-branch residual block.
"""

from __future__ import annotations

import numpy as np

from .config import DenoiserSpec
from .nn.modules import (AttentionBlock2d, AvgPool2, Conv2d, GroupNorm, Linear,
                         Module, SiLU, TimeEmbedding, UpNearest2)


class ResBlock(Module):
    """GroupNorm-SiLU-Conv twice, residual skip, optional timestep injection."""

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator,
                 temb_dim: int | None = None, dtype=np.float32):
        self.norm1 = GroupNorm(c_in, dtype=dtype)
        self.act1 = SiLU()
        self.conv1 = Conv2d(c_in, c_out, 3, rng, dtype)
        self.temb_proj = Linear(temb_dim, c_out, rng, dtype) if temb_dim else None
        self.temb_act = SiLU()
        self.norm2 = GroupNorm(c_out, dtype=dtype)
        self.act2 = SiLU()
        self.conv2 = Conv2d(c_out, c_out, 3, rng, dtype)
        self.skip = Conv2d(c_in, c_out, 1, rng, dtype) if c_in != c_out else None

    def forward(self, x: np.ndarray, temb: np.ndarray | None = None,
                train: bool = False) -> np.ndarray:
        h = self.conv1.forward(self.act1.forward(self.norm1.forward(x, train), train), train)
        if self.temb_proj is not None:
            add = self.temb_proj.forward(self.temb_act.forward(temb, train), train)
            h = h + add[:, :, None, None]
        h = self.conv2.forward(self.act2.forward(self.norm2.forward(h, train), train), train)
        s = self.skip.forward(x, train) if self.skip is not None else x
        return s + h

    def backward(self, gy: np.ndarray):
        g = self.norm2.backward(self.act2.backward(self.conv2.backward(gy)))
        gtemb = None
        if self.temb_proj is not None:
            gt = self.temb_proj.backward(g.sum(axis=(2, 3)))
            gtemb = self.temb_act.backward(gt)
        g = self.norm1.backward(self.act1.backward(self.conv1.backward(g)))
        gs = self.skip.backward(gy) if self.skip is not None else gy
        return g + gs, gtemb


class ConditionalUNet(Module):
    """Noise predictor eps(x_t, t, cond) over two-plane fingerprint images.

    The condition enters twice: channel-concatenated with the noisy target
    at the input (pixel-aligned, so the spatially structured jack-to-alice
    map is directly visible), and through the mirrored condition branch
    whose features fuse in by cross-attention.
    """

    def __init__(self, spec: DenoiserSpec, rng: np.random.Generator | int = 0,
                 in_channels: int = 2, dtype=np.float32):
        if isinstance(rng, (int, np.integer)):
            rng = np.random.default_rng(rng)
        self.spec = spec
        self.dtype = np.dtype(dtype).type
        levels = spec.n_layers
        base = spec.base_channels
        ch = [base * (2 ** l) for l in range(levels)]
        self.channels = ch
        n = spec.blocks_per_layer
        temb_dim = spec.time_embed_dim

        self.time_embed = TimeEmbedding(temb_dim, rng, dtype)

        self.cond_in = Conv2d(in_channels, ch[0], 3, rng, dtype)
        self.cond_blocks = []
        self.cond_pools = []
        for l in range(levels):
            c_prev = ch[0] if l == 0 else ch[l - 1]
            blocks = [ResBlock(c_prev if i == 0 else ch[l], ch[l], rng, None, dtype)
                      for i in range(n)]
            self.cond_blocks.append(blocks)
            if l < levels - 1:
                self.cond_pools.append(AvgPool2())

        self.conv_in = Conv2d(2 * in_channels, ch[0], 3, rng, dtype)
        self.enc_blocks = []
        self.enc_xattn = []
        self.pools = []
        for l in range(levels):
            c_prev = ch[0] if l == 0 else ch[l - 1]
            blocks = [ResBlock(c_prev if i == 0 else ch[l], ch[l], rng, temb_dim, dtype)
                      for i in range(n)]
            self.enc_blocks.append(blocks)
            self.enc_xattn.append(
                AttentionBlock2d(ch[l], rng, cross=True, dtype=dtype)
                if l >= spec.attn_min_level else None)
            if l < levels - 1:
                self.pools.append(AvgPool2())

        top = ch[-1]
        self.mid1 = ResBlock(top, top, rng, temb_dim, dtype)
        self.mid_self = AttentionBlock2d(top, rng, cross=False, dtype=dtype)
        self.mid_cross = AttentionBlock2d(top, rng, cross=True, dtype=dtype)
        self.mid2 = ResBlock(top, top, rng, temb_dim, dtype)

        self.dec_blocks = []
        self.ups = []
        for l in range(levels):
            d_ch = ch[-1] if l == levels - 1 else ch[l + 1]
            blocks = [ResBlock(d_ch + ch[l] if i == 0 else ch[l], ch[l], rng, temb_dim, dtype)
                      for i in range(n)]
            self.dec_blocks.append(blocks)
            if l > 0:
                self.ups.append(UpNearest2())
            else:
                self.ups.append(None)

        self.out_norm = GroupNorm(ch[0], dtype=dtype)
        self.out_act = SiLU()
        self.conv_out = Conv2d(ch[0], in_channels, 3, rng, dtype, zero_init=True)

    def cond_features(self, cond: np.ndarray, train: bool = False) -> list[np.ndarray]:
        """Condition-branch feature pyramid; constant across sampler steps."""
        cond = np.ascontiguousarray(cond, dtype=self.dtype)
        c = self.cond_in.forward(cond, train)
        c_feats = []
        for l in range(self.spec.n_layers):
            for blk in self.cond_blocks[l]:
                c = blk.forward(c, None, train)
            c_feats.append(c)
            if l < self.spec.n_layers - 1:
                c = self.cond_pools[l].forward(c, train)
        return c_feats

    def forward(self, x: np.ndarray, t: np.ndarray, cond: np.ndarray,
                train: bool = False, cond_feats: list[np.ndarray] | None = None
                ) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=self.dtype)
        cond = np.ascontiguousarray(cond, dtype=self.dtype)
        levels = self.spec.n_layers
        temb = self.time_embed.forward(t, train)
        if cond_feats is None:
            c_feats = self.cond_features(cond, train)
        else:
            if train:
                raise ValueError("precomputed cond_feats are inference-only")
            c_feats = cond_feats

        h = self.conv_in.forward(np.concatenate([x, cond], axis=1), train)
        skips = []
        for l in range(levels):
            for blk in self.enc_blocks[l]:
                h = blk.forward(h, temb, train)
            if self.enc_xattn[l] is not None:
                h = self.enc_xattn[l].forward(h, c_feats[l], train)
            skips.append(h)
            if l < levels - 1:
                h = self.pools[l].forward(h, train)

        h = self.mid1.forward(h, temb, train)
        h = self.mid_self.forward(h, train=train)
        h = self.mid_cross.forward(h, c_feats[-1], train)
        h = self.mid2.forward(h, temb, train)

        for l in range(levels - 1, -1, -1):
            h = np.concatenate([h, skips[l]], axis=1)
            for blk in self.dec_blocks[l]:
                h = blk.forward(h, temb, train)
            if l > 0:
                h = self.ups[l].forward(h, train)

        h = self.out_act.forward(self.out_norm.forward(h, train), train)
        return self.conv_out.forward(h, train)

    def backward(self, gy: np.ndarray) -> np.ndarray:
        levels = self.spec.n_layers
        ch = self.channels
        g = self.out_norm.backward(self.out_act.backward(self.conv_out.backward(gy)))
        gtemb = None

        def add_temb(gt):
            nonlocal gtemb
            if gt is not None:
                gtemb = gt if gtemb is None else gtemb + gt

        gskips = [None] * levels
        for l in range(levels):
            for blk in reversed(self.dec_blocks[l]):
                g, gt = blk.backward(g)
                add_temb(gt)
            d_ch = ch[-1] if l == levels - 1 else ch[l + 1]
            gskips[l] = g[:, d_ch:]
            g = np.ascontiguousarray(g[:, :d_ch])
            if l < levels - 1:
                g = self.ups[l + 1].backward(g)

        gc = [None] * levels

        def add_gc(l, arr):
            gc[l] = arr if gc[l] is None else gc[l] + arr

        g, gt = self.mid2.backward(g)
        add_temb(gt)
        g, gctx = self.mid_cross.backward(g)
        add_gc(levels - 1, gctx)
        g, _ = self.mid_self.backward(g)
        g, gt = self.mid1.backward(g)
        add_temb(gt)

        for l in range(levels - 1, -1, -1):
            g = g + gskips[l]
            if self.enc_xattn[l] is not None:
                g, gctx = self.enc_xattn[l].backward(g)
                add_gc(l, gctx)
            for blk in reversed(self.enc_blocks[l]):
                g, gt = blk.backward(g)
                add_temb(gt)
            if l > 0:
                g = self.pools[l - 1].backward(g)
        gx = self.conv_in.backward(g)[:, :gy.shape[1]]

        gfeat = gc[levels - 1]
        for l in range(levels - 1, -1, -1):
            if l < levels - 1 and gc[l] is not None:
                gfeat = gfeat + gc[l]
            for blk in reversed(self.cond_blocks[l]):
                gfeat, _ = blk.backward(gfeat)
            if l > 0:
                gfeat = self.cond_pools[l - 1].backward(gfeat)
        self.cond_in.backward(gfeat)

        self.time_embed.backward(gtemb)
        return gx
