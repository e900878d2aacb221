"""Miniature conditional U-net whose cross-attention layers follow the registry."""
from __future__ import annotations

import math

import numpy as np

from .. import tensor as T
from ..nn import Params
from ..tensor import Tensor
from .config import UNetConfig


def timestep_features(t: np.ndarray, dim: int) -> np.ndarray:
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / half)
    ang = np.asarray(t, dtype=np.float64)[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


class ResBlock:
    def __init__(self, p: Params, name: str, cin: int, cout: int, tdim: int, groups: int):
        self.groups = groups
        self.n1w, self.n1b = p.new(f"{name}.norm1.w", (cin,), "ones"), p.new(f"{name}.norm1.b", (cin,), "zeros")
        self.c1w, self.c1b = p.new(f"{name}.conv1.w", (cout, cin, 3, 3)), p.new(f"{name}.conv1.b", (cout,), "zeros")
        self.tw, self.tb = p.new(f"{name}.temb.w", (tdim, cout)), p.new(f"{name}.temb.b", (cout,), "zeros")
        self.n2w, self.n2b = p.new(f"{name}.norm2.w", (cout,), "ones"), p.new(f"{name}.norm2.b", (cout,), "zeros")
        self.c2w = p.new(f"{name}.conv2.w", (cout, cout, 3, 3), std=0.3 / math.sqrt(cout * 9))
        self.c2b = p.new(f"{name}.conv2.b", (cout,), "zeros")
        self.skip = None
        if cin != cout:
            self.skip = p.new(f"{name}.skip.w", (cout, cin, 1, 1))

    def __call__(self, x: Tensor, temb: Tensor) -> Tensor:
        n, _, h, w = x.shape
        y = T.conv2d(T.silu(T.group_norm(x, self.groups, self.n1w, self.n1b)), self.c1w, self.c1b)
        c = y.shape[1]
        tt = T.reshape(T.linear(temb, self.tw, self.tb), (n, c, 1, 1))
        y = T.add(y, T.expand(tt, (n, c, h, w)))
        y = T.conv2d(T.silu(T.group_norm(y, self.groups, self.n2w, self.n2b)), self.c2w, self.c2b)
        return T.add(x if self.skip is None else T.conv2d(x, self.skip), y)


class CrossAttention:
    """Image features attend over an encoded prompt (one registry layer)."""

    def __init__(self, p: Params, name: str, ch: int, ctx_dim: int, inner: int, heads: int, groups: int):
        self.heads = heads
        self.groups = groups
        self.nw, self.nb = p.new(f"{name}.norm.w", (ch,), "ones"), p.new(f"{name}.norm.b", (ch,), "zeros")
        self.wq = p.new(f"{name}.to_q", (ch, inner))
        self.wk = p.new(f"{name}.to_k", (ctx_dim, inner))
        self.wv = p.new(f"{name}.to_v", (ctx_dim, inner))
        self.wo = p.new(f"{name}.to_out.w", (inner, ch), std=0.3 / math.sqrt(inner))
        self.bo = p.new(f"{name}.to_out.b", (ch,), "zeros")

    def __call__(self, x: Tensor, ctx: Tensor, mask: np.ndarray, hook=None) -> Tensor:
        n, c, h, w = x.shape
        L = ctx.shape[1]
        hd = self.heads
        tok = T.transpose(T.reshape(T.group_norm(x, self.groups, self.nw, self.nb), (n, c, h * w)), (0, 2, 1))
        q, k, v = T.linear(tok, self.wq), T.linear(ctx, self.wk), T.linear(ctx, self.wv)
        if hd > 1:
            dh = q.shape[-1] // hd

            def split(t, s):
                return T.reshape(T.transpose(T.reshape(t, (n, s, hd, dh)), (0, 2, 1, 3)), (n * hd, s, dh))

            q, k, v = split(q, h * w), split(k, L), split(v, L)
            mask = np.repeat(mask, hd, axis=0)
        o = T.attention(q, k, v, key_mask=mask, hook=hook)
        if hd > 1:
            o = T.reshape(T.transpose(T.reshape(o, (n, hd, h * w, dh)), (0, 2, 1, 3)), (n, h * w, hd * dh))
        o = T.linear(o, self.wo, self.bo)
        return T.add(x, T.reshape(T.transpose(o, (0, 2, 1)), (n, c, h, w)))


class UNet:
    def __init__(self, cfg: UNetConfig, params: Params):
        self.cfg = cfg
        p, g = params, cfg.groups
        td = cfg.time_dim
        self.t1w, self.t1b = p.new("unet.time.w1", (td, td)), p.new("unet.time.b1", (td,), "zeros")
        self.t2w, self.t2b = p.new("unet.time.w2", (td, td)), p.new("unet.time.b2", (td,), "zeros")
        c0 = cfg.levels[0].width
        self.cin_w, self.cin_b = p.new("unet.conv_in.w", (c0, cfg.channels, 3, 3)), p.new("unet.conv_in.b", (c0,), "zeros")

        def attn(name, ch):
            return CrossAttention(p, name, ch, cfg.text_dim, cfg.attn_dim, cfg.attn_heads, g)

        self.down = []
        ch = c0
        for li, lvl in enumerate(cfg.levels):
            blocks = []
            for j in range(lvl.n_down):
                name = f"unet.down{li}.{j}"
                blocks.append((ResBlock(p, name + ".res", ch, lvl.width, td, g), attn(name + ".attn", lvl.width)))
                ch = lvl.width
            self.down.append(blocks)
        self.mid = (ResBlock(p, "unet.mid.res", ch, cfg.mid_width, td, g), attn("unet.mid.attn", cfg.mid_width))
        ch = cfg.mid_width
        self.up = []
        for li in reversed(range(len(cfg.levels))):
            lvl = cfg.levels[li]
            blocks = []
            cin = ch + lvl.width
            for j in range(lvl.n_up):
                name = f"unet.up{li}.{j}"
                blocks.append((ResBlock(p, name + ".res", cin, lvl.width, td, g), attn(name + ".attn", lvl.width)))
                cin = lvl.width
            ch = lvl.width
            self.up.append(blocks)
        self.nout_w, self.nout_b = p.new("unet.norm_out.w", (ch,), "ones"), p.new("unet.norm_out.b", (ch,), "zeros")
        self.cout_w = p.new("unet.conv_out.w", (cfg.channels, ch, 3, 3), std=0.1 / math.sqrt(ch * 9))
        self.cout_b = p.new("unet.conv_out.b", (cfg.channels,), "zeros")
        self.n_attn = sum(len(b) for b in self.down) + 1 + sum(len(b) for b in self.up)

    def __call__(self, x: Tensor, t: np.ndarray, contexts, hook=None) -> Tensor:
        """``contexts[i]`` -> (ctx (N, L, d), key mask (N, L)) for registry layer i.
        ``hook(i, weights)`` receives each layer's attention weights."""
        temb = Tensor(timestep_features(t, self.cfg.time_dim))
        temb = T.linear(T.silu(T.linear(temb, self.t1w, self.t1b)), self.t2w, self.t2b)
        temb = T.silu(temb)
        li = 0

        def cross(block, h):
            nonlocal li
            ctx, mask = contexts[li]
            hk = None if hook is None else (lambda w, i=li: hook(i, w))
            li += 1
            return block(h, ctx, mask, hk)

        h = T.conv2d(x, self.cin_w, self.cin_b)
        skips = []
        for k, blocks in enumerate(self.down):
            for res, att in blocks:
                h = cross(att, res(h, temb))
            skips.append(h)
            h = T.avg_pool2(h)
        res, att = self.mid
        h = cross(att, res(h, temb))
        for blocks in self.up:
            h = T.concat([T.upsample2(h), skips.pop()], axis=1)
            for res, att in blocks:
                h = cross(att, res(h, temb))
        h = T.silu(T.group_norm(h, self.cfg.groups, self.nout_w, self.nout_b))
        return T.conv2d(h, self.cout_w, self.cout_b)
