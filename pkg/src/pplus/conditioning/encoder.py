"""Token lookup table and a small transformer text encoder."""
from __future__ import annotations

import math

import numpy as np

from .. import tensor as T
from ..nn import Params
from ..tensor import Tensor
from .layers import LayerId, LayerNameError
from .prompts import ExtendedPrompt, LayerSpec
from .vocab import PromptTemplate, Vocabulary


class LookupTable:
    """|V| x d token embeddings; ``natural`` rows exclude appended placeholders."""

    def __init__(self, weight: Tensor, vocab: Vocabulary):
        if weight.shape[0] != len(vocab):
            raise ValueError(f"table has {weight.shape[0]} rows for {len(vocab)} words")
        self.weight = weight
        self.vocab = vocab

    @property
    def dim(self) -> int:
        return self.weight.shape[1]

    @property
    def natural(self) -> np.ndarray:
        return self.weight.data[: self.vocab.n_natural].copy()

    def row(self, word: str) -> np.ndarray:
        return self.weight.data[self.vocab.id(word)].copy()


class TextEncoder:
    """Token + position embeddings, pre-LN transformer blocks, final LN.

    Sequences are encoded in one batch; PAD keys are masked out of the
    self-attention.  The placeholder row is replaced by the caller's override
    via a constant one-hot blend, so the override stays differentiable.
    """

    def __init__(self, params: Params, vocab: Vocabulary, dim: int, n_blocks: int = 2,
                 heads: int = 2, prefix: str = "text"):
        self.vocab = vocab
        self.dim = dim
        self.heads = heads
        self.n_blocks = n_blocks
        L = vocab.max_len
        p = params
        self.table = LookupTable(p.new(f"{prefix}.table", (len(vocab), dim), std=1.0), vocab)
        self.pos = p.new(f"{prefix}.pos", (L, dim), std=0.1)
        self.blocks = []
        for b in range(n_blocks):
            n = f"{prefix}.block{b}"
            self.blocks.append(dict(
                ln1_w=p.new(f"{n}.ln1.w", (dim,), "ones"), ln1_b=p.new(f"{n}.ln1.b", (dim,), "zeros"),
                wq=p.new(f"{n}.attn.wq", (dim, dim)), wk=p.new(f"{n}.attn.wk", (dim, dim)),
                wv=p.new(f"{n}.attn.wv", (dim, dim)), wo=p.new(f"{n}.attn.wo", (dim, dim)),
                ln2_w=p.new(f"{n}.ln2.w", (dim,), "ones"), ln2_b=p.new(f"{n}.ln2.b", (dim,), "zeros"),
                w1=p.new(f"{n}.mlp.w1", (dim, 2 * dim)), b1=p.new(f"{n}.mlp.b1", (2 * dim,), "zeros"),
                w2=p.new(f"{n}.mlp.w2", (2 * dim, dim)), b2=p.new(f"{n}.mlp.b2", (dim,), "zeros"),
            ))
        self.lnf_w = p.new(f"{prefix}.lnf.w", (dim,), "ones")
        self.lnf_b = p.new(f"{prefix}.lnf.b", (dim,), "zeros")

    # -- encoding --------------------------------------------------------
    def _self_attention(self, x: Tensor, blk, mask: np.ndarray) -> Tensor:
        B, L, d = x.shape
        h = self.heads
        dh = d // h

        def split(t):
            t = T.reshape(t, (B, L, h, dh))
            return T.reshape(T.transpose(t, (0, 2, 1, 3)), (B * h, L, dh))

        q = split(T.linear(x, blk["wq"]))
        k = split(T.linear(x, blk["wk"]))
        v = split(T.linear(x, blk["wv"]))
        o = T.attention(q, k, v, key_mask=np.repeat(mask, h, axis=0))
        o = T.reshape(T.transpose(T.reshape(o, (B, h, L, dh)), (0, 2, 1, 3)), (B, L, d))
        return T.linear(o, blk["wo"])

    def encode_specs(self, specs) -> Tensor:
        """Encode a list of :class:`LayerSpec` into a (B, L, d) context."""
        ids = np.array([s.template.ids for s in specs])
        mask = np.stack([s.template.mask for s in specs])
        B, L = ids.shape
        x = T.getitem(self.table.weight, ids)
        if any(s.override is not None for s in specs):
            onehot = np.zeros((B, L, 1))
            rows = []
            zero = None
            for b, s in enumerate(specs):
                if s.override is None:
                    if zero is None:
                        zero = Tensor(np.zeros((1, self.dim)))
                    rows.append(zero)
                else:
                    if s.override.shape != (self.dim,):
                        raise ValueError(f"override of shape {s.override.shape}, expected ({self.dim},)")
                    onehot[b, s.template.placeholder, 0] = 1.0
                    rows.append(T.reshape(s.override, (1, self.dim)))
            over = T.expand(T.reshape(T.concat(rows, 0), (B, 1, self.dim)), (B, L, self.dim))
            sel = np.broadcast_to(onehot, (B, L, self.dim))
            x = T.add(T.mul(x, Tensor(1.0 - sel)), T.mul(over, Tensor(sel)))
        x = T.add(x, T.expand(T.reshape(self.pos, (1, L, self.dim)), (B, L, self.dim)))
        for blk in self.blocks:
            x = T.add(x, self._self_attention(T.layer_norm(x, blk["ln1_w"], blk["ln1_b"]), blk, mask))
            h = T.layer_norm(x, blk["ln2_w"], blk["ln2_b"])
            h = T.linear(T.silu(T.linear(h, blk["w1"], blk["b1"])), blk["w2"], blk["b2"])
            x = T.add(x, h)
        return T.layer_norm(x, self.lnf_w, self.lnf_b)

    def encode(self, template: PromptTemplate, override: Tensor | None = None) -> Tensor:
        """(L, d) context for one template."""
        return T.reshape(self.encode_specs([LayerSpec(template, override)]), (self.vocab.max_len, self.dim))


class Contexts:
    """Per-layer (N, L, d) contexts and (N, L) key masks for a batch.

    Each distinct (template, override) pair is encoded once; layers whose
    batch rows resolve to the same specs share one context tensor.
    """

    def __init__(self, layers: list, masks: list, n_unique: int):
        self.layers = layers
        self.masks = masks
        self.n_unique = n_unique

    def __getitem__(self, i):
        return self.layers[i], self.masks[i]


def build_contexts(encoder: TextEncoder, prompts, n_layers: int, batch: int) -> Contexts:
    """``prompts``: a LayerSpec (P, shared), a list of LayerSpecs (P, per sample),
    an ExtendedPrompt (P+, shared) or a list of ExtendedPrompts (P+, per sample)."""
    if isinstance(prompts, (LayerSpec, ExtendedPrompt)):
        rows = [prompts]
        shared = True
    else:
        rows = list(prompts)
        shared = False
        if len(rows) != batch:
            raise ValueError(f"{len(rows)} prompts for a batch of {batch}")

    def spec(row, i):
        return row if isinstance(row, LayerSpec) else row.specs[i]

    unique: dict = {}
    order = []
    for row in rows:
        for i in range(n_layers):
            s = spec(row, i)
            if s.key not in unique:
                unique[s.key] = len(order)
                order.append(s)
    enc = encoder.encode_specs(order)
    allmask = np.stack([s.template.mask for s in order])
    U, L, d = enc.shape
    cache: dict = {}
    layers, masks = [], []
    for i in range(n_layers):
        idx = tuple(unique[spec(row, i).key] for row in rows)
        if idx not in cache:
            if idx == tuple(range(U)):
                ctx = enc
            else:
                ctx = T.getitem(enc, np.array(idx))
            m = allmask[list(idx)]
            if shared:
                ctx = T.expand(ctx, (batch, L, d))
                m = np.repeat(m, batch, axis=0)
            cache[idx] = (ctx, m)
        c, m = cache[idx]
        layers.append(c)
        masks.append(m)
    return Contexts(layers, masks, U)


def route(encoder: TextEncoder, p: ExtendedPrompt, layer: LayerId) -> Tensor:
    """(L, d) context delivered to ``layer``."""
    if layer not in p.registry:
        raise LayerNameError(f"layer {layer} not in registry")
    s = p.spec_for(layer)
    return encoder.encode(s.template, s.override)
