"""Text encoder + U-net + noise schedule bundled as one frozen-able model."""
from __future__ import annotations

import numpy as np

from ..conditioning import (ExtendedPrompt, LayerSpec, TextEncoder, Vocabulary, build_contexts,
                            default_vocabulary)
from ..nn import Params
from ..tensor import Tensor, ShapeError
from .config import NoiseSchedule, UNetConfig
from .unet import UNet


class RegistryMismatch(ValueError):
    pass


class ToyDiffusionModel:
    def __init__(self, cfg: UNetConfig, vocab: Vocabulary | None = None, seed: int = 0,
                 schedule: NoiseSchedule | None = None):
        self.cfg = cfg
        self.vocab = vocab or default_vocabulary()
        self.schedule = schedule or NoiseSchedule()
        self.seed = seed
        self.params = Params(np.random.default_rng(seed))
        self.encoder = TextEncoder(self.params, self.vocab, cfg.text_dim, cfg.text_blocks, cfg.text_heads)
        self.unet = UNet(cfg, self.params)
        self.registry = cfg.registry()
        if len(self.registry) != self.unet.n_attn:
            raise AssertionError("registry does not match instantiated cross-attention layers")
        self.attention_hook = None
        self._uncond = None
        self.extra: dict = {}

    # -- prompts -------------------------------------------------------
    @property
    def image_shape(self) -> tuple:
        c = self.cfg
        return (c.channels, c.image_size, c.image_size)

    def spec(self, text: str, override: Tensor | None = None) -> LayerSpec:
        return LayerSpec(self.vocab.tokenize(text), override)

    def prompt(self, text: str, override: Tensor | None = None) -> ExtendedPrompt:
        """Broadcast a single prompt to every layer."""
        return ExtendedPrompt.broadcast(self.spec(text, override), self.registry)

    @property
    def uncond(self) -> LayerSpec:
        if self._uncond is None:
            self._uncond = self.spec("")
        return self._uncond

    # -- diffusion -----------------------------------------------------
    def forward_noise(self, image, t, eps) -> np.ndarray:
        image = np.asarray(image, dtype=np.float64)
        eps = np.asarray(eps, dtype=np.float64)
        if image.shape != eps.shape:
            raise ShapeError(f"forward_noise: image {image.shape} vs noise {eps.shape}")
        t = np.asarray(t)
        if np.any(t < 1) or np.any(t > self.schedule.T):
            raise ValueError(f"t must lie in [1, {self.schedule.T}]")
        ab = self.schedule.alpha_bar[t]
        if ab.ndim:
            ab = ab.reshape((-1,) + (1,) * (image.ndim - 1))
        return np.sqrt(ab) * image + np.sqrt(1.0 - ab) * eps

    def _check(self, prompts):
        rows = [prompts] if isinstance(prompts, (LayerSpec, ExtendedPrompt)) else list(prompts)
        for r in rows:
            if isinstance(r, ExtendedPrompt) and r.registry != self.registry:
                raise RegistryMismatch("prompt registry differs from the model's")

    def predict_noise(self, x, t, prompts) -> Tensor:
        """Noise prediction; layer i attends to the context routed to registry layer i.

        ``prompts`` may be a LayerSpec (single prompt P) or an ExtendedPrompt
        (P+), shared by the batch, or a list with one entry per sample.
        """
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.ndim != 4 or x.shape[1:] != self.image_shape:
            raise ShapeError(f"predict_noise: x {x.shape}, expected (N,) + {self.image_shape}")
        n = x.shape[0]
        t = np.broadcast_to(np.asarray(t), (n,))
        self._check(prompts)
        ctx = build_contexts(self.encoder, prompts, len(self.registry), n)
        return self.unet(x, t, ctx, self.attention_hook)

    def cfg_predict(self, x, t, prompt, w: float) -> np.ndarray:
        """(1 - w) * eps_uncond + w * eps_cond, each branch computed separately.

        The attention hook only observes the conditional branch.
        """
        hook, self.attention_hook = self.attention_hook, None
        try:
            eu = self.predict_noise(x, t, self.uncond).data
        finally:
            self.attention_hook = hook
        ec = self.predict_noise(x, t, prompt).data
        return (1.0 - w) * eu + w * ec

    def freeze(self):
        self.params.freeze()
