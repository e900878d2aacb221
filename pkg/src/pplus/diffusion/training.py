"""Joint pretraining of the text encoder and U-net on the synthetic corpus."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .. import data
from .. import tensor as T
from ..nn import Adam
from ..synthcorpus import Corpus, SceneSpec
from .model import ToyDiffusionModel

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    def __init__(self, step, value):
        super().__init__(f"non-finite loss {value} at step {step}")
        self.step = step


@dataclass
class PretrainConfig:
    steps: int = 3000
    lr: float = 2e-3
    batch: int = 8
    seed: int = 0
    cond_drop: float = 0.1
    holdout: int = 32
    clip: float = 1.0


@dataclass
class PretrainResult:
    losses: list = field(default_factory=list)
    heldout_before: float = float("nan")
    heldout_after: float = float("nan")

    @property
    def ratio(self) -> float:
        return self.heldout_after / self.heldout_before


def caption_variants(spec: SceneSpec) -> list:
    """Canonical "color shape, style" plus the two attention-analysis orders and
    template-prefixed forms."""
    canon = spec.caption
    out = [canon, canon, f"{spec.texture} {spec.color} {spec.shape}", f"{spec.shape}, {spec.color} {spec.texture}",
           f"{spec.color} {spec.shape}"]
    for tpl in data.read_lines("train_templates.txt"):
        out.append(tpl.replace("<token>", canon))
    return out


def denoise_loss(model: ToyDiffusionModel, images: np.ndarray, prompts, t: np.ndarray, eps: np.ndarray):
    x_t = model.forward_noise(images, t, eps)
    pred = model.predict_noise(x_t, t, prompts)
    return T.mean(T.square(T.sub(pred, T.Tensor(eps))))


def heldout_loss(model: ToyDiffusionModel, images, captions, seed: int = 12345, chunk: int = 16) -> float:
    rng = np.random.default_rng(seed)
    n = len(images)
    t = rng.integers(1, model.schedule.T + 1, n)
    eps = rng.standard_normal(images.shape)
    specs = [model.spec(c) for c in captions]
    total = 0.0
    for a in range(0, n, chunk):
        b = min(n, a + chunk)
        total += denoise_loss(model, images[a:b], specs[a:b], t[a:b], eps[a:b]).item() * (b - a)
    return total / n


def pretrain(model: ToyDiffusionModel, corpus: Corpus, cfg: PretrainConfig, progress=None) -> PretrainResult:
    if not len(corpus):
        raise ValueError("empty corpus")
    rng = np.random.default_rng(cfg.seed)
    n_hold = min(cfg.holdout, len(corpus) // 10)
    order = rng.permutation(len(corpus))
    hold, train = order[:n_hold], order[n_hold:]
    hold_caps = [corpus.specs[i].caption for i in hold]
    res = PretrainResult()
    if n_hold:
        res.heldout_before = heldout_loss(model, corpus.images[hold], hold_caps)
    model.params.unfreeze()
    opt = Adam(list(model.params), cfg.lr, clip=cfg.clip)
    variants = {}
    for step in range(cfg.steps):
        idx = train[rng.integers(len(train), size=cfg.batch)]
        caps = []
        for i in idx:
            sp = corpus.specs[i]
            if sp not in variants:
                variants[sp] = caption_variants(sp)
            caps.append("" if rng.random() < cfg.cond_drop else variants[sp][rng.integers(len(variants[sp]))])
        t = rng.integers(1, model.schedule.T + 1, cfg.batch)
        eps = rng.standard_normal((cfg.batch,) + model.image_shape)
        opt.lr = cfg.lr * 0.5 * (1.0 + math.cos(math.pi * step / max(cfg.steps, 1)))
        loss = denoise_loss(model, corpus.images[idx], [model.spec(c) for c in caps], t, eps)
        v = loss.item()
        if not math.isfinite(v):
            raise TrainingDiverged(step, v)
        opt.step(T.backward(loss))
        res.losses.append(v)
        if progress and (step + 1) % progress == 0:
            log.info("step %d loss %.4f", step + 1, float(np.mean(res.losses[-progress:])))
    model.params.freeze()
    if n_hold:
        res.heldout_after = heldout_loss(model, corpus.images[hold], hold_caps)
    return res
