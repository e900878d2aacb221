"""Textual Inversion (one embedding) and Extended Textual Inversion (one per layer).

Only the new embeddings are optimised; the model stays frozen.  The loss is
the denoising MSE with each batch element independently drawing an image, a
placeholder template, Gaussian noise and a timestep in 1..T.  With
``reg_lambda > 0`` the objective adds ``-reg_lambda * sum_i log p_E(e_i)``
using the lookup-table KDE.

Optimiser: Adam, betas (0.9, 0.999), eps 1e-8, constant learning rate, no
warmup, no gradient clipping (see :class:`pplus.nn.Adam` for the update).
"""
from __future__ import annotations

import base64
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import data, density
from . import tensor as T
from .conditioning import ExtendedPrompt, LayerRegistry, LayerSpec
from .diffusion.model import RegistryMismatch, ToyDiffusionModel
from .fsutil import atomic_write_text
from .nn import Adam
from .synthcorpus import ConceptDataset
from .tensor import Tensor, leaf

MULTI_IMAGE_LR = 0.005
SINGLE_IMAGE_LR = 0.001
DEFAULT_STEPS = {"ti": 5000, "xti": 500}
MIXING_LAMBDA = 0.002


class InversionDiverged(FloatingPointError):
    pass


@dataclass
class InversionConfig:
    mode: str = "xti"
    lr: float | None = None
    steps: int | None = None
    batch: int = 8
    reg_lambda: float = 0.0
    templates: tuple = ()
    seed: int = 0
    init: str = "coarse-word"
    init_word: str | None = None
    single_image: bool = False
    probe_samples: int = 64

    def __post_init__(self):
        self.mode = self.mode.lower()
        if self.mode not in DEFAULT_STEPS:
            raise ValueError(f"mode must be 'ti' or 'xti', got {self.mode!r}")
        if self.lr is None:
            self.lr = SINGLE_IMAGE_LR if self.single_image else MULTI_IMAGE_LR
        if self.steps is None:
            self.steps = DEFAULT_STEPS[self.mode]
        if not self.templates:
            self.templates = tuple(data.read_lines("train_templates.txt"))
        self.templates = tuple(self.templates)
        if self.lr <= 0 or self.steps < 0 or self.batch <= 0 or self.reg_lambda < 0:
            raise ValueError("lr and batch must be positive, steps and reg_lambda non-negative")


@dataclass
class InvertedConcept:
    name: str
    mode: str
    embeddings: list
    registry: list
    config: dict
    final_loss: float
    probe_loss: float
    losses: list = field(default_factory=list)

    def tensors(self) -> list:
        """Constant tensors, created once so repeated prompts share encodings."""
        if getattr(self, "_tensors", None) is None:
            self._tensors = [Tensor(e) for e in self.embeddings]
        return self._tensors

    def prompt(self, model: ToyDiffusionModel, text: str = "a photo of <token>") -> ExtendedPrompt:
        """Extended prompt with this concept at the placeholder of ``text``."""
        if LayerRegistry.from_names(self.registry) != model.registry:
            raise RegistryMismatch("concept was inverted on a different registry")
        tpl = model.vocab.tokenize(text)
        es = self.tensors()
        if self.mode == "ti":
            return ExtendedPrompt.broadcast(LayerSpec(tpl, es[0]), model.registry)
        return ExtendedPrompt.per_layer(tpl, es, model.registry)

    # -- file format: JSON header with base64 little-endian float64 vectors --
    def dumps(self) -> str:
        d = asdict(self)
        d["embeddings"] = [base64.b64encode(np.asarray(e, dtype="<f8").tobytes()).decode() for e in self.embeddings]
        d["dim"] = int(len(self.embeddings[0]))
        d["format"] = "pplus-concept/1"
        return json.dumps(d, indent=1, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "InvertedConcept":
        d = json.loads(text)
        if d.pop("format", None) != "pplus-concept/1":
            raise ValueError("not a pplus concept file")
        d.pop("dim")
        d["embeddings"] = [np.frombuffer(base64.b64decode(s), dtype="<f8").astype(np.float64)
                           for s in d["embeddings"]]
        return cls(**d)

    def save(self, path):
        atomic_write_text(path, self.dumps())

    @classmethod
    def load(cls, path) -> "InvertedConcept":
        with open(path) as fh:
            return cls.loads(fh.read())


def embed_init(model: ToyDiffusionModel, strategy: str, n: int, word: str | None = None) -> list:
    table = model.encoder.table
    if strategy == "zeros":
        row = np.zeros(table.dim)
    elif strategy == "mean-of-table":
        row = table.natural.mean(axis=0)
    elif strategy == "coarse-word":
        if word is None:
            raise ValueError("coarse-word initialisation needs a descriptor word")
        row = table.row(word)
    else:
        raise ValueError(f"unknown init strategy {strategy!r}")
    return [row.copy() for _ in range(n)]


@dataclass
class Batch:
    images: np.ndarray
    templates: list
    t: np.ndarray
    eps: np.ndarray


def sample_batch(model: ToyDiffusionModel, images: np.ndarray, templates, size: int,
                 rng: np.random.Generator) -> Batch:
    idx = rng.integers(len(images), size=size)
    tpl = [templates[i] for i in rng.integers(len(templates), size=size)]
    t = rng.integers(1, model.schedule.T + 1, size)
    eps = rng.standard_normal((size,) + model.image_shape)
    return Batch(images[idx], tpl, t, eps)


def batch_prompts(model: ToyDiffusionModel, templates, embeddings) -> list:
    """Per-sample extended prompts: layer i gets ``embeddings[i]``, or the single
    embedding at every layer when only one is given (TI)."""
    if len(embeddings) == 1:
        return [ExtendedPrompt.broadcast(LayerSpec(tp, embeddings[0]), model.registry) for tp in templates]
    if len(embeddings) != len(model.registry):
        raise RegistryMismatch(f"{len(embeddings)} embeddings for {len(model.registry)} layers")
    return [ExtendedPrompt.per_layer(tp, embeddings, model.registry) for tp in templates]


def loss_xti(model: ToyDiffusionModel, batch: Batch, embeddings) -> Tensor:
    x_t = model.forward_noise(batch.images, batch.t, batch.eps)
    pred = model.predict_noise(x_t, batch.t, batch_prompts(model, batch.templates, embeddings))
    loss = T.mean(T.square(T.sub(pred, Tensor(batch.eps))))
    if not math.isfinite(loss.item()):
        raise InversionDiverged(f"non-finite loss {loss.item()}")
    return loss


def loss_single_prompt(model: ToyDiffusionModel, batch: Batch, embedding: Tensor) -> Tensor:
    """TI loss through the plain single-prompt path (one context for all layers)."""
    x_t = model.forward_noise(batch.images, batch.t, batch.eps)
    pred = model.predict_noise(x_t, batch.t, [LayerSpec(tp, embedding) for tp in batch.templates])
    return T.mean(T.square(T.sub(pred, Tensor(batch.eps))))


def regularizer(kde: density.DensityModel, embeddings) -> Tensor:
    """-sum_i log p_E(e_i)."""
    total = None
    for e in embeddings:
        ld = density.log_density_tensor(kde, e)
        total = ld if total is None else T.add(total, ld)
    return T.neg(total)


def probe_loss(model: ToyDiffusionModel, data: ConceptDataset, templates, embeddings,
               samples: int = 64, seed: int = 987654, chunk: int = 16) -> float:
    """Denoising loss on a fixed draw of (image, template, noise, t); the draw
    depends only on the dataset, templates and seed, so TI and XTI share it."""
    rng = np.random.default_rng(seed)
    b = sample_batch(model, data.images, templates, samples, rng)
    es = [e if isinstance(e, Tensor) else Tensor(e) for e in embeddings]
    total = 0.0
    for a in range(0, samples, chunk):
        z = min(samples, a + chunk)
        part = Batch(b.images[a:z], b.templates[a:z], b.t[a:z], b.eps[a:z])
        total += loss_xti(model, part, es).item() * (z - a)
    return total / samples


def invert(model: ToyDiffusionModel, dataset: ConceptDataset, cfg: InversionConfig,
           kde: density.DensityModel | None = None, name: str | None = None) -> InvertedConcept:
    if dataset.images.shape[1:] != model.image_shape:
        raise ValueError(f"concept images {dataset.images.shape[1:]} do not match model {model.image_shape}")
    model.freeze()
    before = model.params.checksum()
    n = 1 if cfg.mode == "ti" else len(model.registry)
    word = cfg.init_word or dataset.specs[0].shape
    embs = [leaf(e, name=f"e{i}") for i, e in enumerate(embed_init(model, cfg.init, n, word))]
    templates = [model.vocab.tokenize(s) for s in cfg.templates]
    if cfg.reg_lambda > 0 and kde is None:
        kde = density.fit(model.encoder.table)
    opt = Adam(embs, cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    losses = []
    for step in range(cfg.steps):
        batch = sample_batch(model, dataset.images, templates, cfg.batch, rng)
        loss = loss_xti(model, batch, embs)
        losses.append(loss.item())
        if cfg.reg_lambda > 0:
            loss = T.add(loss, T.scale(regularizer(kde, embs), cfg.reg_lambda))
        opt.step(T.backward(loss))
        for e in embs:
            if not np.isfinite(e.data).all():
                raise InversionDiverged(f"non-finite embedding at step {step}")
    if model.params.checksum() != before:
        raise AssertionError("model parameters changed during inversion")
    final = [e.data.copy() for e in embs]
    window = losses[-50:]
    return InvertedConcept(
        name=name or f"{dataset.name}.{cfg.mode}", mode=cfg.mode, embeddings=final, registry=model.registry.names(),
        config=asdict(cfg) | {"templates": list(cfg.templates)},
        final_loss=float(np.mean(window)) if window else float("nan"),
        probe_loss=probe_loss(model, dataset, templates, final, cfg.probe_samples),
        losses=losses)
