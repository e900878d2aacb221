"""Per-layer object/appearance attention ratios.

Masses are averaged over heads, then spatial queries, then timesteps and the
batch; the ratio is taken after averaging.  All stages are plain means so the
order does not matter.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .. import data
from ..conditioning import LayerRegistry
from ..diffusion.config import SamplerConfig
from ..diffusion.sampling import ddim_sample, timesteps
from ..synthcorpus import COLORS, SHAPES, TEXTURES

OBJECT, APPEARANCE, OTHER, SPECIAL = "object", "appearance", "other", "special"


@dataclass
class AttentionRecord:
    layer: int
    timestep: int
    sample: int
    masses: np.ndarray  # (L,) mean attention per key token
    labels: tuple  # (L,) span label per key token


@dataclass
class LabeledPrompt:
    text: str
    object_word: str
    appearance_word: str
    pattern: str


def prompt_bank(objects=None, appearances=None) -> list:
    """Both orderings, "appearance object" and "object, appearance", for every pair."""
    objects = objects if objects is not None else list(dict.fromkeys(data.read_lines("attn_objects.txt")))
    appearances = appearances if appearances is not None else data.read_lines("attn_appearances.txt")
    out = []
    for o in objects:
        for a in appearances:
            out.append(LabeledPrompt(f"{a} {o}", o, a, "appearance object"))
            out.append(LabeledPrompt(f"{o}, {a}", o, a, "object, appearance"))
    return out


def token_labels(vocab, prompt: LabeledPrompt) -> tuple:
    """Label each key position of the tokenized prompt; None if a span is missing."""
    tpl = vocab.tokenize(prompt.text)
    obj = [vocab.id(w) for w in prompt.object_word.split()]
    app = [vocab.id(w) for w in prompt.appearance_word.split()]
    ids = list(tpl.ids)
    labels = [SPECIAL if i in (vocab.pad_id, vocab.bos_id, vocab.eos_id) else OTHER for i in ids]

    def mark(span, tag):
        for s in range(len(ids) - len(span) + 1):
            if ids[s:s + len(span)] == span and all(labels[s + j] == OTHER for j in range(len(span))):
                for j in range(len(span)):
                    labels[s + j] = tag
                return True
        return False

    if not (mark(obj, OBJECT) and mark(app, APPEARANCE)):
        return None
    return tuple(labels)


class AttentionRecorder:
    """Model attention hook that turns raw weights into AttentionRecords.

    Each conditional forward pass calls the hook once per layer in registry
    order, so the call count identifies the sampling step.
    """

    def __init__(self, n_layers: int, heads: int, labels: tuple, steps_t=None, sample_offset: int = 0):
        self.n_layers = n_layers
        self.heads = heads
        self.labels = labels
        self.steps_t = steps_t
        self.offset = sample_offset
        self.calls = 0
        self.records: list = []

    def __call__(self, layer: int, weights: np.ndarray):
        step = self.calls // self.n_layers
        self.calls += 1
        nh, q, L = weights.shape
        m = weights.reshape(nh // self.heads, self.heads, q, L).mean(axis=(1, 2))
        t = int(self.steps_t[step]) if self.steps_t is not None else step
        for b in range(m.shape[0]):
            self.records.append(AttentionRecord(layer, t, self.offset + b, m[b], self.labels))


def span_mass(rec: AttentionRecord, label: str, reduce: str = "mean") -> float:
    sel = np.array([lab == label for lab in rec.labels])
    if not sel.any():
        raise ValueError(f"record has no {label} tokens")
    v = rec.masses[sel]
    return float(v.mean() if reduce == "mean" else v.sum())


def ratio_table(records, registry: LayerRegistry, reduce: str = "mean") -> dict:
    """Layer name -> mean object mass / mean appearance mass."""
    if reduce not in ("mean", "sum"):
        raise ValueError("reduce must be 'mean' or 'sum'")
    out = {}
    for i, layer in enumerate(registry):
        rs = [r for r in records if r.layer == i]
        if not rs:
            continue
        obj = np.mean([span_mass(r, OBJECT, reduce) for r in rs])
        app = np.mean([span_mass(r, APPEARANCE, reduce) for r in rs])
        out[str(layer)] = float(obj / app)
    return out


def collect(model, prompt: LabeledPrompt, sampler: SamplerConfig, n: int = 1) -> list:
    labels = token_labels(model.vocab, prompt)
    if labels is None:
        warnings.warn(f"prompt {prompt.text!r} lacks an object or appearance span; skipped")
        return []
    rec = AttentionRecorder(len(model.registry), model.cfg.attn_heads, labels,
                            timesteps(model.schedule.T, sampler.steps))
    prev, model.attention_hook = model.attention_hook, rec
    try:
        ddim_sample(model, model.prompt(prompt.text), sampler, n=n)
    finally:
        model.attention_hook = prev
    return rec.records


@dataclass
class RatioReport:
    ratios: dict  # layer name -> ratio
    resolutions: dict  # layer name -> resolution
    n_prompts: int

    def group_mean(self, coarse: bool) -> float:
        v = [r for k, r in self.ratios.items() if (self.resolutions[k] <= 16) == coarse]
        return float(np.mean(v)) if v else float("nan")

    @property
    def coarse_over_fine(self) -> bool:
        return self.group_mean(True) > self.group_mean(False)


def attention_ratio(model, prompts=None, seeds=(0,), steps: int = 10, guidance: float = 7.5,
                    reduce: str = "mean", limit: int | None = None) -> RatioReport:
    prompts = prompts if prompts is not None else prompt_bank()
    if limit is not None:
        prompts = prompts[:limit]
    records, used = [], 0
    for p in prompts:
        got = []
        for s in seeds:
            got += collect(model, p, SamplerConfig(steps=steps, guidance=guidance, seed=s))
        records += got
        used += bool(got)
    table = ratio_table(records, model.registry, reduce)
    return RatioReport(table, {str(l): l.resolution for l in model.registry}, used)


def toy_prompt_bank(shapes=None, appearances=None) -> list:
    """Prompt bank over the synthetic corpus: shapes as objects, colours and
    textures as appearance words."""
    return prompt_bank(list(shapes or SHAPES), list(appearances or (COLORS + TEXTURES)))
