"""Layer-subset sweep: the subset follows prompt 2, its complement prompt 1."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..conditioning import growing_subsets, mix_subset
from ..conditioning.layers import REFERENCE_16, subset_sequence
from ..diffusion.config import SamplerConfig
from ..diffusion.sampling import ddim_sample
from ..synthcorpus import SceneSpec
from .embedding import ATTRIBUTES, ToyEmbedder

# (shape, color, texture) pairs that differ in every attribute
DEFAULT_PAIRS = (
    (("square", "red", "solid"), ("circle", "blue", "stripes")),
    (("triangle", "yellow", "checker"), ("cross", "green", "solid")),
    (("circle", "white", "solid"), ("diamond", "orange", "checker")),
)


def pair_captions(pair) -> tuple:
    return tuple(SceneSpec(s, c, t).caption for s, c, t in pair)


@dataclass
class SweepRow:
    index: int
    subset: str
    attribute: str
    sim_p1: float
    sim_p2: float
    missing: bool = False

    @property
    def favors(self) -> str:
        if self.missing:
            return "missing"
        return "p2" if self.sim_p2 > self.sim_p1 else "p1"


@dataclass
class SubsetSweepReport:
    rows: list = field(default_factory=list)

    def attribute_rows(self, attribute: str) -> list:
        return [r for r in self.rows if r.attribute == attribute]

    def crossover(self, attribute: str):
        """First subset index where prompt 2 wins on ``attribute``, or None."""
        for r in self.attribute_rows(attribute):
            if not r.missing and r.sim_p2 > r.sim_p1:
                return r.index
        return None

    @property
    def object_before_color(self) -> bool:
        o, c = self.crossover("object"), self.crossover("color")
        if o is None:
            return False
        return c is None or o <= c


def default_subsets(registry) -> list:
    return subset_sequence(registry) if registry == REFERENCE_16 else growing_subsets(registry)


def sweep_subset(model, index: int, subset, pairs=DEFAULT_PAIRS, seeds=(0, 1), embedder=None,
                 sampler: SamplerConfig = SamplerConfig(steps=25, guidance=7.5)) -> list:
    """Rows for one subset: mean similarity of each attribute to both prompts."""
    embedder = embedder or ToyEmbedder()
    sims = {a: ([], []) for a in ATTRIBUTES}
    missing = False
    for pair in pairs:
        c1, c2 = pair_captions(pair)
        mixed = mix_subset(model.prompt(c1), model.prompt(c2), subset)
        for s in seeds:
            img = ddim_sample(model, mixed, SamplerConfig(steps=sampler.steps, guidance=sampler.guidance, seed=s))[0]
            try:
                for k, a in enumerate(ATTRIBUTES):
                    sims[a][0].append(embedder.attribute_similarity(img, a, pair[0][k]))
                    sims[a][1].append(embedder.attribute_similarity(img, a, pair[1][k]))
            except ValueError:  # embedder could not read the image
                missing = True
    desc = subset.describe()
    if missing:
        return [SweepRow(index, desc, a, float("nan"), float("nan"), True) for a in ATTRIBUTES]
    return [SweepRow(index, desc, a, float(np.mean(s1)), float(np.mean(s2))) for a, (s1, s2) in sims.items()]


def subset_sweep(model, pairs=DEFAULT_PAIRS, seeds=(0, 1), embedder=None, subsets=None,
                 sampler: SamplerConfig = SamplerConfig(steps=25, guidance=7.5)) -> SubsetSweepReport:
    subsets = subsets if subsets is not None else default_subsets(model.registry)
    report = SubsetSweepReport()
    for idx, sub in enumerate(subsets):
        report.rows += sweep_subset(model, idx, sub, pairs, seeds, embedder, sampler)
    return report
