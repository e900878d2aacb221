"""Single prompts (P) and extended per-layer prompts (P+), plus layer mixing."""
from __future__ import annotations

from dataclasses import dataclass

from ..tensor import Tensor
from .layers import LayerId, LayerNameError, LayerRegistry, LayerSubset
from .vocab import PromptTemplate


@dataclass(frozen=True, eq=False)
class LayerSpec:
    """A template plus the embedding substituted at its placeholder, if any."""

    template: PromptTemplate
    override: Tensor | None = None

    def __post_init__(self):
        if (self.override is None) == self.template.has_placeholder:
            if self.override is None:
                raise ValueError(f"template {self.template.text!r} has a placeholder but no override")
            raise ValueError(f"override given but template {self.template.text!r} has no placeholder")

    @property
    def key(self) -> tuple:
        return self.template.ids, id(self.override)

    def __eq__(self, other):
        return isinstance(other, LayerSpec) and self.template == other.template \
            and self.override is other.override

    def __hash__(self):
        return hash((self.template, id(self.override)))


class ExtendedPrompt:
    """One :class:`LayerSpec` per cross-attention layer, in registry order."""

    def __init__(self, specs, registry: LayerRegistry):
        specs = tuple(specs)
        if len(specs) != len(registry):
            raise ValueError(f"{len(specs)} specs for a {len(registry)}-layer registry")
        self.specs = specs
        self.registry = registry

    @classmethod
    def broadcast(cls, spec: LayerSpec, registry: LayerRegistry) -> "ExtendedPrompt":
        return cls([spec] * len(registry), registry)

    @classmethod
    def per_layer(cls, template: PromptTemplate, embeddings, registry: LayerRegistry) -> "ExtendedPrompt":
        """XTI prompt: the same template with embedding i at layer i."""
        return cls([LayerSpec(template, e) for e in embeddings], registry)

    def __len__(self):
        return len(self.specs)

    def __iter__(self):
        return iter(self.specs)

    def __getitem__(self, i) -> LayerSpec:
        return self.specs[i]

    def spec_for(self, layer: LayerId) -> LayerSpec:
        return self.specs[self.registry.position(layer)]

    def layerwise_equal(self, other: "ExtendedPrompt") -> bool:
        return self.registry == other.registry and all(a == b for a, b in zip(self.specs, other.specs))

    @property
    def is_broadcast(self) -> bool:
        return all(s == self.specs[0] for s in self.specs)


@dataclass(frozen=True)
class MixSpec:
    """Separators k < K: 1-based layers k+1 .. K come from the second prompt."""

    k: int
    K: int

    def validate(self, n: int):
        if not 1 <= self.k < self.K <= n:
            raise LayerNameError(f"need 1 <= k < K <= {n}, got k={self.k}, K={self.K}")

    @classmethod
    def from_subset(cls, subset: LayerSubset) -> "MixSpec":
        runs = subset.runs()
        if len(runs) != 1:
            raise LayerNameError(f"layer set {subset.describe()!r} is not one contiguous range")
        a, b = runs[0]
        if a == 0:
            raise LayerNameError("a (k, K] range cannot start at the first layer")
        return cls(a, b + 1)

    def subset(self, registry: LayerRegistry) -> LayerSubset:
        self.validate(len(registry))
        return LayerSubset(registry, frozenset(range(self.k, self.K)))


def mix_subset(p: ExtendedPrompt, q: ExtendedPrompt, subset: LayerSubset) -> ExtendedPrompt:
    """Layers in ``subset`` take q's spec, all others keep p's."""
    if p.registry != q.registry or subset.registry != p.registry:
        raise ValueError("prompts and subset must share one registry")
    return ExtendedPrompt([q[i] if i in subset.positions else p[i] for i in range(len(p))], p.registry)


def mix_extended(p: ExtendedPrompt, q: ExtendedPrompt, spec: MixSpec) -> ExtendedPrompt:
    """{p_1..p_k, q_(k+1)..q_K, p_(K+1)..p_n}."""
    if p.registry != q.registry:
        raise ValueError("prompts were built against different registries")
    return mix_subset(p, q, spec.subset(p.registry))
