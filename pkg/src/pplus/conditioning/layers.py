"""Cross-attention layer names, registries and layer subsets.

Layers are named ``(RES, 'DIR', IDX)`` where RES is the Stable Diffusion
resolution label, DIR is ``down`` or ``up`` and IDX counts layers of the same
resolution and direction.  The single bottleneck layer is named
``(8, 'down', 0)``.  A registry lists layers in U-net traversal order.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

DIRECTIONS = ("down", "up")

_ID = re.compile(r"\(\s*(\d+)\s*,\s*['\"](down|up)['\"]\s*,\s*(\d+)\s*\)")


class LayerNameError(ValueError):
    """Malformed layer name or range, or a layer absent from the registry."""


@dataclass(frozen=True)
class LayerId:
    resolution: int
    direction: str
    index: int

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise LayerNameError(f"direction must be one of {DIRECTIONS}: {self.direction!r}")
        if self.resolution <= 0 or self.resolution & (self.resolution - 1):
            raise LayerNameError(f"resolution must be a power of two: {self.resolution}")
        if self.index < 0:
            raise LayerNameError(f"negative index {self.index}")

    def __str__(self):
        return f"({self.resolution}, '{self.direction}', {self.index})"

    @classmethod
    def parse(cls, text: str) -> "LayerId":
        m = _ID.fullmatch(text.strip())
        if not m:
            raise LayerNameError(f"not a layer name: {text!r}")
        return cls(int(m.group(1)), m.group(2), int(m.group(3)))


class LayerRegistry:
    """Ordered, duplicate-free list of layer ids."""

    def __init__(self, layers):
        self.layers = tuple(layers)
        if len(set(self.layers)) != len(self.layers):
            raise ValueError("duplicate layer in registry")
        self._pos = {l: i for i, l in enumerate(self.layers)}

    def __len__(self):
        return len(self.layers)

    def __iter__(self):
        return iter(self.layers)

    def __getitem__(self, i):
        return self.layers[i]

    def __eq__(self, other):
        return isinstance(other, LayerRegistry) and self.layers == other.layers

    def __hash__(self):
        return hash(self.layers)

    def __contains__(self, layer):
        return layer in self._pos

    def position(self, layer: LayerId) -> int:
        try:
            return self._pos[layer]
        except KeyError:
            raise LayerNameError(f"layer {layer} not in registry") from None

    def names(self) -> list:
        return [str(l) for l in self.layers]

    @classmethod
    def from_names(cls, names) -> "LayerRegistry":
        return cls(LayerId.parse(n) for n in names)

    def span(self, first: LayerId, last: LayerId) -> "LayerSubset":
        a, b = self.position(first), self.position(last)
        if a > b:
            raise LayerNameError(f"empty range {first} - {last}")
        return LayerSubset(self, frozenset(range(a, b + 1)))

    def parse_set(self, text: str) -> "LayerSubset":
        """Parse ``"(16,'down',1)-(16,'up',0)"``, ``"(8,'down',0),(16,'up',0)"`` or a mix.

        Ranges are inclusive in registry order.
        """
        s = text.strip()
        picked: set = set()
        pos = 0
        if not s:
            raise LayerNameError("empty layer set")
        while pos < len(s):
            m = _ID.match(s, pos)
            if not m:
                raise LayerNameError(f"bad layer set at {s[pos:]!r}")
            first = LayerId(int(m.group(1)), m.group(2), int(m.group(3)))
            pos = _skip_ws(s, m.end())
            if pos < len(s) and s[pos] == "-":
                m2 = _ID.match(s, _skip_ws(s, pos + 1))
                if not m2:
                    raise LayerNameError(f"bad range end in {text!r}")
                last = LayerId(int(m2.group(1)), m2.group(2), int(m2.group(3)))
                picked |= self.span(first, last).positions
                pos = _skip_ws(s, m2.end())
            else:
                picked.add(self.position(first))
            if pos < len(s):
                if s[pos] != ",":
                    raise LayerNameError(f"expected ',' in {text!r}")
                pos = _skip_ws(s, pos + 1)
                if pos >= len(s):
                    raise LayerNameError(f"trailing ',' in {text!r}")
        return LayerSubset(self, frozenset(picked))


def _skip_ws(s, i):
    while i < len(s) and s[i].isspace():
        i += 1
    return i


@dataclass(frozen=True)
class LayerSubset:
    registry: LayerRegistry
    positions: frozenset

    def __len__(self):
        return len(self.positions)

    def __contains__(self, layer):
        return layer in self.registry and self.registry.position(layer) in self.positions

    @property
    def layers(self) -> list:
        return [self.registry[i] for i in sorted(self.positions)]

    def issubset(self, other: "LayerSubset") -> bool:
        return self.positions <= other.positions

    def runs(self) -> list:
        """Maximal contiguous runs as (first, last) position pairs."""
        out = []
        for i in sorted(self.positions):
            if out and out[-1][1] == i - 1:
                out[-1][1] = i
            else:
                out.append([i, i])
        return [tuple(r) for r in out]

    def describe(self) -> str:
        if not self.positions:
            return "Empty set"
        if len(self.positions) == 1:
            return f"Layer {self.registry[next(iter(self.positions))]} only"
        parts = []
        for a, b in self.runs():
            ra, rb = self.registry[a], self.registry[b]
            parts.append(str(ra) if a == b else f"{ra} - {rb}")
        return ", ".join(parts)


def _layers(res_counts, bottleneck):
    down = [LayerId(r, "down", i) for r, n, _ in res_counts for i in range(n)]
    mid = [LayerId(bottleneck, "down", 0)] if bottleneck else []
    up = [LayerId(r, "up", i) for r, _, n in reversed(res_counts) for i in range(n)]
    return LayerRegistry(down + mid + up)


REFERENCE_16 = _layers([(64, 2, 3), (32, 2, 3), (16, 2, 3)], 8)
MICRO_5 = _layers([(32, 1, 1), (16, 1, 1)], 8)

# Growing coarse-to-fine subsets, inclusive ranges in registry order.
SUBSET_RANGES = (
    "",
    "(8, 'down', 0)",
    "(16, 'down', 1) - (8, 'down', 0)",
    "(16, 'down', 1) - (16, 'up', 0)",
    "(16, 'down', 0) - (16, 'up', 0)",
    "(16, 'down', 0) - (16, 'up', 1)",
    "(16, 'down', 0) - (16, 'up', 2)",
    "(64, 'down', 0) - (64, 'up', 2)",
)


def subset_sequence(registry: LayerRegistry = REFERENCE_16) -> list:
    if registry != REFERENCE_16:
        raise LayerNameError("the canonical subset sequence is defined for the 16-layer registry only")
    return [LayerSubset(registry, frozenset()) if not r else registry.parse_set(r) for r in SUBSET_RANGES]


def growing_subsets(registry: LayerRegistry) -> list:
    """Coarse-to-fine growth for any symmetric registry: empty, bottleneck,
    then one resolution level at a time outwards, ending with all layers."""
    if registry == REFERENCE_16:
        return subset_sequence(registry)
    res = sorted({l.resolution for l in registry})
    out = [LayerSubset(registry, frozenset())]
    for k in range(1, len(res) + 1):
        keep = set(res[:k])
        out.append(LayerSubset(registry, frozenset(i for i, l in enumerate(registry) if l.resolution in keep)))
    return out
