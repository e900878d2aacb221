from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..conditioning.layers import LayerId, LayerRegistry


@dataclass(frozen=True)
class Level:
    res: int        # resolution label used in layer names
    width: int      # channels
    n_down: int     # cross-attention layers on the contracting path
    n_up: int       # cross-attention layers on the expansive path


@dataclass(frozen=True)
class UNetConfig:
    """Toy U-net layout.

    ``levels`` run fine to coarse.  Spatial size halves per level starting from
    ``image_size``; resolution labels keep Stable Diffusion's names, so with a
    32 px image the reference preset maps labels 64/32/16/8 to 32/16/8/4 px.
    """

    preset: str
    image_size: int = 32
    channels: int = 3
    levels: tuple = ()
    mid_res: int = 8
    mid_width: int = 32
    text_dim: int = 48
    text_blocks: int = 2
    text_heads: int = 2
    attn_dim: int = 32
    attn_heads: int = 1
    time_dim: int = 32
    groups: int = 4

    def registry(self) -> LayerRegistry:
        down = [LayerId(l.res, "down", i) for l in self.levels for i in range(l.n_down)]
        up = [LayerId(l.res, "up", i) for l in reversed(self.levels) for i in range(l.n_up)]
        return LayerRegistry(down + [LayerId(self.mid_res, "down", 0)] + up)

    def size_map(self) -> dict:
        """Resolution label -> spatial size in pixels."""
        out = {}
        s = self.image_size
        for l in self.levels:
            out[l.res] = s
            s //= 2
        out[self.mid_res] = s
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["levels"] = [asdict(l) for l in self.levels]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "UNetConfig":
        d = dict(d)
        d["levels"] = tuple(Level(**l) for l in d["levels"])
        return cls(**d)


PRESETS = {
    "reference-16": UNetConfig(
        "reference-16", image_size=32,
        levels=(Level(64, 16, 2, 3), Level(32, 24, 2, 3), Level(16, 32, 2, 3)),
        mid_res=8, mid_width=32),
    "micro-5": UNetConfig(
        "micro-5", image_size=16,
        levels=(Level(32, 16, 1, 1), Level(16, 24, 1, 1)),
        mid_res=8, mid_width=32),
}


def preset(name: str, **overrides) -> UNetConfig:
    try:
        base = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    d = base.to_dict()
    d.update(overrides)
    return UNetConfig.from_dict(d)


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear betas; ``alpha_bar[t]`` for t in 1..T, with ``alpha_bar[0] = 1``."""

    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 2e-2
    alpha_bar: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        betas = np.linspace(self.beta_start, self.beta_end, self.T)
        ab = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
        object.__setattr__(self, "alpha_bar", ab)

    def to_dict(self) -> dict:
        return {"T": self.T, "beta_start": self.beta_start, "beta_end": self.beta_end}


@dataclass(frozen=True)
class SamplerConfig:
    steps: int = 50
    guidance: float = 7.5
    seed: int = 0

    def validate(self, T: int):
        if not 1 <= self.steps <= T:
            raise ValueError(f"steps must be in [1, {T}], got {self.steps}")
        if self.guidance < 0:
            raise ValueError(f"guidance must be >= 0, got {self.guidance}")
