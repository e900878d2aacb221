"""Deterministic DDIM (eta = 0) sampling with classifier-free guidance."""
from __future__ import annotations

import numpy as np

from .config import SamplerConfig
from .model import ToyDiffusionModel


class SamplingDiverged(FloatingPointError):
    def __init__(self, step):
        super().__init__(f"non-finite sample at step {step}")
        self.step = step


def timesteps(T: int, steps: int) -> np.ndarray:
    """Descending, distinct timesteps from T down to 1."""
    if steps == 1:
        return np.array([T])
    return np.round(np.linspace(T, 1, steps)).astype(int)


def ddim_sample(model: ToyDiffusionModel, prompt, cfg: SamplerConfig = SamplerConfig(), n: int = 1,
                return_trajectory: bool = False):
    """Images in [-1, 1] of shape (n, C, H, W); clamped only after the last step."""
    cfg.validate(model.schedule.T)
    ab = model.schedule.alpha_bar
    rng = np.random.default_rng(cfg.seed)
    x = rng.standard_normal((n,) + model.image_shape)
    ts = timesteps(model.schedule.T, cfg.steps)
    traj = []
    for k, t in enumerate(ts):
        t_prev = ts[k + 1] if k + 1 < len(ts) else 0
        eps = model.cfg_predict(x, np.full(n, t), prompt, cfg.guidance)
        x0 = (x - np.sqrt(1.0 - ab[t]) * eps) / np.sqrt(ab[t])
        x = np.sqrt(ab[t_prev]) * x0 + np.sqrt(1.0 - ab[t_prev]) * eps
        if not np.isfinite(x).all():
            raise SamplingDiverged(k)
        if return_trajectory:
            traj.append(x.copy())
    out = np.clip(x, -1.0, 1.0)
    return (out, traj) if return_trajectory else out
