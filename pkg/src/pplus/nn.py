"""Parameter store and optimiser shared by pretraining and inversion."""
from __future__ import annotations

import hashlib
from collections import OrderedDict

import numpy as np

from .tensor import Tensor, leaf


class Params:
    """Ordered name -> leaf tensor map; declaration order is the file order."""

    def __init__(self, rng: np.random.Generator | None = None):
        self._p: OrderedDict[str, Tensor] = OrderedDict()
        self._rng = rng

    def new(self, name: str, shape, init: str = "normal", std: float | None = None) -> Tensor:
        if name in self._p:
            raise KeyError(f"duplicate parameter {name}")
        shape = tuple(shape)
        if init == "zeros":
            arr = np.zeros(shape)
        elif init == "ones":
            arr = np.ones(shape)
        else:
            if std is None:
                fan_in = int(np.prod(shape[1:])) if len(shape) == 4 else shape[0]
                std = 1.0 / np.sqrt(fan_in)
            arr = self._rng.standard_normal(shape) * std
        t = leaf(arr, name=name)
        self._p[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._p[name]

    def __iter__(self):
        return iter(self._p.values())

    def __len__(self):
        return len(self._p)

    def items(self):
        return self._p.items()

    def names(self) -> list:
        return list(self._p)

    def freeze(self):
        for t in self._p.values():
            t.requires_grad = False

    def unfreeze(self):
        for t in self._p.values():
            t.requires_grad = True

    def checksum(self) -> str:
        h = hashlib.sha256()
        for name, t in self._p.items():
            h.update(name.encode())
            h.update(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
        return h.hexdigest()

    def state(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k, v.data.copy()) for k, v in self._p.items())

    def load(self, state):
        for k, arr in state.items():
            t = self._p[k]
            if t.shape != arr.shape:
                raise ValueError(f"{k}: shape {arr.shape} != {t.shape}")
            t.data = np.array(arr, dtype=np.float64)


class Adam:
    """Adam (Kingma & Ba) with bias correction and no weight decay.

    m <- b1 m + (1-b1) g ; v <- b2 v + (1-b2) g^2
    x <- x - lr * m_hat / (sqrt(v_hat) + eps)
    """

    def __init__(self, params, lr: float, betas=(0.9, 0.999), eps: float = 1e-8,
                 clip: float | None = None):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.clip = clip
        self.t = 0
        self.m = [np.zeros(p.shape) for p in self.params]
        self.v = [np.zeros(p.shape) for p in self.params]

    def step(self, grads):
        self.t += 1
        gs = [grads[p].data for p in self.params]
        if self.clip is not None:
            norm = np.sqrt(sum(float((g * g).sum()) for g in gs))
            if norm > self.clip:
                gs = [g * (self.clip / norm) for g in gs]
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, gs, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
