"""Central finite-difference oracle for the tape's backward rules."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tensor, backward, leaf


class NondeterministicError(RuntimeError):
    pass


def numeric_grad(f: Callable[[Tensor], Tensor], x: np.ndarray, eps: float) -> np.ndarray:
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        fp = f(Tensor(x)).item()
        flat[i] = old - eps
        fm = f(Tensor(x)).item()
        flat[i] = old
        gf[i] = (fp - fm) / (2.0 * eps)
    return g


def analytic_grad(f: Callable[[Tensor], Tensor], x: np.ndarray) -> np.ndarray:
    xt = leaf(x)
    return backward(f(xt))[xt].data


def relative_error(ga: np.ndarray, gn: np.ndarray, norm: str = "vector") -> float:
    """``vector``: ||ga - gn|| / max(||ga||, ||gn||).  ``elementwise``: the
    largest |ga - gn| / max(|ga|, |gn|) over entries where either is nonzero."""
    if norm == "vector":
        scale = max(np.linalg.norm(ga), np.linalg.norm(gn))
        return 0.0 if scale == 0 else float(np.linalg.norm(ga - gn) / scale)
    if norm == "elementwise":
        scale = np.maximum(np.abs(ga), np.abs(gn))
        nz = scale > 0
        return float((np.abs(ga - gn)[nz] / scale[nz]).max()) if nz.any() else 0.0
    raise ValueError(f"unknown norm {norm!r}")


def finite_diff_check(f: Callable[[Tensor], Tensor], x, eps: float = 1e-5, norm: str = "vector") -> float:
    """Relative error between analytic and central-difference gradients of ``f`` at ``x``."""
    if not 0.0 < eps <= 1e-2:
        raise ValueError(f"eps must lie in (0, 1e-2], got {eps}")
    x = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    a, b = f(Tensor(x)).item(), f(Tensor(x)).item()
    if a != b:
        raise NondeterministicError(f"f disagrees with itself: {a!r} vs {b!r}")
    return relative_error(analytic_grad(f, x), numeric_grad(f, x, eps), norm)
