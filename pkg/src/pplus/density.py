"""Gaussian KDE over the natural-token lookup table.

The default model treats dimensions independently: the log-density of ``x``
is the sum over dimensions of ``log mean_e phi_h(x_d - e_d)`` with ``phi_h``
the normalised Gaussian kernel.  ``joint=True`` instead uses one
d-dimensional product kernel, ``log mean_e prod_d phi_h(x_d - e_d)``.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor

BANDWIDTH_FLOOR = 1e-6
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class DensityModel:
    reference: np.ndarray
    bandwidth: np.ndarray
    joint: bool = False

    @property
    def dim(self) -> int:
        return self.reference.shape[1]

    def __len__(self):
        return self.reference.shape[0]


def scott_bandwidth(ref: np.ndarray) -> np.ndarray:
    return len(ref) ** (-0.2) * ref.std(axis=0, ddof=1)


def fit(table, bandwidth="scott", joint: bool = False) -> DensityModel:
    """``table`` is a LookupTable (natural rows are used) or an (|E|, d) array."""
    ref = np.array(getattr(table, "natural", table), dtype=np.float64)
    if ref.ndim != 2 or ref.shape[0] < 2:
        raise ValueError(f"need at least two reference rows, got shape {ref.shape}")
    if isinstance(bandwidth, str):
        if bandwidth != "scott":
            raise ValueError(f"unknown bandwidth policy {bandwidth!r}")
        h = scott_bandwidth(ref)
    else:
        h = np.broadcast_to(np.asarray(bandwidth, dtype=np.float64), (ref.shape[1],)).copy()
    if (h <= 0).any() and not isinstance(bandwidth, str):
        raise ValueError("fixed bandwidths must be positive")
    low = h < BANDWIDTH_FLOOR
    if low.any():
        warnings.warn(f"{int(low.sum())} zero-variance dimension(s); bandwidth floored at {BANDWIDTH_FLOOR}")
        h = np.where(low, BANDWIDTH_FLOOR, h)
    return DensityModel(ref, h, joint)


def _log_kernel(model: DensityModel, x: np.ndarray) -> np.ndarray:
    """(|E|, d) per-dimension log kernel values."""
    z = (x[None, :] - model.reference) / model.bandwidth
    return -0.5 * z * z - np.log(model.bandwidth) - LOG_SQRT_2PI


def _lse(a: np.ndarray, axis: int) -> np.ndarray:
    m = a.max(axis=axis, keepdims=True)
    return (np.log(np.exp(a - m).sum(axis=axis, keepdims=True)) + m).squeeze(axis)


def log_density(model: DensityModel, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.dim,):
        raise ValueError(f"query of shape {x.shape}, expected ({model.dim},)")
    lk = _log_kernel(model, x)
    n = math.log(len(model))
    if model.joint:
        return float(_lse(lk.sum(axis=1), 0) - n)
    return float((_lse(lk, 0) - n).sum())


def log_density_many(model: DensityModel, xs) -> np.ndarray:
    return np.array([log_density(model, x) for x in np.asarray(xs)])


def log_density_tensor(model: DensityModel, x: Tensor) -> Tensor:
    """Differentiable log-density of a (d,) tensor."""
    n, d = model.reference.shape
    diff = T.sub(T.expand(T.reshape(x, (1, d)), (n, d)), Tensor(model.reference))
    coef = np.broadcast_to(-0.5 / model.bandwidth ** 2, (n, d))
    lk = T.mul(T.square(diff), Tensor(coef))
    const = -np.log(model.bandwidth) - LOG_SQRT_2PI
    if model.joint:
        return T.add(T.logsumexp(T.tsum(lk, 1), 0), float(const.sum() - math.log(n)))
    return T.add(T.tsum(T.logsumexp(lk, 0)), float(const.sum() - d * math.log(n)))


# ---------------------------------------------------------------------------
# report

REPORT_FIELDS = ("token_id", "group", "layer", "log_density", "percentile")


@dataclass
class DensityRow:
    token_id: str
    group: str
    layer: str
    log_density: float
    percentile: float


def density_report(model: DensityModel, concepts, token_ids=None) -> list:
    """One row per natural token, then one per optimised embedding.

    Percentile = share of natural tokens whose log-density is at most the row's.
    """
    if not concepts:
        raise ValueError("density_report needs at least one inverted concept")
    nat = log_density_many(model, model.reference)
    srt = np.sort(nat)

    def pct(v):
        return 100.0 * np.searchsorted(srt, v, side="right") / len(srt)

    ids = token_ids if token_ids is not None else [str(i) for i in range(len(nat))]
    rows = [DensityRow(ids[i], "natural", "", float(v), float(pct(v))) for i, v in enumerate(nat)]
    for c in concepts:
        group = c.mode.upper()
        for k, e in enumerate(c.embeddings):
            layer = c.registry[k] if group == "XTI" else ""
            v = log_density(model, e)
            rows.append(DensityRow(f"{c.name}[{k}]", group, layer, v, float(pct(v))))
    return rows


def report_csv(rows) -> str:
    buf = io.StringIO()
    buf.write("# schema: pplus.density/1\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_FIELDS)
    for r in rows:
        w.writerow([r.token_id, r.group, r.layer, repr(r.log_density), repr(r.percentile)])
    return buf.getvalue()


def group_medians(rows) -> dict:
    out: dict = {}
    for r in rows:
        out.setdefault(r.group, []).append(r.log_density)
    return {g: float(np.median(v)) for g, v in out.items()}
