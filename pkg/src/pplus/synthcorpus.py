"""Procedural captioned shapes and an exact attribute oracle for them.

Every foreground pixel of a render lies on the segment between the colour's
primary tone and its secondary tone (the primary pulled 45% toward the
background).  Textures only choose a position along that segment, which is
what lets the oracle recover colour and texture exactly from noiseless renders.
"""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass

import numpy as np

from . import data
from .fsutil import atomic_write_text

SHAPES = tuple(data.read_lines("shapes.txt"))
TEXTURES = tuple(data.read_lines("textures.txt"))
COLORS = tuple(data.read_lines("colors.txt"))

BACKGROUND = np.array([0.0, 0.42, 0.45])
PALETTE = {
    "black": (0.0, 0.0, 0.0), "blue": (0.1, 0.2, 0.95), "brown": (0.55, 0.3, 0.08),
    "gray": (0.5, 0.5, 0.5), "green": (0.15, 0.85, 0.1), "orange": (1.0, 0.55, 0.0),
    "pink": (1.0, 0.6, 0.78), "purple": (0.55, 0.1, 0.7), "red": (0.92, 0.08, 0.1),
    "white": (1.0, 1.0, 1.0), "yellow": (1.0, 0.95, 0.1),
}
SECONDARY_PULL = 0.45
NOISE_STD = 0.05
FG_THRESHOLD = 0.1
TONE_TOL = 0.15
SCALE_RANGE = (0.22, 0.32)
CENTER_RANGE = (0.36, 0.64)

HELD_OUT = (("triangle", "pink", "stripes"), ("cross", "orange", "solid"), ("circle", "purple", "checker"))


def primary(color: str) -> np.ndarray:
    return np.array(PALETTE[color])


def secondary(color: str) -> np.ndarray:
    c = primary(color)
    return c + SECONDARY_PULL * (BACKGROUND - c)


@dataclass(frozen=True)
class SceneSpec:
    shape: str
    color: str
    texture: str = "solid"
    cx: float = 0.5
    cy: float = 0.5
    scale: float = 0.27
    seed: int = 0

    def __post_init__(self):
        if self.shape not in SHAPES or self.color not in PALETTE or self.texture not in TEXTURES:
            raise ValueError(f"invalid scene {self}")

    @property
    def caption(self) -> str:
        return f"{self.color} {self.shape}, {self.texture}"


def shape_mask(shape: str, cx: float, cy: float, s: float, size: int) -> np.ndarray:
    v, u = (np.mgrid[0:size, 0:size] + 0.5) / size
    dx, dy = u - cx, v - cy
    if shape == "square":
        return (np.abs(dx) <= s) & (np.abs(dy) <= s)
    if shape == "circle":
        return dx * dx + dy * dy <= s * s
    if shape == "diamond":
        return np.abs(dx) + np.abs(dy) <= 1.3 * s
    if shape == "triangle":
        return (dy >= -s) & (dy <= s) & (np.abs(dx) <= (dy + s) / 2.0 * 1.1)
    if shape == "cross":
        arm = s / 2.5
        return ((np.abs(dx) <= arm) & (np.abs(dy) <= s)) | ((np.abs(dy) <= arm) & (np.abs(dx) <= s))
    raise ValueError(shape)


def texture_position(texture: str, mask: np.ndarray) -> np.ndarray:
    """Position along the primary->secondary segment for every pixel."""
    size = mask.shape[0]
    i, j = np.mgrid[0:size, 0:size]
    if texture in ("solid", "noise"):
        return np.zeros(mask.shape)
    if texture == "stripes":
        return ((i // 2) % 2).astype(float)
    if texture == "checker":
        return ((i // 2 + j // 2) % 2).astype(float)
    if texture == "gradient":
        cols = np.flatnonzero(mask.any(axis=0))
        j0, j1 = (cols[0], cols[-1]) if cols.size else (0, size - 1)
        return np.clip((j - j0) / max(j1 - j0, 1), 0.0, 1.0)
    raise ValueError(texture)


def render(spec: SceneSpec, size: int = 32) -> tuple:
    """(image (3, size, size) in [-1, 1], caption)."""
    mask = shape_mask(spec.shape, spec.cx, spec.cy, spec.scale, size)
    c, s2 = primary(spec.color), secondary(spec.color)
    pos = texture_position(spec.texture, mask)[..., None]
    fg = c + pos * (s2 - c)
    if spec.texture == "noise":
        rng = np.random.default_rng(spec.seed)
        fg = np.clip(fg + rng.normal(0.0, NOISE_STD, fg.shape), 0.0, 1.0)
    rgb = np.where(mask[..., None], fg, BACKGROUND)
    return (2.0 * rgb - 1.0).transpose(2, 0, 1), spec.caption


# ---------------------------------------------------------------------------
# corpus

def jitter(rng: np.random.Generator, shape, color, texture) -> SceneSpec:
    return SceneSpec(shape, color, texture,
                     cx=float(rng.uniform(*CENTER_RANGE)), cy=float(rng.uniform(*CENTER_RANGE)),
                     scale=float(rng.uniform(*SCALE_RANGE)), seed=int(rng.integers(2**31)))


@dataclass
class Corpus:
    specs: list
    images: np.ndarray
    size: int

    @property
    def captions(self) -> list:
        return [s.caption for s in self.specs]

    def __len__(self):
        return len(self.specs)

    def pair_counts(self) -> dict:
        out: dict = {}
        for s in self.specs:
            out[(s.shape, s.color)] = out.get((s.shape, s.color), 0) + 1
        return out

    def write_manifest(self, path, image_paths=None):
        fields = list(SceneSpec.__dataclass_fields__) + ["caption", "file"]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(fields)
        for k, s in enumerate(self.specs):
            row = asdict(s)
            w.writerow([row[f] for f in fields[:-2]] + [s.caption, image_paths[k] if image_paths else ""])
        atomic_write_text(path, buf.getvalue())


def read_manifest(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [SceneSpec(r["shape"], r["color"], r["texture"], float(r["cx"]), float(r["cy"]),
                      float(r["scale"]), int(r["seed"])) for r in rows]


def make_corpus(n: int, seed: int = 0, size: int = 32, exclude=HELD_OUT, n_min: int = 20) -> Corpus:
    """Round-robin over allowed (shape, color) pairs, random texture and pose."""
    banned = {(s, c) for s, c, *_ in exclude}
    pairs = [(s, c) for s in SHAPES for c in COLORS if (s, c) not in banned]
    if n < n_min * len(pairs):
        raise ValueError(f"{n} images cannot cover {len(pairs)} pairs {n_min} times each")
    rng = np.random.default_rng(seed)
    specs = []
    for k in range(n):
        s, c = pairs[k % len(pairs)]
        specs.append(jitter(rng, s, c, TEXTURES[int(rng.integers(len(TEXTURES)))]))
    images = np.stack([render(sp, size)[0] for sp in specs])
    return Corpus(specs, images, size)


@dataclass
class ConceptDataset:
    name: str
    specs: list
    images: np.ndarray

    def __post_init__(self):
        if not len(self.specs):
            raise ValueError("concept dataset is empty")
        if len({im.shape for im in self.images}) != 1:
            raise ValueError("concept images differ in size")

    def __len__(self):
        return len(self.specs)

    @property
    def description(self) -> str:
        s = self.specs[0]
        return f"{s.color} {s.shape}, {s.texture}"


def make_concept(family, count: int = 5, seed: int = 0, size: int = 32) -> ConceptDataset:
    """``family`` = (shape, color, texture); renders share those, pose is jittered."""
    if not 1 <= count <= 6:
        raise ValueError(f"count must be in [1, 6], got {count}")
    shape, color, texture = family
    rng = np.random.default_rng(seed)
    specs = [jitter(rng, shape, color, texture) for _ in range(count)]
    return ConceptDataset(f"{color}_{shape}_{texture}", specs, np.stack([render(s, size)[0] for s in specs]))


# ---------------------------------------------------------------------------
# oracle

@dataclass
class OracleResult:
    shape: str | None
    color: str | None
    texture: str | None
    shape_conf: float
    color_conf: float
    texture_conf: float
    shape_scores: np.ndarray
    color_scores: np.ndarray
    texture_scores: np.ndarray

    @property
    def labels(self) -> tuple:
        return self.shape, self.color, self.texture


def _segment_distance(px: np.ndarray, a: np.ndarray, b: np.ndarray):
    d = b - a
    u = np.clip(((px - a) @ d) / (d @ d), 0.0, 1.0)
    r = np.linalg.norm(px - (a + u[:, None] * d), axis=1)
    return r, u


_EXTENT = {"square": 1.0, "circle": 1.0, "cross": 1.0, "diamond": 1.3, "triangle": 1.0}


def _best_iou(fg: np.ndarray) -> np.ndarray:
    """Best IoU per shape over poses fitted around the mask's bounding box."""
    size = fg.shape[0]
    rows, cols = np.flatnonzero(fg.any(axis=1)), np.flatnonzero(fg.any(axis=0))
    cx = (cols[0] + cols[-1] + 1) / 2.0 / size
    cy = (rows[0] + rows[-1] + 1) / 2.0 / size
    half = max(cols[-1] - cols[0] + 1, rows[-1] - rows[0] + 1) / 2.0 / size
    f = fg.ravel().astype(float)
    offs = np.array([-0.5, 0.0, 0.5]) / size
    out = np.zeros(len(SHAPES))
    for k, sh in enumerate(SHAPES):
        s0 = half / _EXTENT[sh]
        cands = np.array([shape_mask(sh, cx + ox, cy + oy, s0 + ds, size).ravel()
                          for ox in offs for oy in offs
                          for ds in np.linspace(-1.5, 1.5, 13) / size], dtype=float)
        inter = cands @ f
        out[k] = (inter / (cands.sum(axis=1) + f.sum() - inter)).max()
    return out


def attribute_oracle(image: np.ndarray) -> OracleResult:
    """Shape, colour and texture labels with confidences in [0, 1]."""
    rgb = np.clip((np.asarray(image, dtype=np.float64) + 1.0) / 2.0, 0.0, 1.0).transpose(1, 2, 0)
    size = rgb.shape[0]
    fg = np.linalg.norm(rgb - BACKGROUND, axis=2) > FG_THRESHOLD
    nS, nC, nT = len(SHAPES), len(COLORS), len(TEXTURES)
    if not fg.any():
        z = np.zeros
        return OracleResult(None, None, None, 0.0, 0.0, 0.0, z(nS), z(nC), z(nT))
    px = rgb[fg]
    dist = np.empty((px.shape[0], nC))
    upos = np.empty_like(dist)
    for k, c in enumerate(COLORS):
        dist[:, k], upos[:, k] = _segment_distance(px, primary(c), secondary(c))
    near = dist.argmin(axis=1)
    ok = dist[np.arange(len(px)), near] <= TONE_TOL
    color_scores = np.array([np.mean((near == k) & ok) for k in range(nC)])
    ci = int(color_scores.argmax())
    consistency = float(color_scores[ci])

    # shape: best IoU against a bank of poses, 0.9 IoU counts as certain
    best = _best_iou(fg)
    shape_scores = np.minimum(1.0, best / 0.9) * consistency
    si = int(best.argmax())

    # texture: compare the observed segment position with each pattern
    u = np.zeros(fg.shape)
    u[fg] = upos[:, ci]
    errs = {}
    for tx in TEXTURES:
        if tx == "noise":
            continue
        pred = texture_position(tx, fg)
        errs[tx] = float(np.abs(u - pred)[fg].mean())
    dev = float(np.linalg.norm(px - primary(COLORS[ci]), axis=1).mean())
    texture_scores = np.zeros(nT)
    for k, tx in enumerate(TEXTURES):
        e = errs.get(tx, errs["solid"])
        fit = max(0.0, 1.0 - e / 0.5)
        if tx == "solid":
            fit *= 1.0 if dev <= 0.02 else max(0.0, 1.0 - (dev - 0.02) / 0.03)
        elif tx == "noise":
            fit *= min(1.0, max(0.0, (dev - 0.02) / 0.03))
        texture_scores[k] = fit * consistency
    ti = int(texture_scores.argmax())
    return OracleResult(SHAPES[si], COLORS[ci], TEXTURES[ti],
                        float(shape_scores[si]), consistency, float(texture_scores[ti]),
                        shape_scores, color_scores, texture_scores)
