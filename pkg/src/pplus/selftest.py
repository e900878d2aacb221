"""Self-contained oracle checks plus a miniature end-to-end run.

Everything is seeded, single-process and free of timestamps, so two runs
with the same settings write byte-identical artifacts.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass

import numpy as np

from . import density, imageio
from . import tensor as T
from .analysis.attention import AttentionRecord, ratio_table
from .analysis.report import csv_text
from .conditioning import LayerId, MixSpec, mix_extended
from .conditioning.layers import REFERENCE_16, subset_sequence
from .diffusion import checkpoint
from .diffusion.config import SamplerConfig, preset
from .diffusion.model import ToyDiffusionModel
from .diffusion.sampling import ddim_sample
from .diffusion.training import PretrainConfig, pretrain
from .fsutil import atomic_write_text
from .gradcheck import finite_diff_check
from .inversion import InversionConfig, invert, loss_xti, sample_batch
from .synthcorpus import HELD_OUT, make_concept, make_corpus
from .tensor import Tensor

GOLDEN_SUBSETS = (
    "Empty set",
    "Layer (8, 'down', 0) only",
    "(16, 'down', 1) - (8, 'down', 0)",
    "(16, 'down', 1) - (16, 'up', 0)",
    "(16, 'down', 0) - (16, 'up', 0)",
    "(16, 'down', 0) - (16, 'up', 1)",
    "(16, 'down', 0) - (16, 'up', 2)",
    "(64, 'down', 0) - (64, 'up', 2)",
)


@dataclass
class SelftestConfig:
    seed: int = 0
    corpus_n: int = 520
    pretrain_steps: int = 150
    invert_steps: int = 20
    sample_steps: int = 10
    grad_tol: float = 1e-6


@dataclass
class Check:
    name: str
    passed: bool
    value: float


def _routing() -> list:
    got = tuple(s.describe() for s in subset_sequence(REFERENCE_16))
    names = REFERENCE_16.names()
    rt = all(str(LayerId.parse(n)) == n for n in names)
    a = len(REFERENCE_16.parse_set("(16,'down',1)-(16,'up',0)"))
    b = len(REFERENCE_16.parse_set("(8,'down',0),(16,'up',0)"))
    return [Check("routing.subset_sequence", got == GOLDEN_SUBSETS, float(sum(x == y for x, y in zip(got, GOLDEN_SUBSETS)))),
            Check("routing.name_roundtrip", rt and len(names) == 16, float(len(names))),
            Check("routing.range_3", a == 3, float(a)),
            Check("routing.list_2", b == 2, float(b))]


def _kde(rng) -> list:
    E = rng.standard_normal((100, 8))
    model = density.fit(E)
    h = model.bandwidth
    err = 0.0
    for _ in range(20):
        x = rng.standard_normal(8)
        direct = 0.0
        for d in range(8):
            k = np.exp(-0.5 * ((x[d] - E[:, d]) / h[d]) ** 2) / (h[d] * math.sqrt(2 * math.pi))
            direct += math.log(k.mean())
        err = max(err, abs(density.log_density(model, x) - direct))
    shift = rng.standard_normal(8) * 3
    x = rng.standard_normal(8)
    moved = density.DensityModel(E + shift, h)
    trans = abs(density.log_density(moved, x + shift) - density.log_density(model, x))
    one = density.fit(np.array([[0.7], [0.7]]), bandwidth=0.3)
    single = abs(density.log_density(one, [0.7]) + math.log(0.3 * math.sqrt(2 * math.pi)))
    return [Check("kde.brute_force", err <= 1e-12, err), Check("kde.translation", trans <= 1e-10, trans),
            Check("kde.single_point", single <= 1e-12, single)]


def _attention_fixture() -> list:
    labels = ("special", "appearance", "object", "special")
    recs = []
    for i, layer in enumerate(REFERENCE_16):
        obj = 0.4 if layer == LayerId(8, "down", 0) else 0.2
        recs.append(AttentionRecord(i, 1, 0, np.array([0.3, 0.2, obj, 0.5 - obj]), labels))
    table = ratio_table(recs, REFERENCE_16)
    want = {str(l): (2.0 if l == LayerId(8, "down", 0) else 1.0) for l in REFERENCE_16}
    err = max(abs(table[k] - v) for k, v in want.items())
    return [Check("attention.fixture", err <= 1e-9, err)]


def _gradients(model: ToyDiffusionModel, rng, tol: float) -> list:
    out = []
    x = rng.standard_normal((2, 3))
    c = rng.standard_normal((2, 3))
    for name, f in (("silu", lambda t: T.tsum(T.mul(T.silu(t), Tensor(c)))),
                    ("softmax", lambda t: T.tsum(T.mul(T.softmax(t), Tensor(c)))),
                    ("logsumexp", lambda t: T.tsum(T.logsumexp(t, 1)))):
        e = finite_diff_check(f, x)
        out.append(Check(f"grad.{name}", e < tol, e))
    batch = sample_batch(model, make_concept(HELD_OUT[0], 2, 0, model.cfg.image_size).images,
                         [model.vocab.tokenize("a photo of <token>")], 2, rng)
    base = [rng.standard_normal(model.cfg.text_dim) * 0.5 for _ in model.registry]
    for i in range(len(base)):
        def f(e, i=i):
            es = [Tensor(b) for b in base]
            es[i] = e
            return loss_xti(model, batch, es)
        err = finite_diff_check(f, base[i])
        out.append(Check(f"grad.l_xti.e{i}", err < tol, err))
    return out


def _cfg(model: ToyDiffusionModel, rng) -> list:
    x = rng.standard_normal((2,) + model.image_shape)
    p = model.prompt("red square, solid")
    ec = model.predict_noise(x, 400, p).data
    eu = model.predict_noise(x, 400, model.uncond).data
    e1 = np.abs(model.cfg_predict(x, 400, p, 1.0) - ec).max()
    e0 = np.abs(model.cfg_predict(x, 400, p, 0.0) - eu).max()
    e7 = np.abs(model.cfg_predict(x, 400, p, 7.5) - (eu + 7.5 * (ec - eu))).max()
    return [Check("cfg.w1", bool(e1 <= 1e-12), float(e1)), Check("cfg.w0", bool(e0 <= 1e-12), float(e0)),
            Check("cfg.w7.5", bool(e7 <= 1e-12), float(e7))]


def _degeneracy(model: ToyDiffusionModel, steps: int) -> list:
    out = []
    for k, text in enumerate(("blue circle, stripes", "green cross, checker")):
        sc = SamplerConfig(steps=steps, guidance=7.5, seed=k)
        a = ddim_sample(model, model.spec(text), sc)
        b = ddim_sample(model, model.prompt(text), sc)
        out.append(Check(f"degeneracy.broadcast.{k}", bool(np.array_equal(a, b)), float(np.abs(a - b).max())))
    p = model.prompt("red square, solid")
    m = mix_extended(p, p, MixSpec(1, len(model.registry)))
    sc = SamplerConfig(steps=steps, guidance=7.5, seed=3)
    a, b = ddim_sample(model, p, sc), ddim_sample(model, m, sc)
    out.append(Check("degeneracy.mix_self", bool(np.array_equal(a, b)), float(np.abs(a - b).max())))
    return out


def run(out_dir, cfg: SelftestConfig = SelftestConfig(), log=None) -> list:
    """Run all checks, write artifacts under ``out_dir`` and return the checks."""
    os.makedirs(out_dir, exist_ok=True)
    say = log or (lambda msg: None)
    rng = np.random.default_rng(cfg.seed)
    checks = _routing() + _kde(rng) + _attention_fixture()
    say("routing, density and attention fixtures done")

    model = ToyDiffusionModel(preset("micro-5"), seed=cfg.seed)
    model.freeze()
    checks += _gradients(model, rng, cfg.grad_tol)
    checks += _cfg(model, rng)
    say("gradient and guidance checks done")

    corpus = make_corpus(cfg.corpus_n, seed=cfg.seed, size=model.cfg.image_size, n_min=cfg.corpus_n // 52)
    res = pretrain(model, corpus, PretrainConfig(steps=cfg.pretrain_steps, seed=cfg.seed, holdout=16))
    checks.append(Check("pretrain.heldout_ratio", res.ratio < 1.0, res.ratio))
    checkpoint.save(model, os.path.join(out_dir, "model.ckpt"))
    checks += _degeneracy(model, cfg.sample_steps)
    say("pretraining and degeneracy checks done")

    before = model.params.checksum()
    data = make_concept(HELD_OUT[0], 4, seed=cfg.seed, size=model.cfg.image_size)
    concepts = []
    for mode in ("ti", "xti"):
        c = invert(model, data, InversionConfig(mode=mode, steps=cfg.invert_steps, seed=cfg.seed))
        c.save(os.path.join(out_dir, f"concept_{mode}.json"))
        concepts.append(c)
    checks.append(Check("invert.frozen_checksum", model.params.checksum() == before, 0.0))
    kde = density.fit(model.encoder.table)
    atomic_write_text(os.path.join(out_dir, "density.csv"),
                      density.report_csv(density.density_report(kde, concepts)))
    img = ddim_sample(model, concepts[1].prompt(model), SamplerConfig(steps=cfg.sample_steps, seed=cfg.seed))[0]
    imageio.save_png(os.path.join(out_dir, "sample.png"), img)
    say("inversion, density and sampling done")

    rows = [(c.name, "pass" if c.passed else "FAIL", c.value) for c in checks]
    atomic_write_text(os.path.join(out_dir, "checks.csv"), csv_text("pplus.selftest/1", ("check", "status", "value"), rows))
    atomic_write_text(os.path.join(out_dir, "selftest_config.json"), json.dumps(asdict(cfg), indent=1, sort_keys=True) + "\n")
    return checks
