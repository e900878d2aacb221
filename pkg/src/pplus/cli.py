"""Command-line front end.

Every command writes into its run directory (``--out``) and leaves a
``config.json`` echo there; ``pplus <command> --config <out>/config.json``
reproduces the run.  Values come from flags, then the config file, then the
built-in defaults.  ``PPLUS_SEED`` supplies the seed when neither sets it.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import density, imageio, selftest
from .analysis import attention as attn
from .analysis import report
from .analysis.embedding import ToyEmbedder, subject_similarity, text_similarity
from .analysis.sweep import DEFAULT_PAIRS, SubsetSweepReport, default_subsets, sweep_subset
from .conditioning import LayerNameError, MixSpec, OutOfVocabulary, mix_subset
from .data import read_lines
from .diffusion import checkpoint
from .diffusion.config import PRESETS, SamplerConfig, preset
from .diffusion.model import RegistryMismatch, ToyDiffusionModel
from .diffusion.sampling import ddim_sample
from .diffusion.training import PretrainConfig, pretrain
from .fsutil import atomic_write_text
from .inversion import InversionConfig, InvertedConcept, invert
from .synthcorpus import make_concept, make_corpus

log = logging.getLogger("pplus")

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_RANGE = 3
EXIT_MISSING = 4
EXIT_NUMERIC = 5
EXIT_CONFIG = 6
EXIT_SELFTEST = 7

EXIT_HELP = """exit codes:
  0  success
  1  unexpected error
  2  usage error (unknown flag, bad value, unknown word)
  3  invalid layer range or mixing separators
  4  missing checkpoint, concept or config file
  5  numerical failure (non-finite loss or sample)
  6  invalid config file or checkpoint contents
  7  selftest check failed
"""


class CliError(Exception):
    def __init__(self, code: int, category: str, message: str):
        super().__init__(message)
        self.code = code
        self.category = category


# command -> default values; keys double as the accepted config-file keys
DEFAULTS = {
    "corpus": dict(n=2000, size=16, n_min=20, images=False),
    "pretrain": dict(preset="micro-5", steps=3000, lr=2e-3, batch=8, corpus_n=2000, cond_drop=0.1),
    "invert": dict(checkpoint=None, concept="triangle,pink,stripes", count=5, data_seed=0, mode="xti",
                   single_image=False, reg_lambda=0.0, steps=None, lr=None, batch=8, init="coarse-word",
                   init_word=None),
    "generate": dict(checkpoint=None, prompt=None, concept=None, template="a photo of <token>", steps=50,
                     cfg=7.5, n=1, scale=1),
    "mix": dict(checkpoint=None, shape_concept=None, style_concept=None, k=None, K=None, range=None,
                template="a photo of <token>", steps=50, cfg=7.5, n=1, scale=1),
    "attn-ratio": dict(checkpoint=None, bank="toy", limit=None, seeds=[0], steps=10, cfg=7.5, reduce="mean"),
    "subset-sweep": dict(checkpoint=None, seeds=[0, 1], steps=25, cfg=7.5),
    "density": dict(checkpoint=None, concepts=[], joint=False, bandwidth="scott"),
    "eval": dict(checkpoint=None, concept=None, steps=50, cfg=7.5, n=1),
    "selftest": dict(corpus_n=520, pretrain_steps=150, invert_steps=20, sample_steps=10),
}
# keys that never enter the config echo
_RUNTIME = ("config", "out", "jobs", "verbose")


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON config file (schema_version %d)" % SCHEMA_VERSION)
    p.add_argument("--out", help="run directory (default runs/<command>)")
    p.add_argument("--seed", type=int, help="global seed (fallback: $PPLUS_SEED, then 0)")
    p.add_argument("--jobs", type=int, help="worker processes for fan-out commands")
    p.add_argument("-v", "--verbose", action="store_true")


def _model_arg(p):
    p.add_argument("--checkpoint", help="model checkpoint written by `pretrain`")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pplus", description="Per-layer prompt conditioning toolkit on a toy diffusion model.",
                                 epilog=EXIT_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    def cmd(name, help_):
        p = sub.add_parser(name, help=help_, argument_default=argparse.SUPPRESS, epilog=EXIT_HELP,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        _add_common(p)
        return p

    p = cmd("corpus", "render the synthetic pretraining corpus")
    p.add_argument("--n", type=int)
    p.add_argument("--size", type=int)
    p.add_argument("--n-min", dest="n_min", type=int)
    p.add_argument("--images", action="store_true", help="also write one PNG per image")

    p = cmd("pretrain", "pretrain a toy model on a fresh corpus")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--corpus-n", dest="corpus_n", type=int)
    p.add_argument("--cond-drop", dest="cond_drop", type=float)

    p = cmd("invert", "TI / XTI inversion of a held-out synthetic concept")
    _model_arg(p)
    p.add_argument("--concept", help="shape,color,texture")
    p.add_argument("--count", type=int)
    p.add_argument("--data-seed", dest="data_seed", type=int)
    p.add_argument("--mode", choices=["ti", "xti"])
    p.add_argument("--single-image", dest="single_image", action="store_true")
    p.add_argument("--reg-lambda", dest="reg_lambda", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--init", choices=["coarse-word", "mean-of-table", "zeros"])
    p.add_argument("--init-word", dest="init_word")

    p = cmd("generate", "sample images from a prompt or an inverted concept")
    _model_arg(p)
    p.add_argument("--prompt")
    p.add_argument("--concept", help="concept file written by `invert`")
    p.add_argument("--template")
    p.add_argument("--steps", type=int)
    p.add_argument("--cfg", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--scale", type=int, help="nearest-neighbour upscaling of the PNGs")

    p = cmd("mix", "shape from one concept, appearance from another")
    _model_arg(p)
    p.add_argument("--shape-concept", dest="shape_concept")
    p.add_argument("--style-concept", dest="style_concept")
    p.add_argument("--k", type=int)
    p.add_argument("--K", type=int)
    p.add_argument("--range", help="layers receiving the shape concept, e.g. \"(16,'down',1)-(16,'up',0)\"")
    p.add_argument("--template")
    p.add_argument("--steps", type=int)
    p.add_argument("--cfg", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--scale", type=int)

    p = cmd("attn-ratio", "per-layer object/appearance attention ratios")
    _model_arg(p)
    p.add_argument("--bank", choices=["toy", "words"])
    p.add_argument("--limit", type=int)
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--steps", type=int)
    p.add_argument("--cfg", type=float)
    p.add_argument("--reduce", choices=["mean", "sum"])

    p = cmd("subset-sweep", "attribute similarity along the growing layer subsets")
    _model_arg(p)
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--steps", type=int)
    p.add_argument("--cfg", type=float)

    p = cmd("density", "KDE log-density of natural and inverted token embeddings")
    _model_arg(p)
    p.add_argument("--concepts", nargs="+")
    p.add_argument("--joint", action="store_true")
    p.add_argument("--bandwidth", help="'scott' or a positive number")

    p = cmd("eval", "text and subject similarity over the 14 metric prompts")
    _model_arg(p)
    p.add_argument("--concept")
    p.add_argument("--steps", type=int)
    p.add_argument("--cfg", type=float)
    p.add_argument("--n", type=int)

    p = cmd("selftest", "oracle checks and a miniature end-to-end run")
    p.add_argument("--corpus-n", dest="corpus_n", type=int)
    p.add_argument("--pretrain-steps", dest="pretrain_steps", type=int)
    p.add_argument("--invert-steps", dest="invert_steps", type=int)
    p.add_argument("--sample-steps", dest="sample_steps", type=int)
    return ap


def resolve(command: str, flags: dict) -> dict:
    """flags > config file > defaults; seed falls back to $PPLUS_SEED."""
    vals = dict(DEFAULTS[command])
    path = flags.get("config")
    if path:
        if not os.path.exists(path):
            raise CliError(EXIT_MISSING, "missing-file", f"config file not found: {path}")
        try:
            with open(path) as fh:
                cfg = json.load(fh)
        except json.JSONDecodeError as e:
            raise CliError(EXIT_CONFIG, "invalid-config", f"{path}: {e}")
        if cfg.pop("schema_version", None) != SCHEMA_VERSION:
            raise CliError(EXIT_CONFIG, "invalid-config", f"{path}: schema_version must be {SCHEMA_VERSION}")
        if cfg.pop("command", command) != command:
            raise CliError(EXIT_CONFIG, "invalid-config", f"{path}: written for a different command")
        unknown = set(cfg) - set(vals) - {"seed"}
        if unknown:
            raise CliError(EXIT_CONFIG, "invalid-config", f"{path}: unknown keys {sorted(unknown)}")
        vals.update(cfg)
    vals.update({k: v for k, v in flags.items() if k not in ("command",)})
    if vals.get("seed") is None:
        env = os.environ.get("PPLUS_SEED")
        try:
            vals["seed"] = int(env) if env not in (None, "") else 0
        except ValueError:
            raise CliError(EXIT_USAGE, "usage", f"PPLUS_SEED must be an integer, got {env!r}")
    vals.setdefault("jobs", 1)
    vals.setdefault("out", os.path.join("runs", command))
    return vals


def echo(command: str, vals: dict) -> str:
    body = {k: v for k, v in vals.items() if k not in _RUNTIME}
    return json.dumps({"schema_version": SCHEMA_VERSION, "command": command, **body}, indent=1, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# helpers

def _need(path, what):
    if not path:
        raise CliError(EXIT_MISSING, "missing-file", f"no {what} given")
    if not os.path.exists(path):
        raise CliError(EXIT_MISSING, "missing-file", f"{what} not found: {path}")


_MODELS: dict = {}


def load_model(path) -> ToyDiffusionModel:
    _need(path, "checkpoint")
    key = os.path.abspath(path)
    if key not in _MODELS:
        _MODELS[key] = checkpoint.load(path)
    return _MODELS[key]


_CONCEPTS: dict = {}


def load_concept(path) -> InvertedConcept:
    """Concept files with identical bytes load as one object, so their
    embeddings share tensors (and therefore encodings)."""
    _need(path, "concept file")
    with open(path, "rb") as fh:
        raw = fh.read()
    key = hashlib.sha256(raw).hexdigest()
    if key not in _CONCEPTS:
        try:
            _CONCEPTS[key] = InvertedConcept.loads(raw.decode())
        except (ValueError, KeyError, TypeError) as e:
            raise CliError(EXIT_CONFIG, "invalid-input", f"{path}: {e}")
    return _CONCEPTS[key]


def pmap(fn, items, jobs: int):
    """Order-preserving map, in worker processes when ``jobs > 1``."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def _family(text: str) -> tuple:
    parts = tuple(p.strip() for p in text.split(","))
    if len(parts) != 3:
        raise CliError(EXIT_USAGE, "usage", f"--concept expects shape,color,texture; got {text!r}")
    return parts


def _sampler(vals, seed=None) -> SamplerConfig:
    sc = SamplerConfig(steps=vals["steps"], guidance=vals["cfg"], seed=vals["seed"] if seed is None else seed)
    try:
        sc.validate(1000)
    except ValueError as e:
        raise CliError(EXIT_USAGE, "usage", str(e))
    return sc


def _write_images(out, images, scale) -> list:
    os.makedirs(os.path.join(out, "images"), exist_ok=True)
    names = []
    for k, im in enumerate(images):
        name = os.path.join("images", f"{k:03d}.png")
        imageio.save_png(os.path.join(out, name), im, scale)
        names.append(name)
    return names


def _routing_rows(model, prompt, names, sources) -> list:
    """One row per (image, layer): template text and which embedding fed it."""
    rows = []
    for name in names:
        for i, layer in enumerate(model.registry):
            spec = prompt[i]
            text = " ".join(model.vocab.decode(spec.template))
            rows.append((name, str(layer), text, sources[i]))
    return rows


ROUTING_COLUMNS = ("image", "layer", "prompt", "source")


# ---------------------------------------------------------------------------
# commands

def run_corpus(v):
    c = make_corpus(v["n"], seed=v["seed"], size=v["size"], n_min=v["n_min"])
    paths = None
    if v["images"]:
        paths = _write_images(v["out"], c.images, 1)
    c.write_manifest(os.path.join(v["out"], "manifest.csv"), paths)
    return f"{len(c)} images, {len(c.pair_counts())} shape/color pairs"


def run_pretrain(v):
    cfg = preset(v["preset"])
    model = ToyDiffusionModel(cfg, seed=v["seed"])
    corpus = make_corpus(v["corpus_n"], seed=v["seed"], size=cfg.image_size)
    res = pretrain(model, corpus, PretrainConfig(steps=v["steps"], lr=v["lr"], batch=v["batch"], seed=v["seed"],
                                                 cond_drop=v["cond_drop"]), progress=250)
    checkpoint.save(model, os.path.join(v["out"], "model.ckpt"))
    report.write_csv(os.path.join(v["out"], "losses.csv"), "pplus.pretrain_loss/1", ("step", "loss"),
                     list(enumerate(res.losses)))
    atomic_write_text(os.path.join(v["out"], "heldout.json"), json.dumps(
        {"before": res.heldout_before, "after": res.heldout_after, "ratio": res.ratio}, indent=1, sort_keys=True) + "\n")
    return f"held-out loss {res.heldout_before:.4f} -> {res.heldout_after:.4f}"


def run_invert(v):
    model = load_model(v["checkpoint"])
    fam = _family(v["concept"])
    count = 1 if v["single_image"] else v["count"]
    data = make_concept(fam, count, seed=v["data_seed"], size=model.cfg.image_size)
    cfg = InversionConfig(mode=v["mode"], lr=v["lr"], steps=v["steps"], batch=v["batch"], reg_lambda=v["reg_lambda"],
                          seed=v["seed"], init=v["init"], init_word=v["init_word"], single_image=v["single_image"])
    c = invert(model, data, cfg)
    c.config["dataset"] = {"family": list(fam), "count": count, "seed": v["data_seed"], "size": model.cfg.image_size}
    c.save(os.path.join(v["out"], "concept.json"))
    report.write_csv(os.path.join(v["out"], "losses.csv"), "pplus.invert_loss/1", ("step", "loss"),
                     list(enumerate(c.losses)))
    return f"{c.mode} final loss {c.final_loss:.5f}, probe loss {c.probe_loss:.5f}"


def run_generate(v):
    model = load_model(v["checkpoint"])
    if (v["prompt"] is None) == (v["concept"] is None):
        raise CliError(EXIT_USAGE, "usage", "give exactly one of --prompt and --concept")
    if v["prompt"] is not None:
        prompt = model.prompt(v["prompt"])
        sources = ["prompt"] * len(model.registry)
    else:
        c = load_concept(v["concept"])
        prompt = c.prompt(model, v["template"])
        sources = [f"{c.name}[{0 if c.mode == 'ti' else i}]" for i in range(len(model.registry))]
    images = ddim_sample(model, prompt, _sampler(v), n=v["n"])
    names = _write_images(v["out"], images, v["scale"])
    report.write_csv(os.path.join(v["out"], "routing.csv"), "pplus.routing/1", ROUTING_COLUMNS,
                     _routing_rows(model, prompt, names, sources))
    return f"{len(names)} image(s)"


def run_mix(v):
    model = load_model(v["checkpoint"])
    shape_c, style_c = load_concept(v["shape_concept"]), load_concept(v["style_concept"])
    if v["range"] is not None:
        if v["k"] is not None or v["K"] is not None:
            raise CliError(EXIT_USAGE, "usage", "use either --range or --k/--K")
        subset = model.registry.parse_set(v["range"])
    elif v["k"] is not None and v["K"] is not None:
        subset = MixSpec(v["k"], v["K"]).subset(model.registry)
    else:
        raise CliError(EXIT_USAGE, "usage", "mix needs --range or both --k and --K")
    style_p, shape_p = style_c.prompt(model, v["template"]), shape_c.prompt(model, v["template"])
    prompt = mix_subset(style_p, shape_p, subset)

    def src(c, i):
        return f"{c.name}[{0 if c.mode == 'ti' else i}]"

    sources = [("shape:" + src(shape_c, i)) if i in subset.positions else ("style:" + src(style_c, i))
               for i in range(len(model.registry))]
    images = ddim_sample(model, prompt, _sampler(v), n=v["n"])
    names = _write_images(v["out"], images, v["scale"])
    report.write_csv(os.path.join(v["out"], "routing.csv"), "pplus.routing/1", ROUTING_COLUMNS,
                     _routing_rows(model, prompt, names, sources))
    return f"shape concept on {len(subset)} layer(s): {subset.describe()}"


def _attn_worker(args):
    ckpt, prompt, seeds, steps, cfg = args
    model = load_model(ckpt)
    recs = []
    for s in seeds:
        recs += attn.collect(model, prompt, SamplerConfig(steps=steps, guidance=cfg, seed=s))
    return recs


def run_attn_ratio(v):
    model = load_model(v["checkpoint"])
    bank = attn.toy_prompt_bank() if v["bank"] == "toy" else attn.prompt_bank()
    if v["limit"] is not None:
        bank = bank[:v["limit"]]
    chunks = pmap(_attn_worker, [(v["checkpoint"], p, v["seeds"], v["steps"], v["cfg"]) for p in bank], v["jobs"])
    recs = [r for ch in chunks for r in ch]
    table = attn.ratio_table(recs, model.registry, v["reduce"])
    rep = attn.RatioReport(table, {str(l): l.resolution for l in model.registry}, sum(bool(c) for c in chunks))
    report.write_csv(os.path.join(v["out"], "ratios.csv"), "pplus.attn_ratio/1", report.RATIO_COLUMNS,
                     report.ratio_rows(rep))
    summary = {"coarse_mean": rep.group_mean(True), "fine_mean": rep.group_mean(False),
               "coarse_over_fine": rep.coarse_over_fine, "prompts": rep.n_prompts}
    atomic_write_text(os.path.join(v["out"], "summary.json"), json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return f"coarse {summary['coarse_mean']:.4f} vs fine {summary['fine_mean']:.4f} over {rep.n_prompts} prompts"


def _sweep_worker(args):
    ckpt, idx, seeds, steps, cfg = args
    model = load_model(ckpt)
    sub = default_subsets(model.registry)[idx]
    return sweep_subset(model, idx, sub, DEFAULT_PAIRS, seeds, ToyEmbedder(), SamplerConfig(steps=steps, guidance=cfg))


def run_subset_sweep(v):
    model = load_model(v["checkpoint"])
    n = len(default_subsets(model.registry))
    parts = pmap(_sweep_worker, [(v["checkpoint"], i, v["seeds"], v["steps"], v["cfg"]) for i in range(n)], v["jobs"])
    rep = SubsetSweepReport([r for p in parts for r in p])
    report.write_csv(os.path.join(v["out"], "sweep.csv"), "pplus.subset_sweep/1", report.SWEEP_COLUMNS,
                     report.sweep_rows(rep))
    summary = {"object_crossover": rep.crossover("object"), "color_crossover": rep.crossover("color"),
               "style_crossover": rep.crossover("style"), "object_before_color": rep.object_before_color}
    atomic_write_text(os.path.join(v["out"], "summary.json"), json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return f"crossovers: object {summary['object_crossover']}, color {summary['color_crossover']}"


def run_density(v):
    model = load_model(v["checkpoint"])
    if not v["concepts"]:
        raise CliError(EXIT_USAGE, "usage", "density needs at least one --concepts file")
    bw = v["bandwidth"]
    if bw != "scott":
        try:
            bw = float(bw)
        except ValueError:
            raise CliError(EXIT_USAGE, "usage", f"--bandwidth must be 'scott' or a number, got {bw!r}")
    kde = density.fit(model.encoder.table, bw, joint=v["joint"])
    rows = density.density_report(kde, [load_concept(p) for p in v["concepts"]],
                                   model.vocab.words[:len(kde)])
    atomic_write_text(os.path.join(v["out"], "density.csv"), density.report_csv(rows))
    med = density.group_medians(rows)
    atomic_write_text(os.path.join(v["out"], "summary.json"), json.dumps(med, indent=1, sort_keys=True) + "\n")
    return ", ".join(f"{g} median {m:.3f}" for g, m in sorted(med.items()))


def run_eval(v):
    model = load_model(v["checkpoint"])
    c = load_concept(v["concept"])
    ds = c.config.get("dataset")
    if not ds:
        raise CliError(EXIT_CONFIG, "invalid-input", "concept file has no dataset record")
    refs = make_concept(tuple(ds["family"]), ds["count"], seed=ds["seed"], size=ds["size"])
    emb = ToyEmbedder(refs.description)
    rows, all_imgs = [], []
    for k, tpl in enumerate(read_lines("metric_prompts.txt")):
        imgs = ddim_sample(model, c.prompt(model, tpl), _sampler(v, v["seed"] + k), n=v["n"])
        all_imgs += list(imgs)
        rows.append((tpl, text_similarity(imgs, tpl, emb)))
    subj = subject_similarity(all_imgs, refs.images, emb)
    report.write_csv(os.path.join(v["out"], "eval.csv"), "pplus.eval/1", ("prompt", "text_similarity"), rows)
    summary = {"text_similarity": float(np.mean([r[1] for r in rows])), "subject_similarity": subj,
               "prompts": len(rows)}
    atomic_write_text(os.path.join(v["out"], "summary.json"), json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return f"text {summary['text_similarity']:.4f}, subject {subj:.4f}"


def run_selftest(v):
    cfg = selftest.SelftestConfig(seed=v["seed"], corpus_n=v["corpus_n"], pretrain_steps=v["pretrain_steps"],
                         invert_steps=v["invert_steps"], sample_steps=v["sample_steps"])
    checks = selftest.run(v["out"], cfg, log=log.info)
    failed = [c.name for c in checks if not c.passed]
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name} {c.value!r}")
    if failed:
        raise CliError(EXIT_SELFTEST, "selftest-failed", f"{len(failed)} check(s) failed: {', '.join(failed)}")
    return f"{len(checks)} checks passed"


RUNNERS = {"corpus": run_corpus, "pretrain": run_pretrain, "invert": run_invert, "generate": run_generate,
           "mix": run_mix, "attn-ratio": run_attn_ratio, "subset-sweep": run_subset_sweep, "density": run_density,
           "eval": run_eval, "selftest": run_selftest}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    flags = vars(ns)
    command = flags.pop("command")
    logging.basicConfig(level=logging.INFO if flags.get("verbose") else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        vals = resolve(command, flags)
        os.makedirs(vals["out"], exist_ok=True)
        atomic_write_text(os.path.join(vals["out"], "config.json"), echo(command, vals))
        msg = RUNNERS[command](vals)
    except CliError as e:
        return _fail(e.code, e.category, str(e))
    except LayerNameError as e:
        return _fail(EXIT_RANGE, "invalid-range", str(e))
    except checkpoint.CheckpointError as e:
        return _fail(EXIT_CONFIG, "invalid-input", str(e))
    except FileNotFoundError as e:
        return _fail(EXIT_MISSING, "missing-file", str(e))
    except FloatingPointError as e:
        return _fail(EXIT_NUMERIC, "numerical", str(e))
    except (OutOfVocabulary, RegistryMismatch, ValueError) as e:
        return _fail(EXIT_USAGE, "usage", str(e))
    print(f"{command}: {msg} -> {vals['out']}")
    return EXIT_OK


def _fail(code, category, message) -> int:
    print(f"error[{category}]: {message}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
