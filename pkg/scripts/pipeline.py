"""Pretrain, invert the held-out concepts, then run every analysis through the CLI.

    python3 scripts/pipeline.py --root runs/demo --steps 8000

Each stage is skipped when its output already exists, so an interrupted run resumes.
"""
import argparse
import os
import sys

from pplus import cli
from pplus.synthcorpus import HELD_OUT


def stage(name, done, argv):
    if os.path.exists(done):
        print(f"[{name}] cached: {done}")
        return
    print(f"[{name}] pplus {' '.join(argv)}")
    code = cli.main(argv)
    if code:
        sys.exit(f"[{name}] failed with exit code {code}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--root", default="runs/pipeline")
    ap.add_argument("--steps", type=int, default=8000, help="pretraining steps")
    ap.add_argument("--invert-steps", type=int, default=300)
    ap.add_argument("--sample-steps", type=int, default=25)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    root = args.root
    seed = ["--seed", str(args.seed)]

    ckpt = os.path.join(root, "pretrain", "model.ckpt")
    stage("pretrain", ckpt, ["pretrain", "--steps", str(args.steps), "--out", os.path.dirname(ckpt)] + seed)

    concepts = {}
    for fam in HELD_OUT:
        for mode in ("ti", "xti"):
            out = os.path.join(root, "invert", f"{mode}-{fam[0]}")
            concepts[mode, fam] = os.path.join(out, "concept.json")
            stage(f"invert {mode} {fam[0]}", concepts[mode, fam],
                  ["invert", "--checkpoint", ckpt, "--concept", ",".join(fam), "--mode", mode,
                   "--steps", str(args.invert_steps), "--out", out] + seed)

    sampler = ["--steps", str(args.sample_steps)]
    jobs = ["--jobs", str(args.jobs)]
    a, b = concepts["xti", HELD_OUT[0]], concepts["xti", HELD_OUT[1]]
    stage("mix", os.path.join(root, "mix", "routing.csv"),
          ["mix", "--checkpoint", ckpt, "--shape-concept", a, "--style-concept", b, "--k", "1", "--K", "4",
           "--n", "4", "--out", os.path.join(root, "mix")] + sampler + seed)
    stage("attn-ratio", os.path.join(root, "attn-ratio", "ratios.csv"),
          ["attn-ratio", "--checkpoint", ckpt, "--out", os.path.join(root, "attn-ratio")] + sampler + jobs + seed)
    stage("subset-sweep", os.path.join(root, "subset-sweep", "sweep.csv"),
          ["subset-sweep", "--checkpoint", ckpt, "--out", os.path.join(root, "subset-sweep")] + sampler + jobs + seed)
    stage("density", os.path.join(root, "density", "density.csv"),
          ["density", "--checkpoint", ckpt, "--concepts", *concepts.values(), "--out", os.path.join(root, "density")])
    for (mode, fam), path in concepts.items():
        stage(f"eval {mode} {fam[0]}", os.path.join(root, "eval", f"{mode}-{fam[0]}", "summary.json"),
              ["eval", "--checkpoint", ckpt, "--concept", path, "--out",
               os.path.join(root, "eval", f"{mode}-{fam[0]}")] + sampler + seed)
    print(f"done: {root}")


if __name__ == "__main__":
    main()
