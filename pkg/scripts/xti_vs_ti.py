"""Invert the held-out concepts with TI and XTI at equal budget and compare.

Reports the probe reconstruction loss and toy subject similarity per concept.

    python3 scripts/xti_vs_ti.py --checkpoint runs/pretrain/model.ckpt --steps 300
"""
import argparse
import json
import time

from pplus.analysis.embedding import ToyEmbedder, subject_similarity
from pplus.diffusion import checkpoint
from pplus.diffusion.config import SamplerConfig
from pplus.diffusion.sampling import ddim_sample
from pplus.inversion import InversionConfig, invert
from pplus.synthcorpus import HELD_OUT, make_concept


def compare(model, family, steps, seed=0, count=5, n_samples=8, sampler=SamplerConfig(steps=25, guidance=7.5)):
    data = make_concept(family, count, seed=seed, size=model.cfg.image_size)
    emb = ToyEmbedder(data.description)
    out = {}
    for mode in ("ti", "xti"):
        c = invert(model, data, InversionConfig(mode=mode, steps=steps, seed=seed))
        imgs = ddim_sample(model, c.prompt(model), SamplerConfig(sampler.steps, sampler.guidance, seed), n=n_samples)
        out[mode] = {"probe_loss": c.probe_loss, "final_loss": c.final_loss,
                     "subject_similarity": subject_similarity(imgs, data.images, emb)}
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--checkpoint", required=True)
    ap.add_argument("--steps", type=int, default=300)
    ap.add_argument("--samples", type=int, default=8)
    ap.add_argument("--sample-steps", type=int, default=25)
    ap.add_argument("--guidance", type=float, default=7.5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    model = checkpoint.load(args.checkpoint)
    results = {}
    for fam in HELD_OUT:
        t0 = time.time()
        r = compare(model, fam, args.steps, args.seed, n_samples=args.samples,
                    sampler=SamplerConfig(args.sample_steps, args.guidance))
        results[",".join(fam)] = r
        print(f"{','.join(fam):24s} loss ti {r['ti']['probe_loss']:.5f} xti {r['xti']['probe_loss']:.5f} | "
              f"subject ti {r['ti']['subject_similarity']:.4f} xti {r['xti']['subject_similarity']:.4f} "
              f"({time.time() - t0:.0f}s)")
    print(json.dumps(results, indent=1))


if __name__ == "__main__":
    main()
