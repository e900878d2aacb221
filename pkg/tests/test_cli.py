import json
import os
import subprocess
import sys

import numpy as np
import pytest

from pplus import cli
from pplus.diffusion import checkpoint
from pplus.imageio import load_png
from pplus.inversion import InversionConfig, invert
from pplus.synthcorpus import HELD_OUT, make_concept


@pytest.fixture(scope="module")
def ckpt(tmp_path_factory, tiny_model):
    p = tmp_path_factory.mktemp("cli") / "tiny.ckpt"
    checkpoint.save(tiny_model, p)
    return str(p)


@pytest.fixture(scope="module")
def concepts(tmp_path_factory, tiny_model):
    d = tmp_path_factory.mktemp("concepts")
    out = {}
    for k, fam in enumerate(HELD_OUT[:2]):
        c = invert(tiny_model, make_concept(fam, 2, size=16), InversionConfig(mode="xti", steps=2, batch=2,
                                                                              probe_samples=2))
        c.config["dataset"] = {"family": list(fam), "count": 2, "seed": 0, "size": 16}
        out[k] = str(d / f"c{k}.json")
        c.save(out[k])
    return out


def run(*argv):
    return cli.main([str(a) for a in argv])


def tree(root):
    out = {}
    for base, _, files in os.walk(root):
        for f in files:
            p = os.path.join(base, f)
            with open(p, "rb") as fh:
                out[os.path.relpath(p, root)] = fh.read()
    return out


def test_help_and_unknown_flag(capsys):
    assert run("--help") == 0
    assert "exit codes" in capsys.readouterr().out
    assert run("generate", "--bogus") == 2


def test_missing_checkpoint(tmp_path, capsys):
    assert run("generate", "--checkpoint", tmp_path / "nope.ckpt", "--prompt", "red square", "--out", tmp_path) == 4
    assert capsys.readouterr().err.startswith("error[missing-file]")


def test_oov_prompt(ckpt, tmp_path):
    assert run("generate", "--checkpoint", ckpt, "--prompt", "purple zebra", "--out", tmp_path, "--steps", 2) == 2


def test_corrupt_checkpoint(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"garbage")
    assert run("generate", "--checkpoint", bad, "--prompt", "red square", "--out", tmp_path) == 6


def test_generate_twice_identical(ckpt, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run("generate", "--checkpoint", ckpt, "--prompt", "red square", "--steps", 2, "--n", 2,
                   "--out", d) == 0
    assert tree(a) == tree(b)
    assert load_png(a / "images" / "001.png").shape == (3, 16, 16)


def test_precedence_flags_over_file_over_defaults(tmp_path, monkeypatch):
    cfgp = tmp_path / "c.json"
    cfgp.write_text(json.dumps({"schema_version": 1, "command": "generate", "steps": 7, "cfg": 2.0}))
    monkeypatch.delenv("PPLUS_SEED", raising=False)
    v = cli.resolve("generate", {"config": str(cfgp), "steps": 3})
    assert v["steps"] == 3 and v["cfg"] == 2.0 and v["n"] == 1 and v["seed"] == 0
    monkeypatch.setenv("PPLUS_SEED", "11")
    assert cli.resolve("generate", {})["seed"] == 11
    assert cli.resolve("generate", {"seed": 4})["seed"] == 4


@pytest.mark.parametrize("body,code", [
    ({"schema_version": 2}, 6),
    ({"schema_version": 1, "command": "mix"}, 6),
    ({"schema_version": 1, "stepz": 3}, 6),
])
def test_bad_config_files(tmp_path, body, code):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(body))
    assert run("generate", "--config", p, "--out", tmp_path / "o") == code


def test_config_not_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{")
    assert run("generate", "--config", p, "--out", tmp_path / "o") == 6
    assert run("generate", "--config", tmp_path / "none.json", "--out", tmp_path / "o") == 4


def test_echo_reproduces_run(ckpt, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("invert", "--checkpoint", ckpt, "--steps", 2, "--batch", 2, "--count", 2, "--seed", 3, "--out", a) == 0
    assert run("invert", "--config", a / "config.json", "--out", b) == 0
    assert tree(a) == tree(b)
    echo = json.loads((a / "config.json").read_text())
    assert echo["seed"] == 3 and echo["command"] == "invert" and "out" not in echo


def test_mix_degenerates_to_generate(ckpt, concepts, tmp_path):
    c = concepts[0]
    assert run("mix", "--checkpoint", ckpt, "--shape-concept", c, "--style-concept", c, "--k", 1, "--K", 5,
               "--steps", 2, "--out", tmp_path / "m") == 0
    assert run("generate", "--checkpoint", ckpt, "--concept", c, "--steps", 2, "--out", tmp_path / "g") == 0
    assert (tmp_path / "m/images/000.png").read_bytes() == (tmp_path / "g/images/000.png").read_bytes()


def test_mix_range_and_errors(ckpt, concepts, tmp_path):
    a, b = concepts[0], concepts[1]
    assert run("mix", "--checkpoint", ckpt, "--shape-concept", a, "--style-concept", b,
               "--range", "(16,'down',0)-(16,'up',0)", "--steps", 2, "--out", tmp_path) == 0
    rows = (tmp_path / "routing.csv").read_text().splitlines()[2:]
    assert sum(",shape:" in r for r in rows) == 3
    assert run("mix", "--checkpoint", ckpt, "--shape-concept", a, "--style-concept", b,
               "--range", "(16,'up',0)-(16,'down',0)", "--out", tmp_path) == 3
    assert run("mix", "--checkpoint", ckpt, "--shape-concept", a, "--style-concept", b,
               "--k", 4, "--K", 2, "--out", tmp_path) == 3
    assert run("mix", "--checkpoint", ckpt, "--shape-concept", a, "--style-concept", b, "--out", tmp_path) == 2


def test_bad_concept_file(ckpt, tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{}")
    assert run("generate", "--checkpoint", ckpt, "--concept", p, "--out", tmp_path) == 6


def test_attn_ratio_jobs_equivalent(ckpt, tmp_path):
    for j in (1, 2):
        assert run("attn-ratio", "--checkpoint", ckpt, "--limit", 2, "--steps", 2, "--jobs", j,
                   "--out", tmp_path / str(j)) == 0
    assert (tmp_path / "1/ratios.csv").read_bytes() == (tmp_path / "2/ratios.csv").read_bytes()


def test_density_and_eval(ckpt, concepts, tmp_path):
    assert run("density", "--checkpoint", ckpt, "--concepts", concepts[0], concepts[1], "--out", tmp_path / "d") == 0
    text = (tmp_path / "d/density.csv").read_text().splitlines()
    assert text[0] == "# schema: pplus.density/1" and text[2].startswith("<pad>,natural")
    assert run("density", "--checkpoint", ckpt, "--concepts", concepts[0], "--bandwidth", "x",
               "--out", tmp_path / "d") == 2
    assert run("eval", "--checkpoint", ckpt, "--concept", concepts[0], "--steps", 1, "--out", tmp_path / "e") == 0
    summary = json.loads((tmp_path / "e/summary.json").read_text())
    assert summary["prompts"] == 14 and -1 <= summary["subject_similarity"] <= 1


def test_subset_sweep_and_corpus(ckpt, tmp_path):
    assert run("subset-sweep", "--checkpoint", ckpt, "--seeds", 0, "--steps", 1, "--out", tmp_path / "s") == 0
    rows = (tmp_path / "s/sweep.csv").read_text().splitlines()
    assert len(rows) == 2 + 4 * 3
    assert run("corpus", "--n", 52, "--n-min", 1, "--images", "--out", tmp_path / "c") == 0
    assert len(os.listdir(tmp_path / "c/images")) == 52


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "pplus", "generate", "--checkpoint", str(tmp_path / "x.ckpt"),
                        "--prompt", "red square", "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 4 and "error[missing-file]" in r.stderr
