import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pplus.analysis import (APPEARANCE, OBJECT, AttentionRecord, AttentionRecorder, LabeledPrompt,
                            SubsetSweepReport, SweepRow, ToyEmbedder, attention_ratio, collect, cosine,
                            default_subsets, prompt_bank, ratio_table, span_mass, subject_similarity, sweep_subset,
                            text_similarity, token_labels, toy_prompt_bank)
from pplus.analysis.report import RATIO_COLUMNS, csv_text, ratio_rows, read_csv, write_csv
from pplus.analysis.sweep import DEFAULT_PAIRS, pair_captions
from pplus.conditioning import MICRO_5, REFERENCE_16, LayerId, LayerSubset, default_vocabulary, growing_subsets
from pplus.diffusion.config import SamplerConfig
from pplus.diffusion.sampling import ddim_sample
from pplus.synthcorpus import COLORS, SHAPES, TEXTURES, SceneSpec, make_concept, render

LABELS = ("special", "appearance", "object", "other", "special")


def _recs(registry, obj_fn, app=0.2):
    return [AttentionRecord(i, 1, 0, np.array([0.1, app, obj_fn(l), 0.3, 0.4 - obj_fn(l) - app + 0.2]), LABELS)
            for i, l in enumerate(registry)]


# -- attention ratio fixtures ----------------------------------------------------

def test_equal_mass_gives_ratio_one():
    table = ratio_table(_recs(REFERENCE_16, lambda l: 0.2), REFERENCE_16)
    assert len(table) == 16 and all(abs(v - 1.0) <= 1e-9 for v in table.values())


def test_single_layer_ratio_two():
    bott = LayerId(8, "down", 0)
    table = ratio_table(_recs(REFERENCE_16, lambda l: 0.4 if l == bott else 0.2), REFERENCE_16)
    assert abs(table[str(bott)] - 2.0) <= 1e-9
    assert all(abs(v - 1.0) <= 1e-9 for k, v in table.items() if k != str(bott))


def test_ratio_averages_before_dividing():
    recs = [AttentionRecord(0, t, 0, np.array([0.5, o, a]), ("special", "object", "appearance"))
            for t, (o, a) in enumerate([(0.1, 0.1), (0.3, 0.1)])]
    table = ratio_table(recs, MICRO_5)
    assert abs(table[str(MICRO_5[0])] - 0.2 / 0.1) <= 1e-9
    assert set(table) == {str(MICRO_5[0])}


@given(st.floats(0.01, 1), st.floats(0.01, 1), st.floats(0.1, 10))
def test_ratio_invariant_to_common_scaling(o, a, c):
    r1 = ratio_table([AttentionRecord(0, 0, 0, np.array([o, a]), (OBJECT, APPEARANCE))], MICRO_5)
    r2 = ratio_table([AttentionRecord(0, 0, 0, np.array([o * c, a * c]), (OBJECT, APPEARANCE))], MICRO_5)
    assert r1 == pytest.approx(r2, rel=1e-12)


def test_span_mass_reductions():
    rec = AttentionRecord(0, 0, 0, np.array([0.1, 0.2, 0.3, 0.4]), ("special", "object", "object", "appearance"))
    assert span_mass(rec, OBJECT) == pytest.approx(0.25)
    assert span_mass(rec, OBJECT, "sum") == pytest.approx(0.5)
    with pytest.raises(ValueError):
        span_mass(rec, "missing")
    with pytest.raises(ValueError):
        ratio_table([rec], MICRO_5, reduce="max")


# -- prompts and labels --------------------------------------------------------------

def test_prompt_bank_patterns():
    bank = prompt_bank(["square"], ["red", "stripes"])
    assert [p.text for p in bank] == ["red square", "square, red", "stripes square", "square, stripes"]
    assert len(toy_prompt_bank()) == 2 * len(SHAPES) * (len(COLORS) + len(TEXTURES))


def test_token_labels():
    v = default_vocabulary()
    lab = token_labels(v, LabeledPrompt("square, red", "square", "red", "object, appearance"))
    assert lab[:5] == ("special", OBJECT, "other", APPEARANCE, "special")
    assert token_labels(v, LabeledPrompt("red square", "circle", "red", "appearance object")) is None


def test_default_prompt_bank_tokenizes():
    v = default_vocabulary()
    assert all(token_labels(v, p) is not None for p in prompt_bank())


def test_recorder_on_model(tiny_model):
    p = LabeledPrompt("blue circle", "circle", "blue", "appearance object")
    recs = collect(tiny_model, p, SamplerConfig(steps=3, seed=0), n=2)
    assert len(recs) == 3 * 5 * 2
    for r in recs:
        assert abs(r.masses.sum() - 1.0) < 1e-12 and not r.masses[4:].any()
    assert sorted({r.timestep for r in recs}, reverse=True) == [1000, 500, 1]
    assert {r.sample for r in recs} == {0, 1}


def test_recorder_head_average():
    rec = AttentionRecorder(1, 2, ("object", "appearance"))
    w = np.array([[[1.0, 0.0]], [[0.0, 1.0]]])  # batch 1, two heads, one query
    rec(0, w)
    np.testing.assert_allclose(rec.records[0].masses, [0.5, 0.5])


def test_collect_skips_missing_span(tiny_model):
    with pytest.warns(UserWarning, match="skipped"):
        assert collect(tiny_model, LabeledPrompt("red square", "circle", "red", "x"), SamplerConfig(steps=1)) == []


def test_attention_ratio_report(tiny_model):
    bank = toy_prompt_bank(["square"], ["red"])
    rep = attention_ratio(tiny_model, bank, steps=2)
    assert rep.n_prompts == 2 and set(rep.ratios) == set(MICRO_5.names())
    assert np.isfinite(rep.group_mean(True)) and np.isfinite(rep.group_mean(False))
    rows = ratio_rows(rep)
    assert len(rows) == 5 and rows[0][0] == "(32, 'down', 0)" and rows[0][1] == 32


# -- embedder and similarities -----------------------------------------------------------

def test_embedder_norms_and_text():
    e = ToyEmbedder("orange cross")
    img = render(SceneSpec("circle", "blue", "stripes"), 16)[0]
    assert abs(np.linalg.norm(e.embed_image(img)) - 1) < 1e-12
    assert abs(np.linalg.norm(e.embed_text("a photo of")) - 1) < 1e-12
    assert cosine(e.embed_text("a photo of <token>"), e.embed_text("orange cross")) == pytest.approx(1.0)
    blank = np.broadcast_to(np.array([-1.0, -0.16, -0.1])[:, None, None], (3, 16, 16))
    assert abs(np.linalg.norm(e.embed_image(blank)) - 1) < 1e-12


def test_text_similarity_prefers_true_caption():
    e = ToyEmbedder()
    imgs = make_concept(("square", "red", "solid"), 3, size=32).images
    assert text_similarity(imgs, "red square, solid", e) > text_similarity(imgs, "blue circle, stripes", e)
    assert e.attribute_similarity(imgs[0], "color", "red") > e.attribute_similarity(imgs[0], "color", "blue")
    with pytest.raises(ValueError):
        text_similarity([], "red", e)


def test_subject_similarity():
    e = ToyEmbedder()
    a = make_concept(("square", "red", "solid"), 2, size=32).images
    b = make_concept(("circle", "blue", "stripes"), 2, size=32).images
    assert subject_similarity(a, a, e) > subject_similarity(a, b, e)
    assert subject_similarity(a[:1], a[:1], e) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        subject_similarity([], a, e)


class StubEmbedder:
    def embed_image(self, image):
        return np.array([1.0, 0.0])

    def embed_text(self, text):
        return np.array([1.0, 1.0]) / np.sqrt(2)


def test_similarity_with_stub():
    assert subject_similarity([0, 0], [0], StubEmbedder()) == pytest.approx(1.0)
    assert text_similarity([0], "x", StubEmbedder()) == pytest.approx(1 / np.sqrt(2))


# -- subset sweep -----------------------------------------------------------------------

def test_sweep_boundaries_match_single_prompts(tiny_model):
    subs = growing_subsets(tiny_model.registry)
    pair = DEFAULT_PAIRS[0]
    c1, c2 = pair_captions(pair)
    sc = SamplerConfig(steps=2, guidance=7.5)
    empty = sweep_subset(tiny_model, 0, subs[0], [pair], (0,), sampler=sc)
    full = sweep_subset(tiny_model, 3, subs[-1], [pair], (0,), sampler=sc)
    e = ToyEmbedder()
    i1 = ddim_sample(tiny_model, tiny_model.spec(c1), SamplerConfig(steps=2, seed=0))[0]
    i2 = ddim_sample(tiny_model, tiny_model.spec(c2), SamplerConfig(steps=2, seed=0))[0]
    for rows, img in ((empty, i1), (full, i2)):
        for r, (k, attr) in zip(rows, enumerate(("object", "color", "style"))):
            assert r.attribute == attr
            assert r.sim_p1 == e.attribute_similarity(img, attr, pair[0][k])
            assert r.sim_p2 == e.attribute_similarity(img, attr, pair[1][k])
    assert empty[0].subset == "Empty set"


def test_sweep_report_crossover():
    rows = [SweepRow(0, "a", "object", 1, 0), SweepRow(0, "a", "color", 1, 0),
            SweepRow(1, "b", "object", 0, 1), SweepRow(1, "b", "color", 1, 0),
            SweepRow(2, "c", "object", 0, 1), SweepRow(2, "c", "color", 0, 1)]
    rep = SubsetSweepReport(rows)
    assert rep.crossover("object") == 1 and rep.crossover("color") == 2 and rep.object_before_color
    assert not SubsetSweepReport(rows[:2]).object_before_color
    assert SweepRow(0, "a", "object", float("nan"), float("nan"), True).favors == "missing"


def test_csv_roundtrip(tmp_path):
    p = tmp_path / "r.csv"
    write_csv(p, "pplus.test/1", RATIO_COLUMNS, [("(8, 'down', 0)", 8, 0.1 + 0.2)])
    schema, rows = read_csv(p)
    assert schema == "pplus.test/1" and float(rows[0]["ratio"]) == 0.1 + 0.2
    assert csv_text("s", ("a",), []) == "# schema: s\na\n"
    (tmp_path / "bad.csv").write_text("a\n1\n")
    with pytest.raises(ValueError):
        read_csv(tmp_path / "bad.csv")


def test_reference_subsets_are_nested():
    subs = default_subsets(REFERENCE_16)
    assert len(subs) == 8 and isinstance(subs[0], LayerSubset)
