import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pplus.synthcorpus import (BACKGROUND, COLORS, HELD_OUT, SHAPES, TEXTURES, SceneSpec, attribute_oracle,
                               make_concept, make_corpus, read_manifest, render)

specs = st.builds(SceneSpec, st.sampled_from(SHAPES), st.sampled_from(COLORS), st.sampled_from(TEXTURES),
                  st.floats(0.4, 0.6), st.floats(0.4, 0.6), st.floats(0.24, 0.3), st.integers(0, 100))


def test_render_range_and_caption():
    img, cap = render(SceneSpec("circle", "blue", "stripes"), 32)
    assert img.shape == (3, 32, 32) and img.min() >= -1 and img.max() <= 1
    assert cap == "blue circle, stripes"
    np.testing.assert_allclose(img[:, 0, 0], 2 * BACKGROUND - 1)


def test_invalid_scene_rejected():
    with pytest.raises(ValueError):
        SceneSpec("hexagon", "red")


@given(specs)
def test_oracle_recovers_rendered_attributes(spec):
    img, _ = render(spec, 32)
    r = attribute_oracle(img)
    assert r.shape == spec.shape and r.color == spec.color
    assert 0 <= r.shape_conf <= 1 and 0 <= r.color_conf <= 1


@pytest.mark.parametrize("texture", [t for t in TEXTURES])
def test_oracle_texture(texture):
    r = attribute_oracle(render(SceneSpec("square", "green", texture, scale=0.3), 32)[0])
    assert r.texture == texture


def test_oracle_empty_image():
    r = attribute_oracle(np.broadcast_to((2 * BACKGROUND - 1)[:, None, None], (3, 16, 16)))
    assert r.labels == (None, None, None) and r.shape_conf == 0.0


def test_corpus_coverage_and_exclusion():
    c = make_corpus(520, seed=1, size=16, n_min=10)
    counts = c.pair_counts()
    held = {(s, col) for s, col, _ in HELD_OUT}
    assert not held & set(counts)
    assert min(counts.values()) >= 10
    assert len(counts) == len(SHAPES) * len(COLORS) - len(held)
    with pytest.raises(ValueError):
        make_corpus(100, n_min=10)


def test_corpus_deterministic():
    a, b = make_corpus(104, seed=4, size=16, n_min=2), make_corpus(104, seed=4, size=16, n_min=2)
    assert np.array_equal(a.images, b.images) and a.specs == b.specs


def test_manifest_roundtrip(tmp_path):
    c = make_corpus(52, seed=2, size=16, n_min=1)
    p = tmp_path / "m.csv"
    c.write_manifest(p)
    assert read_manifest(p) == c.specs


def test_concept_dataset():
    d = make_concept(HELD_OUT[1], 4, seed=0, size=16)
    assert len(d) == 4 and d.images.shape == (4, 3, 16, 16)
    assert d.description == "orange cross, solid"
    assert {s.shape for s in d.specs} == {"cross"}
    with pytest.raises(ValueError):
        make_concept(HELD_OUT[1], 7)
