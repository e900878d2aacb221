import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pplus.conditioning import REFERENCE_16, ExtendedPrompt
from pplus.diffusion import checkpoint
from pplus.diffusion.checkpoint import CheckpointError
from pplus.diffusion.config import NoiseSchedule, SamplerConfig, preset
from pplus.diffusion.model import RegistryMismatch, ToyDiffusionModel
from pplus.diffusion.sampling import ddim_sample, timesteps
from pplus.diffusion.training import PretrainConfig, caption_variants, heldout_loss, pretrain
from pplus.nn import Adam, Params
from pplus.synthcorpus import SceneSpec, make_corpus
from pplus.tensor import ShapeError, Tensor, leaf


def test_schedule_monotone():
    s = NoiseSchedule()
    assert s.alpha_bar[0] == 1.0 and len(s.alpha_bar) == s.T + 1
    assert (np.diff(s.alpha_bar) < 0).all() and s.alpha_bar[-1] > 0


def test_forward_noise_closed_form(tiny_model, rng):
    x = rng.standard_normal((2,) + tiny_model.image_shape)
    eps = rng.standard_normal(x.shape)
    t = np.array([1, 700])
    got = tiny_model.forward_noise(x, t, eps)
    ab = tiny_model.schedule.alpha_bar
    for i in range(2):
        np.testing.assert_allclose(got[i], np.sqrt(ab[t[i]]) * x[i] + np.sqrt(1 - ab[t[i]]) * eps[i], atol=1e-15)
    with pytest.raises(ValueError):
        tiny_model.forward_noise(x, np.array([0, 5]), eps)
    with pytest.raises(ShapeError):
        tiny_model.forward_noise(x, t, eps[:1])


@given(st.integers(1, 1000))
def test_timesteps_descend_distinct(steps):
    ts = timesteps(1000, steps)
    assert len(ts) == steps and ts[0] == 1000
    assert (np.diff(ts) < 0).all() and ts[-1] >= 1


def test_reference_preset_builds_16_layers():
    m = ToyDiffusionModel(preset("reference-16"), seed=0)
    assert m.registry == REFERENCE_16 and m.unet.n_attn == 16


def test_predict_noise_shape_and_checks(tiny_model, rng):
    x = rng.standard_normal((2,) + tiny_model.image_shape)
    out = tiny_model.predict_noise(x, 500, tiny_model.spec("red square, solid"))
    assert out.shape == x.shape
    with pytest.raises(ShapeError):
        tiny_model.predict_noise(x[:, :, :8], 500, tiny_model.uncond)
    foreign = ExtendedPrompt.broadcast(tiny_model.spec("red square"), REFERENCE_16)
    with pytest.raises(RegistryMismatch):
        tiny_model.predict_noise(x, 500, foreign)


def test_cfg_identities(tiny_model, rng):
    m = tiny_model
    x = rng.standard_normal((2,) + m.image_shape)
    p = m.prompt("green circle, stripes")
    ec = m.predict_noise(x, 300, p).data
    eu = m.predict_noise(x, 300, m.uncond).data
    assert np.abs(m.cfg_predict(x, 300, p, 1.0) - ec).max() <= 1e-12
    assert np.abs(m.cfg_predict(x, 300, p, 0.0) - eu).max() <= 1e-12
    assert np.abs(m.cfg_predict(x, 300, p, 7.5) - (eu + 7.5 * (ec - eu))).max() <= 1e-12


def test_cfg_hook_sees_conditional_branch_only(tiny_model, rng):
    calls = []
    tiny_model.attention_hook = lambda layer, w: calls.append(layer)
    try:
        tiny_model.cfg_predict(rng.standard_normal((1,) + tiny_model.image_shape), 10,
                               tiny_model.prompt("red square"), 7.5)
    finally:
        tiny_model.attention_hook = None
    assert calls == list(range(5))


def test_sampling_deterministic_and_bounded(tiny_model):
    sc = SamplerConfig(steps=4, guidance=3.0, seed=5)
    a = ddim_sample(tiny_model, tiny_model.prompt("blue cross"), sc, n=2)
    b = ddim_sample(tiny_model, tiny_model.prompt("blue cross"), sc, n=2)
    assert np.array_equal(a, b) and a.shape == (2,) + tiny_model.image_shape
    assert a.min() >= -1 and a.max() <= 1
    c = ddim_sample(tiny_model, tiny_model.prompt("blue cross"), SamplerConfig(steps=4, guidance=3.0, seed=6), n=2)
    assert not np.array_equal(a, c)


def test_broadcast_equals_single_prompt_path(tiny_model):
    sc = SamplerConfig(steps=3, seed=1)
    a = ddim_sample(tiny_model, tiny_model.spec("pink diamond, noise"), sc)
    b = ddim_sample(tiny_model, tiny_model.prompt("pink diamond, noise"), sc)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("bad", [SamplerConfig(steps=0), SamplerConfig(steps=1001), SamplerConfig(guidance=-1)])
def test_sampler_config_validation(tiny_model, bad):
    with pytest.raises(ValueError):
        ddim_sample(tiny_model, tiny_model.uncond, bad)


# -- checkpoints ---------------------------------------------------------------

def test_checkpoint_roundtrip(tiny_model, tmp_path, rng):
    p = tmp_path / "m.ckpt"
    checkpoint.save(tiny_model, p, extra={"note": 1})
    m = checkpoint.load(p)
    assert m.params.checksum() == tiny_model.params.checksum()
    assert m.registry == tiny_model.registry and m.vocab.words == tiny_model.vocab.words
    assert m.extra == {"note": 1}
    assert checkpoint.to_bytes(m, {"note": 1}) == p.read_bytes()
    x = rng.standard_normal((1,) + m.image_shape)
    np.testing.assert_array_equal(m.predict_noise(x, 9, m.uncond).data,
                                  tiny_model.predict_noise(x, 9, tiny_model.uncond).data)


def test_checkpoint_corruption(tiny_model):
    buf = checkpoint.to_bytes(tiny_model)
    with pytest.raises(CheckpointError):
        checkpoint.from_bytes(b"XXXXXX" + buf[6:])
    with pytest.raises(CheckpointError):
        checkpoint.from_bytes(buf + b"\0" * 8)
    with pytest.raises(ValueError):
        checkpoint.from_bytes(buf[:-8])


# -- optimiser and training ----------------------------------------------------

def test_adam_first_steps_match_hand_computation():
    x = leaf(np.array([1.0, -2.0]))
    opt = Adam([x], lr=0.1)
    g = np.array([0.5, -4.0])
    opt.step({x: Tensor(g)})
    # after one step m_hat = g and v_hat = g^2, so the update is lr * sign(g)
    np.testing.assert_allclose(x.data, [0.9, -1.9], atol=1e-7)
    opt.step({x: Tensor(g)})
    np.testing.assert_allclose(x.data, [0.8, -1.8], atol=1e-7)


def test_adam_clip_scales_global_norm():
    x = leaf(np.zeros(2))
    opt = Adam([x], lr=1.0, clip=1.0)
    opt.step({x: Tensor(np.array([30.0, 40.0]))})
    np.testing.assert_allclose(opt.m[0], [0.06, 0.08])


def test_params_checksum_and_state():
    p = Params(np.random.default_rng(0))
    w = p.new("w", (3, 2))
    c = p.checksum()
    s = p.state()
    w.data = w.data + 1
    assert p.checksum() != c
    p.load(s)
    assert p.checksum() == c
    with pytest.raises(KeyError):
        p.new("w", (1,))


def test_caption_variants_cover_orders():
    v = caption_variants(SceneSpec("square", "red", "stripes"))
    assert "red square, stripes" in v and "square, red stripes" in v and "stripes red square" in v


def test_short_pretrain_reduces_loss():
    m = ToyDiffusionModel(preset("micro-5"), seed=3)
    corpus = make_corpus(104, seed=3, size=16, n_min=2)
    before = m.params.checksum()
    res = pretrain(m, corpus, PretrainConfig(steps=40, seed=3, holdout=8))
    assert m.params.checksum() != before
    assert all(np.isfinite(res.losses)) and len(res.losses) == 40
    assert res.ratio < 1.0
    assert not any(t.requires_grad for t in m.params)


def test_shared_checkpoint_heldout_ratio(pretrained):
    # same split pretrain() holds out for corpus seed 0
    corpus = make_corpus(2000, seed=0, size=16)
    hold = np.random.default_rng(0).permutation(2000)[:32]
    caps = [corpus.specs[i].caption for i in hold]
    before = heldout_loss(ToyDiffusionModel(preset("micro-5"), seed=0), corpus.images[hold], caps)
    assert heldout_loss(pretrained, corpus.images[hold], caps) / before < 0.5
