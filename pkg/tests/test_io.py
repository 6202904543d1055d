"""PNM codec, run configuration text form and checkpoint container."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from diverse_inpaint import pnm
from diverse_inpaint.checkpoint import CheckpointError, load_checkpoint, save_checkpoint, state_to_bytes
from diverse_inpaint.config import RunConfig, parse_kv
from diverse_inpaint.masks import generate_irregular_mask, hard_diversity_map
from diverse_inpaint.network import GeneratorState

TINY = dict(image_size=16, base_size=4, stage_channels=(4, 4, 3), n_schedule=(2, 4, 4), hidden=4,
            latent_dim=8, disc_channels=(4, 4, 4, 4))


# -- pnm ---------------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(1, 20), st.integers(1, 20))))
def test_pgm_round_trip(tmp_path_factory, g):
    p = tmp_path_factory.mktemp("pgm") / "x.pgm"
    pnm.write_pgm(p, g)
    assert np.array_equal(pnm.read_pgm(p), g)


def test_ppm_round_trip_and_comment_header(tmp_path, rng):
    a = rng.integers(0, 256, size=(5, 7, 3), dtype=np.uint8)
    p = tmp_path / "x.ppm"
    pnm.write_ppm(p, a)
    assert np.array_equal(pnm.read_ppm(p), a)
    p.write_bytes(b"P6\n# made by hand\n7 5\n255\n" + a.tobytes())
    assert np.array_equal(pnm.read_ppm(p), a)


def test_pnm_rejects_wrong_magic_and_depth(tmp_path):
    p = tmp_path / "x.pgm"
    p.write_bytes(b"P2\n1 1\n255\n0")
    with pytest.raises(ValueError):
        pnm.read_pgm(p)
    p.write_bytes(b"P5\n1 1\n65535\n\0\0")
    with pytest.raises(ValueError):
        pnm.read_pgm(p)


def test_mask_file_convention(tmp_path):
    m = generate_irregular_mask(16, 16, "20-30", 1)
    p = tmp_path / "m.pgm"
    pnm.write_mask(p, m)
    raw = pnm.read_pgm(p)
    assert set(np.unique(raw)) == {0, 255}
    assert np.array_equal(raw == 255, m == 1)
    assert np.array_equal(pnm.read_mask(p), m)


def test_hard_map_levels_survive_8bit_codec(tmp_path):
    m = np.ones((32, 32), dtype=np.uint8)
    m[4:28, 4:28] = 0
    d = hard_diversity_map(m, 4)
    p = tmp_path / "d.pgm"
    pnm.write_map(p, d)
    back = pnm.read_pgm(p)
    assert np.array_equal(back, pnm.quantize_map(d))
    levels = np.array([4.0 ** -i for i in range(5)])
    codes = pnm.quantize_map(levels)
    assert len(set(codes.tolist())) == 5
    decoded = levels[np.argmin(np.abs(back[..., None].astype(int) - codes.astype(int)), axis=-1)]
    assert np.array_equal(decoded, d)


def test_image_codec_round_trip_on_grid_values(rng):
    rgb = rng.integers(0, 256, size=(4, 4, 3), dtype=np.uint8)
    assert np.array_equal(pnm.image_to_rgb8(pnm.rgb8_to_image(rgb)), rgb)


def test_image_grid_layout(rng):
    imgs = [rng.uniform(-1, 1, size=(3, 8, 8)) for _ in range(3)]
    g = pnm.image_grid(imgs, cols=2, pad=1)
    assert g.shape == (2 * 9 + 1, 2 * 9 + 1, 3)
    assert np.array_equal(g[1:9, 10:18], pnm.image_to_rgb8(imgs[1]))


# -- config ------------------------------------------------------------------

def test_config_defaults():
    c = RunConfig()
    assert (c.beta1, c.beta2, c.lr, c.ttur) == (0.0, 0.99, 1e-4, 4.0)
    assert (c.image_size, c.batch_size, c.iterations, c.count, c.topk) == (64, 4, 2000, 20, 5)
    assert c.n_schedule == (2, 2, 4, 4, 4) and c.k == 4.0 and c.latent_dim == 128
    assert c.buckets == ("10-20", "20-30", "30-40", "40-50")


def test_config_text_round_trip(tmp_path):
    c = RunConfig(seed=3, pdiv="cdl", lr=3e-4, buckets=("30-40",), **TINY)
    text = c.to_text()
    again = RunConfig.from_text(text)
    assert again == c
    assert again.to_text() == text
    c.save(tmp_path / "c.txt")
    assert RunConfig.load(tmp_path / "c.txt") == c


def test_config_parses_strings():
    c = RunConfig.from_text("# comment\nseed = 5\nstage-channels=4,4,3\nn_schedule=2,4,4\nimage_size=16\n"
                            "base_size=4\nlatent_dim=8\nhidden=4\n")
    assert c.seed == 5 and c.stage_channels == (4, 4, 3)


@pytest.mark.parametrize("text", ["bogus=1", "seed", "pdiv=maybe", "layout=x", "buckets=5-6", "image_size=32",
                                  "batch_size=0"])
def test_config_rejects_bad_text(text):
    with pytest.raises(ValueError):
        RunConfig.from_text(text)


def test_parse_kv_unknown_filter():
    assert parse_kv("a=1\nb = x y\n") == {"a": "1", "b": "x y"}
    with pytest.raises(ValueError):
        parse_kv("c=1", known={"a"})


def test_config_derived_objects():
    c = RunConfig(**TINY)
    g = c.generator_config()
    assert g.output_resolution == (16, 16)
    assert c.loss_weights().w_rec == 10.0


# -- checkpoint --------------------------------------------------------------

@pytest.fixture
def tiny_state():
    cfg = RunConfig(**TINY)
    state = GeneratorState.create(cfg.generator_config(), seed=1)
    state.moments["adam.gen.m.out_conv.bias"] = np.arange(3.0)
    state.iteration = 7
    return cfg, state


def test_checkpoint_round_trip(tmp_path, tiny_state):
    cfg, state = tiny_state
    p = tmp_path / "c.pdgk"
    save_checkpoint(p, state, cfg)
    loaded, lcfg = load_checkpoint(p)
    assert lcfg == cfg and loaded.iteration == 7
    for (na, a), (nb, b) in zip(state.named_tensors(), loaded.named_tensors()):
        assert na == nb and a.data.tobytes() == b.data.tobytes()
    assert loaded.moments["adam.gen.m.out_conv.bias"].tolist() == [0.0, 1.0, 2.0]
    assert state_to_bytes(loaded, lcfg) == p.read_bytes()


def test_checkpoint_ignores_output_directory(tiny_state):
    cfg, state = tiny_state
    assert state_to_bytes(state, cfg.replace(out="a")) == state_to_bytes(state, cfg.replace(out="b/c"))
    assert b"\nout=" not in state_to_bytes(state, cfg)


def test_checkpoint_refuses_non_finite(tmp_path, tiny_state):
    cfg, state = tiny_state
    state.generator.out_conv.bias.data[0] = np.nan
    with pytest.raises(CheckpointError):
        save_checkpoint(tmp_path / "c.pdgk", state, cfg)
    assert not (tmp_path / "c.pdgk").exists()


def test_checkpoint_version_and_magic(tmp_path, tiny_state):
    cfg, state = tiny_state
    blob = bytearray(state_to_bytes(state, cfg))
    p = tmp_path / "c.pdgk"
    blob[4] = 9
    p.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(p)
    p.write_bytes(b"JUNK" + bytes(blob[4:]))
    with pytest.raises(CheckpointError):
        load_checkpoint(p)


def test_checkpoint_shape_mismatch(tmp_path, tiny_state):
    cfg, state = tiny_state
    blob = state_to_bytes(state, cfg)
    # claim a wider hidden size in the header than the stored tensors have
    assert b"\nhidden=4\n" in blob
    p = tmp_path / "c.pdgk"
    p.write_bytes(blob.replace(b"\nhidden=4\n", b"\nhidden=5\n", 1))
    with pytest.raises(CheckpointError, match="shape"):
        load_checkpoint(p)
