"""Checkpoint container round-trips and error handling."""

import numpy as np
import pytest

from icart import model
from icart.checkpoint import CheckpointError, load_checkpoint, save_checkpoint


def test_roundtrip_exact(tmp_path):
    cfg = model.ModelConfig(species=(1, 8), r_cut=4.5, l_max=2, L_max=1,
                            correlation=2, channels=4, variant="sym")
    params = model.init_params(cfg, seed=3)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, params, cfg, extra={"seed": 3})
    loaded, cfg2, extra = load_checkpoint(path)
    assert cfg2 == cfg
    assert extra == {"seed": 3}
    assert set(loaded) == set(params)
    for k in params:
        np.testing.assert_array_equal(loaded[k], np.asarray(params[k]))


def test_roundtrip_preserves_float32(tmp_path):
    cfg = model.ModelConfig(species=(1,), r_cut=4.0, l_max=1, L_max=0,
                            correlation=1, channels=2, dtype="float32")
    params = model.init_params(cfg, seed=1)
    path = tmp_path / "m32.ckpt"
    save_checkpoint(path, params, cfg)
    loaded, cfg2, _ = load_checkpoint(path)
    assert cfg2.dtype == "float32"
    assert loaded["species_embed"].dtype == np.float32


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOTACHECKPOINT")
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)


def test_bad_version_rejected(tmp_path):
    cfg = model.ModelConfig(species=(1,), l_max=1, L_max=0, correlation=1, channels=2)
    params = model.init_params(cfg, seed=0)
    path = tmp_path / "v.ckpt"
    save_checkpoint(path, params, cfg)
    raw = bytearray(path.read_bytes())
    raw[5] = 99
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path)


def test_loaded_model_predicts_identically(tmp_path):
    from icart.atoms import AtomicConfiguration

    cfg = model.ModelConfig(species=(1,), r_cut=4.0, l_max=2, L_max=1,
                            correlation=2, channels=4)
    params = model.init_params(cfg, seed=5)
    rng = np.random.default_rng(0)
    conf = AtomicConfiguration(rng.normal(scale=1.2, size=(4, 3)), [1] * 4)
    e0 = model.energy(conf, params, cfg)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, params, cfg)
    loaded, cfg2, _ = load_checkpoint(path)
    assert model.energy(conf, loaded, cfg2) == e0
