import json

import pytest

from csrnnt.config import load_config, make_config
from csrnnt.errors import DataError


def test_desk_preset_defaults():
    cfg = make_config("desk")
    assert cfg.model.enc_layers == 2 and cfg.model.enc_dim == 64
    assert cfg.model.pred_layers == 1 and cfg.model.pred_dim == 64
    assert cfg.model.lid_dim == 8
    assert cfg.decode.beam_size == 8
    assert cfg.train.dropout == 0.2
    assert cfg.synth.num_utterances == 2000
    assert cfg.num_test == 200


def test_paper_preset_matches_published_settings():
    cfg = make_config("seame-paper")
    assert cfg.model.enc_layers == 4 and cfg.model.enc_dim == 512
    assert cfg.model.pred_layers == 2 and cfg.model.pred_dim == 512
    assert cfg.model.joint_dim == 512
    assert cfg.decode.beam_size == 35
    assert cfg.decode.lam == 0.2
    assert cfg.rescore.nbest == 35
    assert cfg.train.learning_rate == 0.001
    assert cfg.train.dropout == 0.2
    assert cfg.ngram_order == 4


def test_unknown_preset():
    with pytest.raises(DataError):
        make_config("galaxy")


def test_config_file_and_overrides(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"preset": "desk",
                                "train": {"epochs": 9},
                                "bpe_merges": 50}), encoding="utf-8")
    cfg = load_config(path)
    assert cfg.train.epochs == 9
    assert cfg.bpe_merges == 50
    cfg = load_config(path, overrides=["train.epochs=2", "decode.beam_size=3",
                                       "num_dev=7"])
    assert cfg.train.epochs == 2
    assert cfg.decode.beam_size == 3
    assert cfg.num_dev == 7


def test_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"train": {"epoch": 9}}), encoding="utf-8")
    with pytest.raises(DataError, match="train.epoch"):
        load_config(path)
    with pytest.raises(DataError):
        load_config(None, overrides=["nope=1"])
    with pytest.raises(DataError):
        load_config(None, overrides=["train.epochs"])


def test_override_validation_still_applies():
    with pytest.raises(Exception):
        load_config(None, overrides=["decode.beam_size=0"])


def test_config_json_roundtrip():
    cfg = make_config("desk")
    tree = json.loads(cfg.to_json())
    assert tree["model"]["enc_dim"] == 64
    assert tree["preset"] == "desk"
