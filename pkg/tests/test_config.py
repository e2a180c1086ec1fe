import dataclasses

import numpy as np
import pytest
import yaml

from dynsurrogate import arrayio, config
from dynsurrogate.errors import InvalidArgumentError


def test_presets_all_valid():
    for name in config.preset_names():
        cfg = config.preset(name)
        assert cfg.n_train + cfg.n_val + cfg.n_test <= cfg.n_samples
        assert cfg.n_dof >= 1
        assert len(cfg.monitored_dofs) >= 1
        assert cfg.theta_spec()  # every case exposes at least one random parameter


def test_yaml_round_trip(tmp_path):
    cfg = config.preset("case2_desk")
    path = tmp_path / "c.yaml"
    path.write_text(cfg.to_yaml(), encoding="utf-8")
    assert config.CaseConfig.from_yaml(path) == cfg


def test_example_yaml_parses(tmp_path):
    for name in config.preset_names():
        text = config.example_yaml(name)
        path = tmp_path / f"{name}.yaml"
        path.write_text(text, encoding="utf-8")
        assert config.CaseConfig.from_yaml(path) == config.preset(name)


def test_unknown_keys_rejected():
    with pytest.raises(InvalidArgumentError):
        config.CaseConfig.from_dict({"case": "case1_sdof", "bogus_key": 1})


def test_validation_catches_bad_values():
    with pytest.raises(InvalidArgumentError):
        dataclasses.replace(config.preset("case1_desk"), net_dropout=1.5)
    with pytest.raises(InvalidArgumentError):
        dataclasses.replace(config.preset("case1_desk"), n_train=1000)


def test_monitored_dofs():
    assert config.preset("case1_desk").monitored_dofs == (0,)
    c2 = config.preset("case2_desk")
    assert c2.monitored_dofs[-1] == c2.sys_n_stories - 1  # roof is monitored


def test_array_round_trip(tmp_path):
    arr = np.random.default_rng(0).normal(size=(3, 7))
    arrayio.save_array(tmp_path / "a", arr)
    back = arrayio.load_array(tmp_path / "a")
    assert np.array_equal(back, arr)
    header = arrayio.load_metadata(tmp_path / "a.json")
    assert header["shape"] == [3, 7]
    assert header["dtype"] == "<f8"


def test_array_reload_rejects_corrupt_header(tmp_path):
    arrayio.save_array(tmp_path / "a", np.zeros(4))
    (tmp_path / "a.json").write_text('{"magic": "nope"}', encoding="utf-8")
    with pytest.raises(InvalidArgumentError):
        arrayio.load_array(tmp_path / "a")


def test_canonical_json_stable():
    s1 = arrayio.canonical_json({"b": 1, "a": [1.5, 2.0]})
    s2 = arrayio.canonical_json({"a": [1.5, 2.0], "b": 1})
    assert s1 == s2
    assert s1.endswith("\n")
