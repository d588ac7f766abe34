import json

import pytest

from rtbcost.config import Config, ConfigError, from_dict, load_config


def test_defaults():
    cfg = load_config(None)
    assert cfg == Config()
    assert cfg.binning_k == 4 and cfg.campaign.alpha == 0.05


@pytest.mark.parametrize("d", [
    {"bogus": 1},
    {"paths": {"weblog": "x"}},
    {"forest": {"trees": 3}},
    {"campaign": {"budget": 1}},
    {"simulation": {"users": 3}},
    {"window": {"start": 0, "finish": 1}},
    {"paths": []},
])
def test_unknown_or_malformed_rejected(d):
    with pytest.raises(ConfigError):
        from_dict(d)


def test_missing_paths_rejected(tmp_path):
    with pytest.raises(ConfigError, match="geo"):
        from_dict({"paths": {"geo": "missing.csv"}}, tmp_path)


def test_paths_relative_to_config(tmp_path):
    (tmp_path / "geo.csv").write_text("cidr,city\n10.0.0.0/8,Madrid\n")
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"paths": {"geo": "geo.csv", "registry": "reg"}, "window": {"start": 0, "end": 10},
                             "time_shift": {"ratio": 1.25}, "forest": {"n_trees": 7}}))
    cfg = load_config(p)
    assert cfg.paths.geo == tmp_path / "geo.csv"
    assert cfg.forest.n_trees == 7
    assert cfg.window.end == 10 and cfg.time_shift.ratio == 1.25
    assert cfg.references().geo.lookup("10.1.2.3") == "Madrid"


def test_bad_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{")
    with pytest.raises(ConfigError):
        load_config(p)
    p.write_text("[]")
    with pytest.raises(ConfigError):
        load_config(p)


def test_override_ignores_none():
    cfg = Config().override(seed=None, binning_k=5)
    assert cfg.seed == 0 and cfg.binning_k == 5
