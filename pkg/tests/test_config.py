import json
from dataclasses import replace

import pytest

from crossing.config import (
    ConfigError,
    SessionConfig,
    config_from_dict,
    config_to_dict,
    load_config,
    save_config,
)


def test_defaults_are_valid_and_total_trials():
    cfg = SessionConfig()
    assert cfg.total_trials == 192
    assert cfg.blocks == 16
    assert cfg.trials_per_block == 12


def test_round_trip_through_file(tmp_path):
    cfg = replace(SessionConfig(), seed=9, lr=5e-4, blocks=4, trials_per_block=4)
    path = tmp_path / "config.json"
    save_config(cfg, path)
    assert load_config(path) == cfg


def test_unknown_key_is_reported_with_path(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"world": {"dtt": 0.05}}))
    with pytest.raises(ConfigError, match="world.dtt"):
        load_config(path)
    path.write_text(json.dumps({"driver": {"happy": {"speed": 1}}}))
    with pytest.raises(ConfigError, match="driver.happy.speed"):
        load_config(path)


def test_syntax_error_reports_line_and_column(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "seed": 1,\n  "lr": ,\n}')
    with pytest.raises(ConfigError, match=r"line 3"):
        load_config(path)


def test_partial_driver_override_keeps_defaults():
    cfg = config_from_dict({"driver": {"sad": {"wait_mean": 3.5}}})
    assert cfg.driver.sad.wait_mean == 3.5
    assert cfg.driver.sad.forward_speed_mean == 0.16
    assert cfg.driver.happy == SessionConfig().driver.happy


def test_validation_errors():
    with pytest.raises(ConfigError):
        config_from_dict({"blocks": 3})
    with pytest.raises(ConfigError):
        config_from_dict({"lr": 0})
    with pytest.raises(ConfigError):
        config_from_dict({"happy_tracks": []})
    with pytest.raises(ConfigError):
        config_from_dict({"world": {"dt": -1}})
    with pytest.raises(ConfigError):
        config_from_dict({"reward": {"gamma": 2.0}})


def test_track_pools_must_be_string_lists():
    with pytest.raises(ConfigError):
        config_from_dict({"happy_tracks": [1, 2]})


def test_config_dict_is_json_serializable():
    text = json.dumps(config_to_dict(SessionConfig()), sort_keys=True)
    assert "intersection_half_width" in text
