import json

import pytest

from twinsync.config import ExperimentConfig, apply_override, build_config, parse_override, preset_dict
from twinsync.errors import ConfigError


def test_full_scale_preset_values():
    cfg = build_config(preset="paper")
    assert cfg.samples_per_episode == 15000 and cfg.episodes == 4
    assert cfg.model.hidden == [256, 256]
    assert cfg.train.learning_rate == 0.01 and cfg.train.iterations == 100
    assert cfg.reg.lam == 75000.0 and cfg.reg.gamma == 0.5
    assert cfg.data.source == "idx"


def test_lambda_uses_its_json_key():
    doc = ExperimentConfig().to_dict()
    assert "lambda" in doc["reg"] and "lam" not in doc["reg"]


def test_round_trip_through_json():
    cfg = build_config(preset="desk", overrides=["reg.gamma=0.25", "train.batch_size=64"], seed=9)
    again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg


def test_override_parsing():
    assert parse_override("reg.lambda=75000") == ("reg.lambda", 75000)
    assert parse_override("train.mode=optimized") == ("train.mode", "optimized")
    assert parse_override("model.hidden=[3, 4]") == ("model.hidden", [3, 4])
    with pytest.raises(ConfigError):
        parse_override("reg.lambda")


def test_unknown_override_is_rejected():
    with pytest.raises(ConfigError, match="reg.lamda"):
        apply_override(preset_dict("desk"), "reg.lamda", 1)
    with pytest.raises(ConfigError):
        apply_override(preset_dict("desk"), "seed.value", 1)


@pytest.mark.parametrize("override", [
    "episodes=0", "train.mode=\"best\"", "objective.alpha=1.5", "reg.gamma=2", "strategies=[\"replay\"]",
    "train.iterations=\"many\"", "objective.normalize=1", "data.synthetic_active=500",
])
def test_invalid_values(override):
    with pytest.raises(ConfigError):
        build_config(preset="desk", overrides=[override])


def test_file_then_overrides_then_seed(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"seed": 4, "reg": {"lambda": 3.0}}))
    cfg = build_config(p, "desk", ["reg.gamma=0.1"], seed=None)
    assert cfg.seed == 4 and cfg.reg.lam == 3.0 and cfg.reg.gamma == 0.1 and cfg.preset == "desk"
    assert build_config(p, "desk", [], seed=7).seed == 7
