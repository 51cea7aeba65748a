from pathlib import Path

import pytest

from hjisynth.config import ConfigError, RunConfig, dump_config, from_dict, load_config

CONFIGS = sorted((Path(__file__).resolve().parent.parent / "configs").glob("*.yaml"))


@pytest.mark.parametrize("path", CONFIGS, ids=lambda p: p.stem)
def test_shipped_configs_validate(path):
    cfg = load_config(path).validate()
    assert cfg.scenario_specs()


def test_config_echo_round_trip(tmp_path):
    cfg = load_config(CONFIGS[-1]).validate()
    cfg2 = load_config(dump_config(cfg, tmp_path / "c.yaml")).validate()
    assert cfg2.to_dict() == cfg.to_dict()


@pytest.mark.parametrize("bad", [
    {"problem": "nope"},
    {"d": 0},
    {"epsilon": -1.0},
    {"gamma": "sometimes"},
    {"gamma": -2.0},
    {"bracket": [5.0, 1.0]},
    {"overrides": {"viscosity": 1.0}},
    {"surprise": 1},
    {"scenarios": [{"name": "x", "signal": {"kind": "thunder"}}]},
])
def test_invalid_configs(bad):
    with pytest.raises(ConfigError):
        cfg = from_dict(bad)
        cfg.validate()
        cfg.scenario_specs()


def test_gamma_modes():
    assert RunConfig(gamma="inf").gamma_value() == float("inf")
    assert RunConfig(gamma="auto").gamma_value() is None
    assert RunConfig(problem="test1_nosource", gamma="preset").gamma_value() == pytest.approx(0.3937)
    assert RunConfig(gamma=0.5).gamma_value() == 0.5


def test_overrides_reach_problem():
    cfg = RunConfig(problem="test3_linear_channel", overrides={"control_support": [-0.3, 0.5], "R": 0.2})
    p = cfg.build_problem()
    assert (p.control_support.lo, p.control_support.hi) == (-0.3, 0.5) and p.R == 0.2
