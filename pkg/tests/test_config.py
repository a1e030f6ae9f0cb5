import pytest

from platoon_edca.config import ScenarioConfig, load_config, validate_config
from platoon_edca.errors import ConfigError


def problems(text):
    with pytest.raises(ConfigError) as exc:
        validate_config(text)
    return exc.value.problems


def test_minimal_config_is_fully_defaulted():
    cfg = validate_config("sweep: {start: 2, stop: 10, step: 1}\n")
    assert cfg.sweep.headways() == [2, 3, 4, 5, 6, 7, 8, 9, 10]
    e = cfg.edca
    assert (e.cw_min, e.cw_max, e.aifsn, e.retry_limit) == ((3, 15), (3, 31), (2, 3), 2)
    assert (e.sifs, e.slot, e.basic_rate, e.data_rate, e.mean_payload, e.prop_delay) == (32e-6, 13e-6, 1e6, 3e6, 500.0, 2e-6)
    assert (e.tx_range, e.cs_range) == (500.0, 700.0)
    assert cfg.traffic.k == 500.0 and cfg.traffic.lambda1 == 10.0
    assert cfg.delay_budget_fraction == 0.10
    assert cfg.platoon.a == 5.0 and cfg.platoon.l_fvd == 2.0 and cfg.platoon.lead_speed == 25.0


def test_empty_text_gives_defaults():
    assert validate_config("") == ScenarioConfig()


def test_non_power_of_two_window():
    assert ("edca.cw_max[1]" in {p for p, _ in problems("edca: {cw_max: [3, 30]}")})


def test_beacon_rate_beyond_one_per_slot():
    found = problems("traffic: {lambda1: 1e6}")
    assert found == [("traffic.lambda1", found[0][1])] and "exceeds 1" in found[0][1]


def test_every_problem_reported():
    text = """
edca: {cw_max: [3, 30], aifsn: [3, 3]}
traffic: {lambda1: 1.0e6, k: -1}
sweep: {start: 2, stop: 2000, step: 1}
rate_models: [linear, cubic]
delay_budget_fraction: 1.5
des: {duration: 1, warmup: 2, topology: ring}
bogus: 1
"""
    paths = {p for p, _ in problems(text)}
    assert {
        "edca.cw_max[1]", "edca.aifsn[1]", "traffic.lambda1", "traffic.k", "sweep", "rate_models",
        "delay_budget_fraction", "des.duration", "des.topology", "bogus",
    } <= paths


def test_type_errors_have_paths():
    paths = {p for p, _ in problems("platoon: {a: fast}\nedca: {cw_min: 3}\nseed: x\n")}
    assert {"platoon.a", "edca.cw_min", "seed"} <= paths


def test_invalid_yaml():
    assert problems("sweep: [1, 2")[0][0] == "<root>"


def test_hash_ignores_output_location():
    a = validate_config("output_dir: a\nworkers: 1")
    b = validate_config("output_dir: b\nworkers: 4")
    c = validate_config("seed: 3")
    assert a.config_hash() == b.config_hash() != c.config_hash()


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
