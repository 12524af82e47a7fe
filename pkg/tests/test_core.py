from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from corpussync.core import (
    CampaignConfig,
    ConfigError,
    CoverageMap,
    FuzzerClass,
    PolicyKind,
    TestCase,
    config_from_dict,
    config_to_dict,
    validate_config,
)
from corpussync.hashing import hash_payload


def test_testcase_id_is_payload_hash():
    case = TestCase(b"hello", origin=3, discovered_at=9)
    assert case.id == hash_payload(b"hello")
    assert TestCase(b"hello", 1, 0).id == case.id


@given(st.binary(max_size=64))
def test_testcase_id_property(payload):
    assert TestCase(payload, 0, 0).id == hash_payload(payload)


@given(st.sets(st.integers(0, 50)), st.sets(st.integers(0, 50)))
def test_coverage_merge_idempotent_and_commutative(a, b):
    x = CoverageMap(a)
    x.merge(CoverageMap(b))
    y = CoverageMap(b)
    y.merge(CoverageMap(a))
    assert x == y
    again = CoverageMap(x.branches)
    again.merge(CoverageMap(b))
    assert again == x
    assert x.count == len(a | b)


def test_coverage_merge_reports_new_branches():
    cov = CoverageMap({0, 1})
    assert cov.merge({1, 2, 3}) == 2
    assert cov.is_novel({0, 4})
    assert not cov.is_novel({0, 3})


def test_valid_config():
    cfg = CampaignConfig(n_nodes=4, class_assignment=[FuzzerClass.ASAN] * 4,
                         total_ticks=600, sample_interval=60)
    assert validate_config(cfg) == []


def test_ticks_not_multiple_of_interval():
    cfg = CampaignConfig(total_ticks=100, sample_interval=60)
    assert "total_ticks not multiple of sample_interval" in validate_config(cfg)


def test_t_time_must_be_positive():
    cfg = CampaignConfig(t_time=0)
    assert "t_time must be positive" in validate_config(cfg)


def test_validate_reports_every_problem_without_mutating():
    cfg = CampaignConfig(n_nodes=2, class_assignment=[FuzzerClass.LAF] * 3, t_inc=-1,
                         ammuina_cooldown=-2, t_time=0)
    before = config_to_dict(cfg)
    problems = validate_config(cfg)
    assert len(problems) == 4
    assert config_to_dict(cfg) == before


def test_config_round_trip():
    cfg = CampaignConfig(n_nodes=3, policy="dynamic", per_byte_latency=Fraction(1, 4),
                         ammuina_enabled=True, log_messages=True, seed=11)
    assert config_from_dict(config_to_dict(cfg)) == cfg


def test_config_keys_are_the_documented_ones():
    d = config_to_dict(CampaignConfig())
    assert set(d) == {
        "nodes", "policy", "classes", "seed", "total_ticks", "sample_interval",
        "execs_per_tick", "ammuina", "dynamic", "hierarchical", "baseline",
        "transport", "costs", "max_input_len", "log_messages", "p_solve",
    }
    assert set(d["ammuina"]) == {"enabled", "t_inc", "t_time", "cooldown", "batch_cap"}
    assert set(d["transport"]) == {"base_latency", "per_byte_latency"}
    assert set(d["costs"]) == {"c_send", "c_recv", "c_file"}


def test_config_from_partial_dict_uses_defaults():
    cfg = config_from_dict({"nodes": 2, "policy": "baseline-periodic",
                            "transport": {"per_byte_latency": "1/8"}})
    assert cfg.policy is PolicyKind.BASELINE_PERIODIC
    assert cfg.per_byte_latency == Fraction(1, 8)
    assert len(cfg.class_assignment) == 2


@pytest.mark.parametrize("bad", [
    {"nodes": "four"},
    {"policy": "gossip"},
    {"unknown": 1},
    {"ammuina": {"speed": 3}},
    {"classes": ["asan", "fast"]},
    {"log_messages": 1},
])
def test_config_from_dict_rejects(bad):
    with pytest.raises(ConfigError):
        config_from_dict(bad)
