"""Corpus dissemination policies for distributed coverage-guided fuzzing,
with a deterministic campaign simulator."""

from .campaign import Campaign, CampaignFinished, run_campaign
from .core import (
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
from .hashing import hash_payload, xxh64
from .metrics import CampaignReport, MetricSample, best_coverage, crash_stats, render_tables, time_to_target
from .target import Gate, TargetSpec, generate_target, run_target

__version__ = "0.1.0"

__all__ = [
    "Campaign",
    "CampaignConfig",
    "CampaignFinished",
    "CampaignReport",
    "ConfigError",
    "CoverageMap",
    "FuzzerClass",
    "Gate",
    "MetricSample",
    "PolicyKind",
    "TargetSpec",
    "TestCase",
    "best_coverage",
    "config_from_dict",
    "config_to_dict",
    "crash_stats",
    "generate_target",
    "hash_payload",
    "render_tables",
    "run_campaign",
    "run_target",
    "time_to_target",
    "validate_config",
    "xxh64",
]
