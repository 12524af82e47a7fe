"""Shared domain types and campaign configuration."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Union

from .hashing import hash_payload

NodeId = int
Tick = int

DEFAULT_MAX_INPUT_LEN = 1024


class FuzzerClass(str, enum.Enum):
    ASAN = "asan"
    CMPLOG = "cmplog"
    LAF = "laf"
    OTHER = "other"


class PolicyKind(str, enum.Enum):
    NONE = "none"
    SELECTIVE = "selective"
    DYNAMIC = "dynamic"
    HIERARCHICAL = "hierarchical"
    BASELINE_PERIODIC = "baseline-periodic"


@dataclass(frozen=True)
class TestCase:
    """A retained input. ``id`` is derived from the payload bytes only."""

    __test__ = False  # keep pytest from collecting this

    payload: bytes
    origin: NodeId
    discovered_at: Tick
    id: int = field(init=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "payload", bytes(self.payload))
        object.__setattr__(self, "id", hash_payload(self.payload))


class CoverageMap:
    """Insertion-only set of branch ids."""

    __slots__ = ("branches",)

    def __init__(self, branches: Iterable[int] = ()) -> None:
        self.branches: set[int] = set(branches)

    @property
    def count(self) -> int:
        return len(self.branches)

    def merge(self, other: Union["CoverageMap", Iterable[int]]) -> int:
        """Absorb branches, returning how many were new."""
        items = other.branches if isinstance(other, CoverageMap) else other
        before = len(self.branches)
        self.branches.update(items)
        return len(self.branches) - before

    def is_novel(self, branches: Iterable[int]) -> bool:
        return not self.branches.issuperset(branches)

    def __contains__(self, branch: int) -> bool:
        return branch in self.branches

    def __len__(self) -> int:
        return len(self.branches)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CoverageMap):
            return NotImplemented
        return self.branches == other.branches

    def __repr__(self) -> str:
        return f"CoverageMap({sorted(self.branches)!r})"


# Messages exchanged between nodes.


@dataclass(frozen=True)
class InterestingInput:
    case: TestCase

    kind = "interesting_input"

    @property
    def size(self) -> int:
        return len(self.case.payload)


@dataclass(frozen=True)
class LowUtilityNotice:
    sender: NodeId  # the node asking not to be sent to anymore

    kind = "low_utility_notice"
    size = 0


@dataclass(frozen=True)
class AmmuinaRequest:
    initiator: NodeId
    at_tick: Tick

    kind = "ammuina_request"
    size = 0


@dataclass(frozen=True)
class AmmuinaBatch:
    cases: tuple[TestCase, ...]

    kind = "ammuina_batch"

    @property
    def size(self) -> int:
        return sum(len(c.payload) for c in self.cases)


Message = Union[InterestingInput, LowUtilityNotice, AmmuinaRequest, AmmuinaBatch]


DEFAULT_P_SOLVE = {
    FuzzerClass.CMPLOG: 0.05,
    FuzzerClass.LAF: 0.03,
    FuzzerClass.ASAN: 0.0,
    FuzzerClass.OTHER: 0.01,
}


@dataclass
class CampaignConfig:
    n_nodes: int = 4
    policy: PolicyKind = PolicyKind.SELECTIVE
    class_assignment: list[FuzzerClass] = field(default_factory=list)
    seed: int = 0
    total_ticks: int = 720
    sample_interval: int = 60
    execs_per_tick: int = 4

    ammuina_enabled: bool = False
    t_inc: int = 3
    t_time: int = 600
    ammuina_cooldown: int = 300
    ammuina_batch_cap: int = 16

    u_min: int = -5
    inter_master_period: int = 60
    hierarchical_utility_filter: bool = False
    baseline_period: int = 120

    base_latency: int = 1
    per_byte_latency: Fraction = Fraction(0)

    c_send: int = 1
    c_recv: int = 1
    c_file: int = 10

    max_input_len: int = DEFAULT_MAX_INPUT_LEN
    log_messages: bool = False
    p_solve: dict[FuzzerClass, float] = field(default_factory=lambda: dict(DEFAULT_P_SOLVE))

    def __post_init__(self) -> None:
        self.policy = PolicyKind(self.policy)
        self.per_byte_latency = Fraction(self.per_byte_latency)
        if not self.class_assignment:
            self.class_assignment = default_classes(self.n_nodes)
        self.class_assignment = [FuzzerClass(c) for c in self.class_assignment]
        self.p_solve = {FuzzerClass(k): float(v) for k, v in self.p_solve.items()}
        for cls in FuzzerClass:
            self.p_solve.setdefault(cls, DEFAULT_P_SOLVE[cls])


def default_classes(n: int) -> list[FuzzerClass]:
    """Round-robin heterogeneous assignment: asan, cmplog, laf, other, ..."""
    order = list(FuzzerClass)
    return [order[i % len(order)] for i in range(max(n, 0))]


def validate_config(cfg: CampaignConfig) -> list[str]:
    """Return every invariant violation of ``cfg``; empty means valid."""
    problems = []
    if cfg.n_nodes < 1:
        problems.append("nodes must be at least 1")
    if len(cfg.class_assignment) != cfg.n_nodes:
        problems.append("classes length must equal nodes")
    if cfg.sample_interval <= 0:
        problems.append("sample_interval must be positive")
    if cfg.total_ticks <= 0:
        problems.append("total_ticks must be positive")
    elif cfg.sample_interval > 0 and cfg.total_ticks % cfg.sample_interval:
        problems.append("total_ticks not multiple of sample_interval")
    if cfg.execs_per_tick < 0:
        problems.append("execs_per_tick must be non-negative")
    if cfg.t_inc < 0:
        problems.append("t_inc must be non-negative")
    if cfg.t_time <= 0:
        problems.append("t_time must be positive")
    if cfg.ammuina_cooldown < 0:
        problems.append("ammuina cooldown must be non-negative")
    if cfg.ammuina_batch_cap < 0:
        problems.append("ammuina batch_cap must be non-negative")
    if cfg.inter_master_period <= 0:
        problems.append("inter_master_period must be positive")
    if cfg.baseline_period <= 0:
        problems.append("baseline period must be positive")
    if cfg.base_latency < 0:
        problems.append("base_latency must be non-negative")
    if cfg.per_byte_latency < 0:
        problems.append("per_byte_latency must be non-negative")
    for name in ("c_send", "c_recv", "c_file"):
        if getattr(cfg, name) < 0:
            problems.append(f"{name} must be non-negative")
    if cfg.max_input_len < 1:
        problems.append("max_input_len must be positive")
    for cls, p in cfg.p_solve.items():
        if not 0.0 <= p <= 1.0:
            problems.append(f"p_solve[{cls.value}] must lie in [0, 1]")
    return problems


class ConfigError(ValueError):
    """Raised with the full list of problems found in a config."""

    def __init__(self, problems: list[str]) -> None:
        super().__init__("; ".join(problems))
        self.problems = problems


_SECTIONS = {
    "ammuina": {
        "enabled": "ammuina_enabled",
        "t_inc": "t_inc",
        "t_time": "t_time",
        "cooldown": "ammuina_cooldown",
        "batch_cap": "ammuina_batch_cap",
    },
    "dynamic": {"u_min": "u_min"},
    "hierarchical": {
        "inter_master_period": "inter_master_period",
        "utility_filter": "hierarchical_utility_filter",
    },
    "baseline": {"period": "baseline_period"},
    "transport": {"base_latency": "base_latency", "per_byte_latency": "per_byte_latency"},
    "costs": {"c_send": "c_send", "c_recv": "c_recv", "c_file": "c_file"},
}
_FLAT = {
    "nodes": "n_nodes",
    "policy": "policy",
    "classes": "class_assignment",
    "seed": "seed",
    "total_ticks": "total_ticks",
    "sample_interval": "sample_interval",
    "execs_per_tick": "execs_per_tick",
    "max_input_len": "max_input_len",
    "log_messages": "log_messages",
}
_BOOLS = {"ammuina_enabled", "hierarchical_utility_filter", "log_messages"}


def _fraction(value) -> Fraction:
    if isinstance(value, float):
        return Fraction(str(value))
    return Fraction(value)


def config_from_dict(d: dict) -> CampaignConfig:
    """Build a config from its JSON shape. Missing keys take defaults;
    unknown keys and badly typed values raise :class:`ConfigError`."""
    if not isinstance(d, dict):
        raise ConfigError(["config must be a JSON object"])
    problems = []
    kwargs = {}
    for key, value in d.items():
        if key in _FLAT:
            kwargs[_FLAT[key]] = value
        elif key in _SECTIONS:
            if not isinstance(value, dict):
                problems.append(f"{key} must be an object")
                continue
            for sub, subval in value.items():
                if sub not in _SECTIONS[key]:
                    problems.append(f"unknown key {key}.{sub}")
                else:
                    kwargs[_SECTIONS[key][sub]] = subval
        elif key == "p_solve":
            if not isinstance(value, dict):
                problems.append("p_solve must be an object")
            else:
                kwargs["p_solve"] = value
        else:
            problems.append(f"unknown key {key}")
    for name, value in list(kwargs.items()):
        try:
            if name == "policy":
                kwargs[name] = PolicyKind(value)
            elif name == "class_assignment":
                kwargs[name] = [FuzzerClass(c) for c in value]
            elif name == "per_byte_latency":
                kwargs[name] = _fraction(value)
            elif name == "p_solve":
                kwargs[name] = {FuzzerClass(k): float(v) for k, v in value.items()}
            elif name in _BOOLS:
                if not isinstance(value, bool):
                    raise TypeError
            elif isinstance(value, bool) or not isinstance(value, int):
                raise TypeError
        except (TypeError, ValueError, ZeroDivisionError):
            problems.append(f"invalid value for {name}: {value!r}")
    if problems:
        raise ConfigError(problems)
    return CampaignConfig(**kwargs)


def config_to_dict(cfg: CampaignConfig) -> dict:
    out: dict = {}
    for key, attr in _FLAT.items():
        out[key] = getattr(cfg, attr)
    out["policy"] = cfg.policy.value
    out["classes"] = [c.value for c in cfg.class_assignment]
    for section, mapping in _SECTIONS.items():
        out[section] = {sub: getattr(cfg, attr) for sub, attr in mapping.items()}
    pbl = cfg.per_byte_latency
    out["transport"]["per_byte_latency"] = (
        int(pbl) if pbl.denominator == 1 else f"{pbl.numerator}/{pbl.denominator}"
    )
    out["p_solve"] = {c.value: cfg.p_solve[c] for c in FuzzerClass}
    return out
