"""Synthetic fuzz targets: a forest of magic-byte gates.

Branch 0 is the entry block and is always covered. Gate ``g`` is covered when
its parent is covered and ``payload[g.offset:g.offset + len(g.expected)]``
equals ``g.expected``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Optional

from .core import DEFAULT_MAX_INPUT_LEN, FuzzerClass
from .hashing import xxh64
from .rng import SplitMix64, mix64

ROOT = 0


class TargetError(ValueError):
    pass


class InputTooLong(ValueError):
    pass


@dataclass(frozen=True)
class Gate:
    id: int
    parent: Optional[int]
    offset: int
    expected: bytes
    crash: bool = False
    class_hint: Optional[FuzzerClass] = None

    @property
    def parent_branch(self) -> int:
        return ROOT if self.parent is None else self.parent


@dataclass(frozen=True)
class ExecutionResult:
    branches: frozenset
    crashed: bool


@dataclass
class TargetSpec:
    gates: list[Gate]
    max_input_len: int = DEFAULT_MAX_INPUT_LEN
    seeds: list[bytes] = field(default_factory=list)

    def __post_init__(self) -> None:
        problems = check_target(self)
        if problems:
            raise TargetError("; ".join(problems))
        self.by_id = {g.id: g for g in self.gates}
        self.children: dict[int, list[Gate]] = {}
        for g in sorted(self.gates, key=lambda g: g.id):
            self.children.setdefault(g.parent_branch, []).append(g)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TargetSpec):
            return NotImplemented
        return (
            self.gates == other.gates
            and self.max_input_len == other.max_input_len
            and self.seeds == other.seeds
        )

    @property
    def branch_count(self) -> int:
        return len(self.gates) + 1

    def target_id(self) -> str:
        blob = json.dumps(target_to_dict(self), sort_keys=True, separators=(",", ":"))
        return f"{xxh64(blob.encode()):016x}"


def check_target(spec: TargetSpec) -> list[str]:
    problems = []
    ids = [g.id for g in spec.gates]
    if len(set(ids)) != len(ids):
        problems.append("gate ids must be unique")
    if ROOT in ids:
        problems.append("gate id 0 is reserved for the entry branch")
    known = set(ids) | {ROOT}
    for g in spec.gates:
        if g.id < 0:
            problems.append(f"gate {g.id}: id must be non-negative")
        if g.offset < 0:
            problems.append(f"gate {g.id}: offset must be non-negative")
        if not g.expected:
            problems.append(f"gate {g.id}: expected bytes must be non-empty")
        if g.offset + len(g.expected) > spec.max_input_len:
            problems.append(f"gate {g.id}: offset + len(expected) exceeds max_input_len")
        if g.parent_branch not in known:
            problems.append(f"gate {g.id}: unknown parent {g.parent}")
    # parent links must not cycle
    parent = {g.id: g.parent_branch for g in spec.gates}
    for gid in parent:
        seen = set()
        cur = gid
        while cur != ROOT and cur in parent:
            if cur in seen:
                problems.append(f"gate {gid}: parent chain contains a cycle")
                break
            seen.add(cur)
            cur = parent[cur]
    for s in spec.seeds:
        if len(s) > spec.max_input_len:
            problems.append("seed longer than max_input_len")
    return problems


def run_target(spec: TargetSpec, payload: bytes, max_input_len: Optional[int] = None) -> ExecutionResult:
    limit = spec.max_input_len if max_input_len is None else max_input_len
    if len(payload) > limit:
        raise InputTooLong(f"{len(payload)} bytes > {limit}")
    covered = {ROOT}
    crashed = False
    frontier = [ROOT]
    children = spec.children
    while frontier:
        b = frontier.pop()
        for g in children.get(b, ()):
            end = g.offset + len(g.expected)
            if payload[g.offset:end] == g.expected:
                covered.add(g.id)
                crashed = crashed or g.crash
                frontier.append(g.id)
    return ExecutionResult(frozenset(covered), crashed)


def gating_violations(spec: TargetSpec, result: ExecutionResult) -> list[int]:
    """Covered gates whose parent branch is not covered (should be empty)."""
    bad = []
    for b in result.branches:
        if b == ROOT:
            continue
        g = spec.by_id.get(b)
        if g is None or g.parent_branch not in result.branches:
            bad.append(b)
    if ROOT not in result.branches:
        bad.append(ROOT)
    return bad


def target_to_dict(spec: TargetSpec) -> dict[str, Any]:
    gates = []
    for g in spec.gates:
        d = {
            "id": g.id,
            "parent": g.parent,
            "offset": g.offset,
            "expected_hex": g.expected.hex(),
            "crash": g.crash,
        }
        if g.class_hint is not None:
            d["class_hint"] = g.class_hint.value
        gates.append(d)
    out: dict[str, Any] = {"gates": gates, "max_input_len": spec.max_input_len}
    if spec.seeds:
        out["seeds"] = [s.hex() for s in spec.seeds]
    return out


def target_from_dict(d: dict[str, Any]) -> TargetSpec:
    try:
        gates = [
            Gate(
                id=int(g["id"]),
                parent=None if g.get("parent") is None else int(g["parent"]),
                offset=int(g["offset"]),
                expected=bytes.fromhex(g["expected_hex"]),
                crash=bool(g.get("crash", False)),
                class_hint=FuzzerClass(g["class_hint"]) if g.get("class_hint") else None,
            )
            for g in d["gates"]
        ]
        seeds = [bytes.fromhex(s) for s in d.get("seeds", [])]
        return TargetSpec(gates, int(d.get("max_input_len", DEFAULT_MAX_INPUT_LEN)), seeds)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, TargetError):
            raise
        raise TargetError(f"malformed target: {exc}") from exc


def dumps_target(spec: TargetSpec) -> str:
    return json.dumps(target_to_dict(spec), indent=2, sort_keys=True) + "\n"


def loads_target(text: str) -> TargetSpec:
    return target_from_dict(json.loads(text))


def generate_target(
    depth: int,
    fanout: int,
    magic_len: int = 2,
    crash_count: int = 0,
    seed: int = 0,
    max_input_len: int = DEFAULT_MAX_INPUT_LEN,
) -> TargetSpec:
    """Full gate tree: ``fanout`` children per node, ``depth`` levels.

    Level ``k`` (1-based) gates sit at offset ``(k - 1) * magic_len``; siblings
    get distinct magic values. Crash flags go to ``crash_count`` leaves picked
    by the seeded generator.
    """
    if depth < 1 or fanout < 1 or magic_len < 1 or crash_count < 0:
        raise TargetError("depth, fanout and magic_len must be >= 1; crash_count >= 0")
    if depth * magic_len > max_input_len:
        raise TargetError("tree too deep for max_input_len")
    if magic_len == 1 and fanout > 256:
        raise TargetError("fanout exceeds the distinct 1-byte magic values")
    rng = SplitMix64(mix64(seed))
    gates: list[Gate] = []
    level = [None]
    next_id = 1
    for k in range(depth):
        nxt = []
        for parent in level:
            used: set[bytes] = set()
            for _ in range(fanout):
                magic = rng.randbytes(magic_len)
                while magic in used:
                    magic = rng.randbytes(magic_len)
                used.add(magic)
                gates.append(Gate(next_id, parent, k * magic_len, magic))
                nxt.append(next_id)
                next_id += 1
        level = nxt
    leaves = level
    if crash_count > len(leaves):
        raise TargetError("crash_count exceeds the number of leaves")
    chosen: set[int] = set()
    pool = list(leaves)
    for _ in range(crash_count):
        chosen.add(pool.pop(rng.below(len(pool))))
    gates = [
        Gate(g.id, g.parent, g.offset, g.expected, crash=g.id in chosen) for g in gates
    ]
    return TargetSpec(gates, max_input_len)


def expected_gate_count(depth: int, fanout: int) -> int:
    if fanout == 1:
        return depth
    return fanout * (fanout**depth - 1) // (fanout - 1)

