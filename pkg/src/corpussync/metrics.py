"""Evaluation quantities computed from campaign reports."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union

from .core import FuzzerClass

FRACTIONS = (0.5, 0.75, 0.9)
UNREACHED = "---"

SAMPLE_HEADER = ("tick", "node", "coverage", "corpus_size", "sync_cost", "crashes")


class EmptySeries(ValueError):
    pass


class MixedTargets(ValueError):
    pass


@dataclass(frozen=True)
class MetricSample:
    tick: int
    node: int
    coverage_count: int
    corpus_size: int
    sync_cost: int
    crashes: int


@dataclass
class CampaignReport:
    label: str
    policy: str
    ammuina_enabled: bool
    target_id: str
    n_nodes: int
    classes: list[str]
    seed: int
    config: dict
    samples: list[MetricSample]
    aggregate_series: list[tuple[int, int]]
    class_series: dict[str, list[tuple[int, int]]]
    final_coverage: int
    final_class_coverage: dict[str, int]
    final_node_coverage: list[int]
    crash_ids: list[str]
    node_first_crash: list[Optional[int]]
    ammuina_rounds: list[dict]
    message_counts: dict[str, int]
    messages_sent: int
    messages_delivered: int
    in_flight_at_end: int
    queues_empty_at_end: bool
    sync_cost: int
    executions: int
    sync_executions: int
    drain_end_tick: int
    invariant_violations: list[str] = field(default_factory=list)
    branch_first_tick: list[dict[int, int]] = field(default_factory=list)
    message_log: Optional[list[tuple[int, int, int, str]]] = None

    @property
    def policy_label(self) -> str:
        return f"{self.policy} (with ammuina)" if self.ammuina_enabled else self.policy

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("message_log")
        d["samples"] = [list(asdict(s).values()) for s in self.samples]
        d["branch_first_tick"] = [
            {str(b): t for b, t in sorted(m.items())} for m in self.branch_first_tick
        ]
        d["crash_stats"] = asdict(crash_stats(self))
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "CampaignReport":
        d = dict(d)
        d.pop("crash_stats", None)
        d["samples"] = [MetricSample(*row) for row in d["samples"]]
        d["aggregate_series"] = [tuple(p) for p in d["aggregate_series"]]
        d["class_series"] = {k: [tuple(p) for p in v] for k, v in d["class_series"].items()}
        d["branch_first_tick"] = [
            {int(b): t for b, t in m.items()} for m in d.get("branch_first_tick", [])
        ]
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "CampaignReport":
        return cls.from_dict(json.loads(text))


def samples_csv(samples: Iterable[MetricSample]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SAMPLE_HEADER)
    for s in samples:
        w.writerow([s.tick, s.node, s.coverage_count, s.corpus_size, s.sync_cost, s.crashes])
    return buf.getvalue()


def message_log_csv(log: Iterable[tuple[int, int, int, str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("tick", "src", "dst", "kind"))
    w.writerows(log)
    return buf.getvalue()


def _as_fraction(x: Union[float, int, str, Fraction]) -> Fraction:
    # str() first so 0.9 means nine tenths, not its binary approximation
    return Fraction(str(x)) if isinstance(x, float) else Fraction(x)


def coverage_target(best: int, fraction) -> int:
    return math.ceil(_as_fraction(fraction) * best)


def time_to_target(
    series: Sequence[tuple[int, int]], best: int, fraction
) -> Optional[int]:
    """First tick whose coverage reaches ``ceil(fraction * best)``."""
    if not series:
        raise EmptySeries("time_to_target needs at least one sample")
    goal = coverage_target(best, fraction)
    for tick, cov in series:
        if cov >= goal:
            return tick
    return None


def best_coverage(reports: Sequence[CampaignReport]) -> int:
    if not reports:
        raise ValueError("best_coverage needs at least one report")
    return max(r.final_coverage for r in reports)


@dataclass(frozen=True)
class CrashStats:
    max_crashes: int
    first_crash_tick: Optional[int]


def crash_stats(report: CampaignReport) -> CrashStats:
    ticks = [t for t in report.node_first_crash if t is not None]
    return CrashStats(len(set(report.crash_ids)), min(ticks) if ticks else None)


@dataclass
class TargetCoverageTable:
    title: str
    best: int
    fractions: tuple
    rows: dict[str, dict[float, Optional[int]]]

    def render(self) -> str:
        head = ["policy"] + [f"{int(round(f * 100))}%" for f in self.fractions]
        body = [
            [label] + [UNREACHED if row[f] is None else str(row[f]) for f in self.fractions]
            for label, row in self.rows.items()
        ]
        widths = [max(len(r[i]) for r in [head] + body) for i in range(len(head))]
        lines = [f"{self.title} (best coverage {self.best})"]
        for r in [head] + body:
            cells = [r[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(r[1:], widths[1:])]
            lines.append("  ".join(cells).rstrip())
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "title": self.title,
            "best": self.best,
            "fractions": list(self.fractions),
            "rows": {
                label: {str(f): (UNREACHED if v is None else v) for f, v in row.items()}
                for label, row in self.rows.items()
            },
        }


def _check_same_target(reports: Sequence[CampaignReport]) -> None:
    ids = {r.target_id for r in reports}
    if len(ids) > 1:
        raise MixedTargets(f"reports cover different targets: {sorted(ids)}")


def _table(
    title: str,
    runs: Sequence[tuple[str, Sequence[tuple[int, int]], int]],
    fractions: Sequence[float],
) -> TargetCoverageTable:
    """``runs`` holds (row label, series, final value); rows share one best."""
    best = max([final for _, _, final in runs] + [c for _, s, _ in runs for _, c in s])
    rows: dict[str, dict[float, Optional[int]]] = {}
    for label, series, _ in runs:
        rows[label] = {f: time_to_target(series, best, f) for f in fractions}
    return TargetCoverageTable(title, best, tuple(fractions), rows)


def _row_labels(reports: Sequence[CampaignReport]) -> list[str]:
    labels = [r.policy_label for r in reports]
    if len(set(labels)) == len(labels):
        return labels
    return [f"{r.policy_label} [{r.label}]" for r in reports]


def render_tables(
    reports: Sequence[CampaignReport], fractions: Sequence[float] = FRACTIONS
) -> dict[str, TargetCoverageTable]:
    """One table per fuzzer class plus an ``all`` table over union coverage.

    Each class table measures against the best coverage that class reached in
    any run; the ``all`` table uses the global best.
    """
    if not reports:
        raise ValueError("render_tables needs at least one report")
    _check_same_target(reports)
    labels = _row_labels(reports)
    tables = {}
    for cls in FuzzerClass:
        runs = [
            (label, r.class_series[cls.value], r.final_class_coverage[cls.value])
            for label, r in zip(labels, reports)
            if cls.value in r.class_series
        ]
        if runs:
            tables[cls.value] = _table(cls.value, runs, fractions)
    tables["all"] = _table(
        "all", [(l, r.aggregate_series, r.final_coverage) for l, r in zip(labels, reports)], fractions
    )
    return tables
