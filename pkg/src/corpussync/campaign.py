"""Deterministic tick-driven campaign orchestrator.

Per tick, every node in rank order polls its send queue, drains its inbox
(``sync_fuzzers``), absorbs completed ammuina batches and runs
``execs_per_tick`` fuzz iterations. When the tick counter reaches a multiple
of ``sample_interval`` a sample is recorded for each node and, with ammuina
enabled, each node checks for stagnation. A pending ammuina round starts at
the beginning of the first tick where every node has the request and no
request is still in flight.
"""

from __future__ import annotations

import logging
from collections import Counter
from typing import Optional

from .core import (
    AmmuinaRequest,
    CampaignConfig,
    ConfigError,
    FuzzerClass,
    config_to_dict,
    validate_config,
)
from .fuzzer import FuzzerNode
from .metrics import CampaignReport, MetricSample
from .policy import build_cluster_plan, check_stagnation, make_policy, run_ammuina_round
from .target import TargetSpec
from .transport import InMemoryTransport, LatencyModel

log = logging.getLogger(__name__)

MAX_DRAIN_TICKS = 1_000_000


class CampaignFinished(RuntimeError):
    pass


class Campaign:
    def __init__(
        self,
        cfg: CampaignConfig,
        target: TargetSpec,
        label: str = "",
        check_invariants: bool = True,
        keep_message_log: Optional[bool] = None,
    ) -> None:
        problems = validate_config(cfg)
        too_long = [g.id for g in target.gates if g.offset + len(g.expected) > cfg.max_input_len]
        if too_long:
            problems.append(f"target gates {too_long} do not fit in max_input_len")
        if problems:
            raise ConfigError(problems)
        self.cfg = cfg
        self.target = target
        self.label = label or cfg.policy.value
        self.check_invariants = check_invariants
        keep = cfg.log_messages if keep_message_log is None else keep_message_log
        self.message_log: Optional[list[tuple[int, int, int, str]]] = [] if keep else None
        self.message_counts: Counter = Counter()
        self.transport = InMemoryTransport(
            cfg.n_nodes, LatencyModel(cfg.base_latency, cfg.per_byte_latency)
        )
        self.plan = build_cluster_plan(cfg.class_assignment)
        self.nodes = [
            FuzzerNode(
                r,
                cfg,
                target,
                make_policy(cfg, r, self.plan),
                self.transport,
                log=self._log,
                check_invariants=check_invariants,
            )
            for r in range(cfg.n_nodes)
        ]
        for node in self.nodes:
            node.seed_corpus()
        self.now = 0
        self.samples: list[MetricSample] = []
        self.aggregate_series: list[tuple[int, int]] = []
        self.class_series: dict[str, list[tuple[int, int]]] = {
            c.value: [] for c in dict.fromkeys(cfg.class_assignment)
        }
        self.ammuina_rounds: list[dict] = []
        self.invariant_violations: list[str] = []
        self._requests_in_flight = 0
        self._prev_sample_cov = [n.coverage.count for n in self.nodes]
        self._prev_tick_cov = list(self._prev_sample_cov)
        self.drain_end_tick = cfg.total_ticks
        self._record_samples(0)

    # -- bookkeeping -----------------------------------------------------

    def _log(self, tick: int, src: int, dst: int, kind: str) -> None:
        self.message_counts[kind] += 1
        if kind == AmmuinaRequest.kind:
            self._requests_in_flight += 1
        if self.message_log is not None:
            self.message_log.append((tick, src, dst, kind))

    def _record_samples(self, tick: int) -> None:
        union: set[int] = set()
        per_class: dict[str, set[int]] = {k: set() for k in self.class_series}
        for node in self.nodes:
            self.samples.append(
                MetricSample(
                    tick,
                    node.rank,
                    node.coverage.count,
                    len(node.corpus),
                    node.sync_cost,
                    node.corpus.crashes_found,
                )
            )
            union |= node.coverage.branches
            per_class[node.cls.value] |= node.coverage.branches
        self.aggregate_series.append((tick, len(union)))
        for k, branches in per_class.items():
            self.class_series[k].append((tick, len(branches)))

    def _check_monotone(self) -> None:
        for node in self.nodes:
            cur = node.coverage.count
            if cur < self._prev_tick_cov[node.rank]:
                self.invariant_violations.append(
                    f"coverage of node {node.rank} shrank at tick {self.now}"
                )
            self._prev_tick_cov[node.rank] = cur

    # -- ammuina ---------------------------------------------------------

    def _stagnation_checks(self, tick: int) -> None:
        for node in self.nodes:
            cov = node.coverage.count
            increment = cov - self._prev_sample_cov[node.rank]
            self._prev_sample_cov[node.rank] = cov
            fired = check_stagnation(node.ammuina, increment, tick, self.cfg)
            if fired and not node.ammuina.pending_request:
                node.ammuina.pending_request = True
                log.debug("node %d requests ammuina at tick %d", node.rank, tick)
                for dest in range(self.cfg.n_nodes):
                    if dest != node.rank:
                        node.send(dest, AmmuinaRequest(node.rank, tick), tick)

    def _maybe_start_round(self, tick: int) -> None:
        if not self.cfg.ammuina_enabled:
            return
        if not all(n.ammuina.pending_request for n in self.nodes):
            return
        if self._requests_in_flight - sum(n.requests_received for n in self.nodes) > 0:
            return
        contributions, received = run_ammuina_round(
            [n.corpus.new_since_ammuina for n in self.nodes],
            self.cfg.ammuina_batch_cap,
            self.transport,
            tick,
        )
        ready = self.transport.last_exchange_ready
        peers = self.cfg.n_nodes - 1
        for node, mine, got in zip(self.nodes, contributions, received):
            node.corpus.new_since_ammuina = []
            node.ammuina.last_round_tick = tick
            node.ammuina.pending_request = False
            node.sync_cost += self.cfg.c_send * len(mine) * peers
            if got:
                node.ammuina_inbox.append((ready, got))
            if mine:
                for dest in range(self.cfg.n_nodes):
                    if dest != node.rank:
                        self._log(tick, node.rank, dest, "ammuina_batch")
        self.ammuina_rounds.append(
            {
                "tick": tick,
                "ready_tick": ready,
                "contributed": [len(c) for c in contributions],
            }
        )
        log.debug("ammuina round at tick %d, ready at %d", tick, ready)

    # -- driving ---------------------------------------------------------

    def step(self) -> None:
        cfg = self.cfg
        t = self.now
        if t >= cfg.total_ticks:
            raise CampaignFinished(f"campaign already ran {cfg.total_ticks} ticks")
        self._maybe_start_round(t)
        for node in self.nodes:
            self.transport.poll_completions(node.rank, t)
            node.sync_fuzzers(t)
            node.absorb_ammuina(t)
            for _ in range(cfg.execs_per_tick):
                node.fuzz_one(t)
        self.now = t + 1
        if self.check_invariants:
            self._check_monotone()
        if self.now % cfg.sample_interval == 0:
            self._record_samples(self.now)
            if cfg.ammuina_enabled:
                self._stagnation_checks(self.now)

    def drain(self) -> None:
        """Deliver everything still in flight without further fuzzing."""
        t = self.now
        limit = t + MAX_DRAIN_TICKS
        while not self.transport.quiescent() or any(n.ammuina_inbox for n in self.nodes):
            if t > limit:
                raise RuntimeError("transport failed to quiesce while draining")
            for node in self.nodes:
                self.transport.poll_completions(node.rank, t)
                node.sync_fuzzers(t, periodic=False)
                node.absorb_ammuina(t)
            t += 1
        self.drain_end_tick = t
        if self.check_invariants:
            self._check_monotone()

    def run(self) -> CampaignReport:
        while self.now < self.cfg.total_ticks:
            self.step()
        self.drain()
        return self.report()

    def report(self) -> CampaignReport:
        union: set[int] = set()
        per_class: dict[str, set[int]] = {k: set() for k in self.class_series}
        crash_ids: set[int] = set()
        violations = list(self.invariant_violations)
        for node in self.nodes:
            union |= node.coverage.branches
            per_class[node.cls.value] |= node.coverage.branches
            crash_ids |= node.crash_ids
            violations.extend(f"node {node.rank}: {v}" for v in node.invariant_violations)
        return CampaignReport(
            label=self.label,
            policy=self.cfg.policy.value,
            ammuina_enabled=self.cfg.ammuina_enabled,
            target_id=self.target.target_id(),
            n_nodes=self.cfg.n_nodes,
            classes=[c.value for c in self.cfg.class_assignment],
            seed=self.cfg.seed,
            config=config_to_dict(self.cfg),
            samples=list(self.samples),
            aggregate_series=list(self.aggregate_series),
            class_series={k: list(v) for k, v in self.class_series.items()},
            final_coverage=len(union),
            final_class_coverage={k: len(v) for k, v in per_class.items()},
            final_node_coverage=[n.coverage.count for n in self.nodes],
            crash_ids=sorted(f"{i:016x}" for i in crash_ids),
            node_first_crash=[n.first_crash_tick for n in self.nodes],
            ammuina_rounds=list(self.ammuina_rounds),
            message_counts=dict(sorted(self.message_counts.items())),
            messages_sent=self.transport.sent,
            messages_delivered=self.transport.delivered,
            in_flight_at_end=self.transport.in_flight,
            queues_empty_at_end=all(len(q) == 0 for q in self.transport.queues),
            sync_cost=sum(n.sync_cost for n in self.nodes),
            executions=sum(n.fuzz_execs for n in self.nodes),
            sync_executions=sum(n.sync_execs for n in self.nodes),
            drain_end_tick=self.drain_end_tick,
            invariant_violations=violations,
            branch_first_tick=[dict(n.branch_first_tick) for n in self.nodes],
            message_log=list(self.message_log) if self.message_log is not None else None,
        )


def run_campaign(
    cfg: CampaignConfig, target: TargetSpec, label: str = "", **kwargs
) -> CampaignReport:
    return Campaign(cfg, target, label, **kwargs).run()


def class_nodes(cfg: CampaignConfig, cls: FuzzerClass) -> list[int]:
    return [r for r, c in enumerate(cfg.class_assignment) if c == cls]
