"""Dissemination policies.

Module-level functions implement each routing/feedback rule on plain data so
they can be tested in isolation. The ``*Policy`` classes bind that state to a
single node and are what the fuzzer node talks to.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

from .core import (
    CampaignConfig,
    FuzzerClass,
    LowUtilityNotice,
    NodeId,
    PolicyKind,
    TestCase,
    Tick,
)
from .hashing import hash_payload
from .transport import Transport


@dataclass(frozen=True)
class PolicyContext:
    me: NodeId
    n_nodes: int
    my_class: FuzzerClass
    class_assignment: tuple[FuzzerClass, ...]
    now: Tick = 0


# -- selective ---------------------------------------------------------------


def route_selective(case: TestCase, ctx: PolicyContext) -> list[NodeId]:
    rank = hash_payload(case.payload) % ctx.n_nodes
    return [] if rank == ctx.me else [rank]


# -- dynamic -----------------------------------------------------------------


@dataclass
class UtilityDirectory:
    """Per-node utility bookkeeping.

    ``scores`` rates peers by how useful their inputs were to the owner;
    ``interested`` holds peers that have not asked the owner to stop sending.
    """

    owner: NodeId
    scores: dict[NodeId, int] = field(default_factory=dict)
    interested: set[NodeId] = field(default_factory=set)
    u_min: int = -5

    @classmethod
    def fresh(cls, owner: NodeId, n_nodes: int, u_min: int = -5) -> "UtilityDirectory":
        peers = {r for r in range(n_nodes) if r != owner}
        return cls(owner, {}, peers, u_min)

    def score(self, rank: NodeId) -> int:
        return self.scores.get(rank, 0)


def route_dynamic(
    case: TestCase,
    directory: UtilityDirectory,
    ctx: PolicyContext,
    exclude: frozenset = frozenset(),
) -> list[NodeId]:
    """Send to the interested peer with the best score (lowest rank on ties).

    ``exclude`` removes peers that already hold the case (its sender and
    origin when forwarding). With nobody interested at all, fall back to hash
    routing so the node is never cut off permanently.
    """
    candidates = directory.interested - {ctx.me}
    if not candidates:
        return [r for r in route_selective(case, ctx) if r not in exclude]
    candidates -= exclude
    if not candidates:
        return []
    best = min(candidates, key=lambda r: (-directory.score(r), r))
    return [best]


def record_evaluation(
    directory: UtilityDirectory, sender: NodeId, useful: bool
) -> Optional[LowUtilityNotice]:
    if sender == directory.owner:
        raise ValueError("a node does not evaluate its own inputs")
    before = directory.score(sender)
    after = before + 1 if useful else before - 1
    directory.scores[sender] = after
    if before >= directory.u_min > after:
        return LowUtilityNotice(directory.owner)
    return None


def handle_low_utility(directory: UtilityDirectory, notice_from: NodeId) -> UtilityDirectory:
    directory.interested.discard(notice_from)
    return directory


# -- hierarchical ------------------------------------------------------------


@dataclass(frozen=True)
class ClusterPlan:
    clusters: dict[FuzzerClass, tuple[NodeId, ...]]
    master: dict[FuzzerClass, NodeId]
    class_of: tuple[FuzzerClass, ...]

    def master_of(self, rank: NodeId) -> NodeId:
        return self.master[self.class_of[rank]]

    def is_master(self, rank: NodeId) -> bool:
        return self.master_of(rank) == rank

    def peer_masters(self, rank: NodeId) -> list[NodeId]:
        mine = self.master_of(rank)
        return sorted(m for m in self.master.values() if m != mine)

    def same_cluster(self, a: NodeId, b: NodeId) -> bool:
        return self.class_of[a] == self.class_of[b]


def build_cluster_plan(class_assignment: Sequence[FuzzerClass]) -> ClusterPlan:
    if not class_assignment:
        raise ValueError("cluster plan needs at least one node")
    clusters: dict[FuzzerClass, list[NodeId]] = {}
    for rank, cls in enumerate(class_assignment):
        clusters.setdefault(FuzzerClass(cls), []).append(rank)
    return ClusterPlan(
        clusters={c: tuple(sorted(r)) for c, r in clusters.items()},
        master={c: min(r) for c, r in clusters.items()},
        class_of=tuple(FuzzerClass(c) for c in class_assignment),
    )


def route_hierarchical(
    case: TestCase,
    plan: ClusterPlan,
    ctx: PolicyContext,
    buffer: list[TestCase],
    sender: Optional[NodeId] = None,
) -> list[NodeId]:
    """Secondaries forward to their master; masters stage the case for the
    next inter-master sync. Masters do not re-stage cases that came from a
    peer master, since the peer already sent them to every master."""
    master = plan.master_of(ctx.me)
    if master != ctx.me:
        return [] if sender is not None else [master]
    if sender is None or plan.same_cluster(sender, ctx.me):
        buffer.append(case)
    return []


def inter_master_sync(
    plan: ClusterPlan,
    ctx: PolicyContext,
    buffer: list[TestCase],
    period: int,
    directory: Optional[UtilityDirectory] = None,
) -> list[tuple[NodeId, TestCase]]:
    """At period boundaries a master ships its staged delta to peer masters."""
    if not plan.is_master(ctx.me) or ctx.now % period != 0 or not buffer:
        return []
    peers = plan.peer_masters(ctx.me)
    if directory is not None:
        peers = [p for p in peers if p in directory.interested]
    sends = [(p, case) for case in buffer for p in peers]
    buffer.clear()
    return sends


# -- baseline ----------------------------------------------------------------


def route_baseline(case: TestCase, buffer: list[TestCase]) -> list[NodeId]:
    buffer.append(case)
    return []


def baseline_sync(
    ctx: PolicyContext, buffer: list[TestCase], period: int
) -> list[tuple[NodeId, TestCase]]:
    if ctx.now % period != 0 or not buffer:
        return []
    peers = [r for r in range(ctx.n_nodes) if r != ctx.me]
    sends = [(p, case) for case in buffer for p in peers]
    buffer.clear()
    return sends


# -- ammuina -----------------------------------------------------------------


@dataclass
class AmmuinaState:
    last_progress_tick: Tick = 0
    last_round_tick: Tick = 0
    pending_request: bool = False


def check_stagnation(
    st: AmmuinaState, coverage_increment: int, now: Tick, cfg: CampaignConfig
) -> bool:
    if coverage_increment >= cfg.t_inc:
        st.last_progress_tick = now
        return False
    return (
        now - st.last_progress_tick >= cfg.t_time
        and now - st.last_round_tick >= cfg.ammuina_cooldown
    )


def ammuina_contribution(new_cases: Sequence[TestCase], cap: int) -> list[TestCase]:
    """Up to ``cap`` of the most recently found cases, newest first."""
    return list(reversed(new_cases))[:cap]


def run_ammuina_round(
    new_cases: Sequence[Sequence[TestCase]],
    cap: int,
    transport: Transport,
    now: Tick,
) -> tuple[list[list[TestCase]], list[list[TestCase]]]:
    """Collect every node's contribution and exchange them all-to-all.

    Returns ``(contributions, received)``; the caller evaluates ``received``
    and resets each node's new-case list and round clock.
    """
    contributions = [ammuina_contribution(cases, cap) for cases in new_cases]
    received = transport.exchange_all(contributions, now)
    return contributions, received


# -- per-node policy objects -------------------------------------------------


class Policy:
    """No dissemination at all (isolated fuzzers)."""

    kind = PolicyKind.NONE
    #: baseline charges an extra file-handling cost per synced case
    file_based = False

    def route(self, case: TestCase, ctx: PolicyContext, sender: Optional[NodeId] = None) -> list[NodeId]:
        return []

    def periodic(self, ctx: PolicyContext) -> list[tuple[NodeId, TestCase]]:
        return []

    def on_evaluated(self, sender: NodeId, useful: bool) -> Optional[LowUtilityNotice]:
        return None

    def on_low_utility(self, notice_from: NodeId) -> None:
        pass


class SelectivePolicy(Policy):
    kind = PolicyKind.SELECTIVE

    def route(self, case, ctx, sender=None):
        return [r for r in route_selective(case, ctx) if r != sender and r != case.origin]


class DynamicPolicy(Policy):
    kind = PolicyKind.DYNAMIC

    def __init__(self, me: NodeId, n_nodes: int, u_min: int) -> None:
        self.directory = UtilityDirectory.fresh(me, n_nodes, u_min)

    def route(self, case, ctx, sender=None):
        exclude = frozenset({case.origin} if sender is None else {case.origin, sender})
        return route_dynamic(case, self.directory, ctx, exclude)

    def on_evaluated(self, sender, useful):
        return record_evaluation(self.directory, sender, useful)

    def on_low_utility(self, notice_from):
        handle_low_utility(self.directory, notice_from)


class HierarchicalPolicy(Policy):
    kind = PolicyKind.HIERARCHICAL

    def __init__(
        self,
        me: NodeId,
        plan: ClusterPlan,
        period: int,
        utility_filter: bool = False,
        u_min: int = -5,
    ) -> None:
        self.plan = plan
        self.period = period
        self.buffer: list[TestCase] = []
        self.directory = (
            UtilityDirectory.fresh(me, len(plan.class_of), u_min) if utility_filter else None
        )

    def route(self, case, ctx, sender=None):
        return route_hierarchical(case, self.plan, ctx, self.buffer, sender)

    def periodic(self, ctx):
        return inter_master_sync(self.plan, ctx, self.buffer, self.period, self.directory)

    def on_evaluated(self, sender, useful):
        # utility filtering only concerns traffic between masters
        if self.directory is None or self.plan.same_cluster(sender, self.directory.owner):
            return None
        return record_evaluation(self.directory, sender, useful)

    def on_low_utility(self, notice_from):
        if self.directory is not None:
            handle_low_utility(self.directory, notice_from)


class BaselinePolicy(Policy):
    """Periodic batched broadcast of locally found cases, like a cron'd
    tar-and-copy of each queue directory."""

    kind = PolicyKind.BASELINE_PERIODIC
    file_based = True

    def __init__(self, period: int) -> None:
        self.period = period
        self.buffer: list[TestCase] = []

    def route(self, case, ctx, sender=None):
        if sender is not None:
            return []
        return route_baseline(case, self.buffer)

    def periodic(self, ctx):
        return baseline_sync(ctx, self.buffer, self.period)


def make_policy(cfg: CampaignConfig, me: NodeId, plan: Optional[ClusterPlan] = None) -> Policy:
    kind = cfg.policy
    if kind is PolicyKind.NONE:
        return Policy()
    if kind is PolicyKind.SELECTIVE:
        return SelectivePolicy()
    if kind is PolicyKind.DYNAMIC:
        return DynamicPolicy(me, cfg.n_nodes, cfg.u_min)
    if kind is PolicyKind.HIERARCHICAL:
        plan = plan or build_cluster_plan(cfg.class_assignment)
        return HierarchicalPolicy(
            me, plan, cfg.inter_master_period, cfg.hierarchical_utility_filter, cfg.u_min
        )
    if kind is PolicyKind.BASELINE_PERIODIC:
        return BaselinePolicy(cfg.baseline_period)
    raise ValueError(f"unknown policy {kind!r}")
