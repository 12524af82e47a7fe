"""Simulated fuzzer node standing in for one AFL++ instance.

A :class:`FuzzerNode` owns a corpus, a deterministic random stream and a
dissemination policy. Its two integration points mirror the places where a
real fuzzer is patched: :meth:`FuzzerNode.save_if_interesting` dispatches
novel inputs, :meth:`FuzzerNode.sync_fuzzers` drains the inbox.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .core import (
    AmmuinaRequest,
    CampaignConfig,
    CoverageMap,
    FuzzerClass,
    InterestingInput,
    LowUtilityNotice,
    Message,
    NodeId,
    TestCase,
    Tick,
)
from .policy import AmmuinaState, Policy, PolicyContext
from .rng import SplitMix64, node_seed
from .target import ExecutionResult, Gate, TargetSpec, gating_violations, run_target
from .transport import Transport

DEFAULT_SEED = b"\x00" * 4

# Mutation operator names, in selection order.
BIT_FLIP, OVERWRITE, RESIZE, SPLICE, GATE_SOLVE = range(5)

LogHook = Callable[[Tick, NodeId, NodeId, str], None]


class SelfSend(ValueError):
    pass


@dataclass
class Corpus:
    cases: list[TestCase] = field(default_factory=list)
    branch_sets: list[frozenset] = field(default_factory=list)
    coverage: CoverageMap = field(default_factory=CoverageMap)
    crashes_found: int = 0
    new_since_ammuina: list[TestCase] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.cases)

    def add(self, case: TestCase, branches: frozenset) -> None:
        self.cases.append(case)
        self.branch_sets.append(branches)
        self.new_since_ammuina.append(case)


def gate_solve(payload: bytes, gate: Gate) -> bytes:
    """Write ``gate.expected`` at ``gate.offset``, zero-padding if short."""
    buf = bytearray(payload)
    end = gate.offset + len(gate.expected)
    if len(buf) < end:
        buf.extend(b"\x00" * (end - len(buf)))
    buf[gate.offset:end] = gate.expected
    return bytes(buf)


def colorize(payload: bytes, rng: SplitMix64, target: TargetSpec, branches: frozenset) -> bytes:
    """Randomize every byte no covered gate inspects, keeping the path intact.

    Input-to-state solvers do this before locating comparison operands.
    """
    pinned = set()
    for b in branches:
        g = target.by_id.get(b)
        if g is not None:
            pinned.update(range(g.offset, g.offset + len(g.expected)))
    return bytes(
        byte if i in pinned else rng.below(256) for i, byte in enumerate(payload)
    )


def solvable_gates(
    target: TargetSpec,
    parent_branches: frozenset,
    coverage: CoverageMap,
    fuzzer_class: FuzzerClass,
) -> list[Gate]:
    """Uncovered gates directly behind the parent's coverage that this class
    can see through."""
    out = []
    for b in sorted(parent_branches):
        for g in target.children.get(b, ()):
            if g.id in coverage:
                continue
            if g.class_hint is not None and g.class_hint != fuzzer_class:
                continue
            out.append(g)
    return out


def mutate(
    parent: bytes,
    rng: SplitMix64,
    fuzzer_class: FuzzerClass,
    *,
    target: TargetSpec,
    coverage: CoverageMap,
    parent_branches: frozenset = frozenset({0}),
    partner: bytes = b"",
    p_solve: float = 0.0,
    max_input_len: int = 1024,
) -> bytes:
    """Produce one mutant of ``parent``.

    With probability ``p_solve`` the node tries a gate-solve (the model for
    input-to-state and comparison-splitting instrumentation); otherwise, or if
    no gate is solvable, one of bit flip / byte overwrite / resize / splice
    is drawn uniformly.
    """
    if p_solve > 0.0 and rng.random() < p_solve:
        gates = solvable_gates(target, parent_branches, coverage, fuzzer_class)
        if gates:
            gate = gates[rng.below(len(gates))]
            out = gate_solve(colorize(parent, rng, target, parent_branches), gate)
            return out[:max_input_len]
    op = rng.below(4)
    buf = bytearray(parent)
    if op == BIT_FLIP:
        if not buf:
            buf.append(rng.below(256))
        else:
            pos = rng.below(len(buf))
            buf[pos] ^= 1 << rng.below(8)
    elif op == OVERWRITE:
        if not buf:
            buf.append(rng.below(256))
        else:
            buf[rng.below(len(buf))] = rng.below(256)
    elif op == RESIZE:
        k = 1 + rng.below(4)
        if rng.below(2) and buf:
            del buf[max(0, len(buf) - k):]
        else:
            buf.extend(rng.randbytes(k))
    else:
        span = max(len(buf), len(partner))
        cut = rng.below(span + 1)
        buf = buf[:cut] + bytearray(partner[cut:])
    return bytes(buf[:max_input_len])


class FuzzerNode:
    def __init__(
        self,
        rank: NodeId,
        cfg: CampaignConfig,
        target: TargetSpec,
        policy: Policy,
        transport: Transport,
        log: Optional[LogHook] = None,
        check_invariants: bool = True,
    ) -> None:
        self.rank = rank
        self.cfg = cfg
        self.cls = cfg.class_assignment[rank]
        self.target = target
        self.policy = policy
        self.transport = transport
        self.log = log
        self.check_invariants = check_invariants
        self.rng = SplitMix64(node_seed(cfg.seed, rank))
        self.p_solve = cfg.p_solve[self.cls]
        self.corpus = Corpus()
        self.ammuina = AmmuinaState()
        self.sync_cost = 0
        self.crash_ids: set[int] = set()
        self.first_crash_tick: Optional[Tick] = None
        self.branch_first_tick: dict[int, Tick] = {}
        self.fuzz_execs = 0
        self.sync_execs = 0
        self.invariant_violations: list[str] = []
        self.ammuina_inbox: list[tuple[Tick, list[TestCase]]] = []
        self.requests_received = 0
        self._ctx_static = (cfg.n_nodes, self.cls, tuple(cfg.class_assignment))

    @property
    def coverage(self) -> CoverageMap:
        return self.corpus.coverage

    def ctx(self, now: Tick) -> PolicyContext:
        n, cls, classes = self._ctx_static
        return PolicyContext(self.rank, n, cls, classes, now)

    # -- execution ---------------------------------------------------------

    def execute(self, payload: bytes) -> ExecutionResult:
        result = run_target(self.target, payload, self.cfg.max_input_len)
        if self.check_invariants:
            bad = gating_violations(self.target, result)
            if bad:
                self.invariant_violations.append(f"gating: branches {bad} without parent")
        return result

    def seed_corpus(self, seeds: Sequence[bytes] = ()) -> None:
        for payload in seeds or self.target.seeds or [DEFAULT_SEED]:
            case = TestCase(payload, self.rank, 0)
            self.save_if_interesting(case, self.execute(payload), 0, route=False)

    def fuzz_one(self, now: Tick) -> None:
        corpus = self.corpus
        rng = self.rng
        i = rng.below(len(corpus))
        partner = corpus.cases[rng.below(len(corpus))].payload
        payload = mutate(
            corpus.cases[i].payload,
            rng,
            self.cls,
            target=self.target,
            coverage=corpus.coverage,
            parent_branches=corpus.branch_sets[i],
            partner=partner,
            p_solve=self.p_solve,
            max_input_len=self.cfg.max_input_len,
        )
        result = self.execute(payload)
        self.fuzz_execs += 1
        if result.crashed or corpus.coverage.is_novel(result.branches):
            self.save_if_interesting(TestCase(payload, self.rank, now), result, now)

    # -- integration points ------------------------------------------------

    def send(self, dest: NodeId, msg: Message, now: Tick) -> None:
        if dest == self.rank:
            raise SelfSend(f"node {self.rank} attempted to send to itself")
        self.transport.send_async(self.rank, dest, msg, now)
        self.sync_cost += self.cfg.c_send
        if self.log is not None:
            self.log(now, self.rank, dest, msg.kind)

    def save_if_interesting(
        self,
        case: TestCase,
        result: ExecutionResult,
        now: Tick,
        sender: Optional[NodeId] = None,
        route: bool = True,
    ) -> bool:
        """Keep ``case`` if it reaches new branches and hand it to the policy.

        Crashing inputs are counted once per payload whether or not they are
        novel. ``sender`` is set for inputs received from a peer.
        """
        corpus = self.corpus
        if result.crashed and case.id not in self.crash_ids:
            self.crash_ids.add(case.id)
            corpus.crashes_found += 1
            if self.first_crash_tick is None:
                self.first_crash_tick = now
        if not corpus.coverage.is_novel(result.branches):
            return False
        for b in result.branches:
            if b not in corpus.coverage:
                self.branch_first_tick[b] = now
        corpus.coverage.merge(result.branches)
        corpus.add(case, result.branches)
        if route:
            for dest in self.policy.route(case, self.ctx(now), sender):
                self.send(dest, InterestingInput(case), now)
        return True

    def sync_fuzzers(self, now: Tick, periodic: bool = True) -> int:
        """Drain every deliverable message, then run the policy's periodic
        sync. Returns the number of messages processed."""
        cfg = self.cfg
        processed = 0
        while True:
            src = self.transport.probe(self.rank, now)
            if src is None:
                break
            msg = self.transport.receive(self.rank, src, now)
            processed += 1
            self.sync_cost += cfg.c_recv
            if isinstance(msg, InterestingInput):
                if self.policy.file_based:
                    self.sync_cost += cfg.c_file
                result = self.execute(msg.case.payload)
                self.sync_execs += 1
                useful = self.save_if_interesting(msg.case, result, now, sender=src)
                notice = self.policy.on_evaluated(src, useful)
                if notice is not None:
                    self.send(src, notice, now)
            elif isinstance(msg, LowUtilityNotice):
                self.policy.on_low_utility(msg.sender)
            elif isinstance(msg, AmmuinaRequest):
                self.ammuina.pending_request = True
                self.requests_received += 1
            else:
                raise TypeError(f"unexpected point-to-point message {msg!r}")

        sends = self.policy.periodic(self.ctx(now)) if periodic else []
        if sends and self.policy.file_based:
            self.sync_cost += cfg.c_file * len({case.id for _, case in sends})
        for dest, case in sends:
            self.send(dest, InterestingInput(case), now)
        return processed

    def absorb_ammuina(self, now: Tick) -> int:
        """Evaluate exchanged batches whose collective has completed."""
        ready = [b for b in self.ammuina_inbox if b[0] <= now]
        if not ready:
            return 0
        self.ammuina_inbox = [b for b in self.ammuina_inbox if b[0] > now]
        n = 0
        for _, cases in ready:
            for case in cases:
                self.sync_cost += self.cfg.c_recv
                result = self.execute(case.payload)
                self.sync_execs += 1
                self.save_if_interesting(case, result, now, route=False)
                n += 1
        return n
