"""Asynchronous message passing with an outbound send queue.

:class:`Transport` exposes only the primitives a fuzzing node needs:
non-blocking send, any-source probe, receive, and an all-to-all exchange.
:class:`InMemoryTransport` is a deterministic implementation driven by
integer ticks. An MPI-backed transport would map these onto ``Isend``,
``Test``, ``Iprobe``/``Recv`` and a scatter/gather collective.
"""

from __future__ import annotations

import abc
import itertools
import math
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from .core import Message, NodeId, TestCase, Tick


class TransportError(Exception):
    pass


class UnknownDestination(TransportError):
    pass


class NothingToReceive(TransportError):
    pass


@dataclass(frozen=True)
class LatencyModel:
    base_latency: int = 1
    per_byte_latency: Fraction = Fraction(0)

    def delay(self, size: int) -> int:
        return self.base_latency + math.ceil(Fraction(self.per_byte_latency) * size)

    def delivery_tick(self, send_tick: Tick, size: int) -> Tick:
        return send_tick + self.delay(size)


@dataclass(frozen=True)
class PendingSend:
    handle: int
    dest: NodeId
    message: Message
    enqueued_at: Tick
    delivery_tick: Tick


class SendQueue:
    """In-flight outbound sends of one node, in enqueue order.

    An entry is released only once its message has reached the destination
    (``delivery_tick <= now``), mirroring a completed ``MPI_Test``.
    """

    def __init__(self) -> None:
        self.entries: list[PendingSend] = []

    def push(self, entry: PendingSend) -> None:
        self.entries.append(entry)

    def poll_completions(self, now: Tick) -> int:
        kept = [e for e in self.entries if e.delivery_tick > now]
        released = len(self.entries) - len(kept)
        self.entries = kept
        return released

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


class Transport(abc.ABC):
    n_nodes: int

    @abc.abstractmethod
    def send_async(self, src: NodeId, dest: NodeId, msg: Message, now: Tick) -> PendingSend: ...

    @abc.abstractmethod
    def poll_completions(self, me: NodeId, now: Tick) -> int: ...

    @abc.abstractmethod
    def probe(self, me: NodeId, now: Tick) -> Optional[NodeId]: ...

    @abc.abstractmethod
    def receive(self, me: NodeId, source: NodeId, now: Tick) -> Message: ...

    @abc.abstractmethod
    def exchange_all(
        self, contributions: Sequence[Sequence[TestCase]], now: Tick
    ) -> list[list[TestCase]]: ...


class InMemoryTransport(Transport):
    """Single-process transport with per-channel FIFO and a latency model.

    Each (source, dest) pair is a FIFO channel. A message becomes visible to
    ``probe`` at its delivery tick; a message never overtakes an earlier one
    on the same channel, so its delivery tick is clamped to be no earlier
    than its predecessor's. Across channels, earlier delivery wins and ties
    go to the lower source rank.
    """

    def __init__(self, n_nodes: int, latency: Optional[LatencyModel] = None) -> None:
        if n_nodes < 1:
            raise ValueError("transport needs at least one node")
        self.n_nodes = n_nodes
        self.latency = latency or LatencyModel()
        self.queues = [SendQueue() for _ in range(n_nodes)]
        # channels[dest][src] -> deque of (delivery_tick, message)
        self._channels: list[list[deque]] = [
            [deque() for _ in range(n_nodes)] for _ in range(n_nodes)
        ]
        self._last_delivery = [[-1] * n_nodes for _ in range(n_nodes)]
        self._handles = itertools.count()
        self.sent = 0
        self.delivered = 0
        self.last_exchange_ready: Optional[Tick] = None

    @property
    def in_flight(self) -> int:
        return self.sent - self.delivered

    def send_async(self, src: NodeId, dest: NodeId, msg: Message, now: Tick) -> PendingSend:
        if not 0 <= dest < self.n_nodes:
            raise UnknownDestination(f"destination {dest} outside 0..{self.n_nodes - 1}")
        if not 0 <= src < self.n_nodes:
            raise UnknownDestination(f"source {src} outside 0..{self.n_nodes - 1}")
        tick = max(self.latency.delivery_tick(now, msg.size), self._last_delivery[dest][src])
        self._last_delivery[dest][src] = tick
        entry = PendingSend(next(self._handles), dest, msg, now, tick)
        self.queues[src].push(entry)
        self._channels[dest][src].append((tick, msg))
        self.sent += 1
        return entry

    def poll_completions(self, me: NodeId, now: Tick) -> int:
        return self.queues[me].poll_completions(now)

    def probe(self, me: NodeId, now: Tick) -> Optional[NodeId]:
        best = None
        best_tick = None
        for src, chan in enumerate(self._channels[me]):
            if chan:
                tick = chan[0][0]
                if tick <= now and (best_tick is None or tick < best_tick):
                    best, best_tick = src, tick
        return best

    def receive(self, me: NodeId, source: NodeId, now: Tick) -> Message:
        if not 0 <= source < self.n_nodes:
            raise NothingToReceive(f"no channel from {source}")
        chan = self._channels[me][source]
        if not chan or chan[0][0] > now:
            raise NothingToReceive(f"nothing deliverable from {source} to {me} at tick {now}")
        _, msg = chan.popleft()
        self.delivered += 1
        return msg

    def pending_for(self, me: NodeId) -> int:
        return sum(len(c) for c in self._channels[me])

    def exchange_all(
        self, contributions: Sequence[Sequence[TestCase]], now: Tick
    ) -> list[list[TestCase]]:
        """Collective all-to-all exchange.

        Node ``i`` gets every other node's contribution concatenated in rank
        order. The exchange completes at ``last_exchange_ready``, charged the
        latency of the largest contribution.
        """
        if len(contributions) != self.n_nodes:
            raise ValueError("exchange_all needs one contribution per node")
        sizes = [sum(len(c.payload) for c in contrib) for contrib in contributions]
        self.last_exchange_ready = self.latency.delivery_tick(now, max(sizes, default=0))
        out = []
        for i in range(self.n_nodes):
            got: list[TestCase] = []
            for j, contrib in enumerate(contributions):
                if j != i:
                    got.extend(contrib)
            out.append(got)
        return out

    def quiescent(self) -> bool:
        return self.in_flight == 0 and all(len(q) == 0 for q in self.queues)
