"""Deterministic per-node random stream.

The generator is SplitMix64 so any implementation can reproduce a campaign
exactly:

    state  = (state + 0x9E3779B97F4A7C15) mod 2**64
    z      = state
    z      = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9  mod 2**64
    z      = (z ^ (z >> 27)) * 0x94D049BB133111EB  mod 2**64
    output = z ^ (z >> 31)

Derived draws:

    below(n)  = (next_u64() * n) >> 64          # integer in [0, n)
    random()  = (next_u64() >> 11) * 2**-53     # float in [0, 1)

A node's initial state is ``mix64(campaign_seed ^ mix64(rank + 1))`` where
``mix64`` is the output finalizer above applied to a single value after the
golden-ratio increment.
"""

from __future__ import annotations

_MASK = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15


def mix64(x: int) -> int:
    z = (x + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def node_seed(campaign_seed: int, rank: int) -> int:
    return mix64((campaign_seed & _MASK) ^ mix64(rank + 1))


class SplitMix64:
    __slots__ = ("state",)

    def __init__(self, seed: int) -> None:
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + _GOLDEN) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        if n <= 0:
            raise ValueError("below() needs a positive bound")
        return (self.next_u64() * n) >> 64

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def randbytes(self, n: int) -> bytes:
        return bytes(self.below(256) for _ in range(n))
