"""Order-preserving sequence packing into fixed-capacity batches."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .core import InvalidInputError


@dataclass(frozen=True)
class PackEntry:
    seq: int
    used: int


@dataclass(frozen=True)
class PackPlan:
    capacity: int
    packs: tuple[tuple[PackEntry, ...], ...]
    # indices of sequences longer than capacity, clipped to it
    clipped: tuple[int, ...] = field(default=())
    num_sequences: int = 0

    @property
    def used_tokens(self) -> int:
        return sum(e.used for p in self.packs for e in p)

    @property
    def utilization(self) -> float:
        if not self.packs:
            return 0.0
        return self.used_tokens / (len(self.packs) * self.capacity)

    @property
    def baseline_utilization(self) -> float:
        """Utilization of pad-and-clip batching: one sequence per row."""
        if not self.num_sequences:
            return 0.0
        return self.used_tokens / (self.num_sequences * self.capacity)

    @property
    def iteration_ratio(self) -> float:
        """Padded rows per packed row; the speedup proxy."""
        return self.num_sequences / len(self.packs) if self.packs else 0.0

    def to_dict(self) -> dict:
        return {
            "capacity": self.capacity,
            "packs": [[{"seq": e.seq, "used": e.used} for e in p] for p in self.packs],
            "clipped": list(self.clipped),
            "utilization": self.utilization,
            "pad_utilization": self.baseline_utilization,
            "iteration_ratio": self.iteration_ratio,
        }


def pack_sequences(lengths: Sequence[int], capacity: int) -> PackPlan:
    """Greedy next-fit packing in input order.

    A sequence joins the current pack if it fits, otherwise it starts a new
    one. Sequences longer than ``capacity`` are clipped to it and flagged.
    For order-preserving contiguous grouping next-fit uses the minimum number
    of packs.
    """
    if capacity < 1:
        raise InvalidInputError(f"capacity must be >= 1, got {capacity}")
    packs: list[list[PackEntry]] = []
    clipped = []
    room = 0
    for i, n in enumerate(lengths):
        n = int(n)
        if n < 1:
            raise InvalidInputError(f"sequence {i} has non-positive length {n}")
        if n > capacity:
            clipped.append(i)
            n = capacity
        if not packs or n > room:
            packs.append([])
            room = capacity
        packs[-1].append(PackEntry(i, n))
        room -= n
    return PackPlan(
        capacity, tuple(tuple(p) for p in packs), tuple(clipped), len(lengths)
    )


@dataclass(frozen=True)
class PaddingComparison:
    pack_util: float
    pad_util: float
    iteration_ratio: float


def compare_padding(lengths: Sequence[int], capacity: int) -> PaddingComparison:
    plan = pack_sequences(lengths, capacity)
    return PaddingComparison(plan.utilization, plan.baseline_utilization, plan.iteration_ratio)
