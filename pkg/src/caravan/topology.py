"""Worker topology: one producer, B buffers, C consumers.

Buffers bound the producer's fan-out; by default one buffer serves up to 384
consumers. Consumer-to-buffer assignment is balanced so buffer loads differ by
at most one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import PRODUCER, WorkerId

DEFAULT_FANOUT = 384


@dataclass(frozen=True)
class Topology:
    num_consumers: int
    consumers_per_buffer: int = DEFAULT_FANOUT

    def __post_init__(self) -> None:
        if self.num_consumers < 1:
            raise ValueError("num_consumers must be >= 1")
        if self.consumers_per_buffer < 1:
            raise ValueError("consumers_per_buffer must be >= 1")

    @property
    def num_buffers(self) -> int:
        return math.ceil(self.num_consumers / self.consumers_per_buffer)

    @property
    def producer_id(self) -> WorkerId:
        return PRODUCER

    def buffer_ids(self) -> list[WorkerId]:
        return [WorkerId(i) for i in range(1, self.num_buffers + 1)]

    def consumer_ids(self) -> list[WorkerId]:
        first = self.num_buffers + 1
        return [WorkerId(i) for i in range(first, first + self.num_consumers)]

    def consumers_of(self, buffer_id: WorkerId) -> list[WorkerId]:
        """Consumers assigned to a buffer; loads differ by at most 1."""
        b = self.num_buffers
        if not 1 <= buffer_id <= b:
            raise ValueError(f"{buffer_id} is not a buffer id")
        base, extra = divmod(self.num_consumers, b)
        idx = buffer_id - 1
        start = idx * base + min(idx, extra)
        size = base + (1 if idx < extra else 0)
        first = b + 1
        return [WorkerId(first + start + i) for i in range(size)]

    def buffer_of(self, consumer_id: WorkerId) -> WorkerId:
        for bid in self.buffer_ids():
            if consumer_id in self.consumers_of(bid):
                return bid
        raise ValueError(f"{consumer_id} is not a consumer id")

    def role_of(self, worker_id: WorkerId) -> str:
        if worker_id == PRODUCER:
            return "producer"
        if 1 <= worker_id <= self.num_buffers:
            return "buffer"
        if self.num_buffers < worker_id <= self.num_buffers + self.num_consumers:
            return "consumer"
        raise ValueError(f"worker id {worker_id} outside topology")
