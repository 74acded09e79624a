"""Hierarchical task scheduler: topology wiring and transports."""

from __future__ import annotations

from dataclasses import dataclass

from ..core import PRODUCER, WorkerId
from ..messages import WorkerDeath
from ..topology import Topology
from .executor import (
    ExecutionOutcome,
    ResultsParseError,
    WorkDirError,
    execute_task,
    parse_results,
    task_workdir,
)
from .loops import BatchingPolicy, BufferLoop, ConsumerLoop, ProducerLoop
from .tcp import TcpTransport, transport_tcp
from .transport import (
    ThreadedTransport,
    VirtualOutcome,
    VirtualTransport,
    sleep_interpreter,
)

__all__ = [
    "BatchingPolicy",
    "ExecutionOutcome",
    "ResultsParseError",
    "SchedulerHandle",
    "TcpTransport",
    "ThreadedTransport",
    "VirtualOutcome",
    "VirtualTransport",
    "WorkDirError",
    "execute_task",
    "parse_results",
    "task_workdir",
    "sleep_interpreter",
    "start_topology",
    "transport_inprocess",
    "transport_tcp",
]


def transport_inprocess(
    topology: Topology | None = None,
    *,
    virtual: bool = False,
    task_fn=None,
    work_root="caravan_work",
):
    """In-process transport; ``virtual=True`` selects the deterministic
    virtual-time runtime with simulated executions."""
    if virtual:
        return VirtualTransport(task_fn=task_fn)
    return ThreadedTransport(work_root=work_root)


@dataclass
class SchedulerHandle:
    """Live topology: producer, buffers, and consumers registered on a transport."""

    topology: Topology
    transport: object
    producer: ProducerLoop
    buffers: dict[WorkerId, BufferLoop]
    consumers: dict[WorkerId, ConsumerLoop]

    def kill_consumer(self, consumer_id: WorkerId, delay: float = 0.0) -> None:
        """Inject a consumer death: the worker vanishes and its buffer is told.

        On the virtual transport ``delay`` defers the death in virtual time.
        """
        buffer_id = self.topology.buffer_of(consumer_id)
        transport = self.transport

        def fire() -> None:
            transport.kill_worker(consumer_id)
            transport.send(consumer_id, buffer_id, WorkerDeath(consumer_id))

        if getattr(transport, "is_virtual", False):
            transport.schedule_call(None, fire, delay)
        else:
            fire()

    def force_stop(self) -> None:
        stop = getattr(self.transport, "force_stop", None)
        if stop is not None:
            stop()


def start_topology(
    topology: Topology,
    transport,
    batching: BatchingPolicy = BatchingPolicy(),
) -> SchedulerHandle:
    """Register producer, buffer, and consumer loops and start them.

    On transport setup failure nothing is left running.
    """
    producer = ProducerLoop(topology.buffer_ids())
    buffers: dict[WorkerId, BufferLoop] = {}
    consumers: dict[WorkerId, ConsumerLoop] = {}
    try:
        transport.register(PRODUCER, producer)
        for bid in topology.buffer_ids():
            assigned = topology.consumers_of(bid)
            buffers[bid] = BufferLoop(bid, assigned, batching)
            transport.register(bid, buffers[bid])
            for cid in assigned:
                consumers[cid] = ConsumerLoop(cid, bid)
                transport.register(cid, consumers[cid])
        transport.start()
    except Exception:
        stop = getattr(transport, "force_stop", None)
        if stop is not None:
            stop()
        raise
    return SchedulerHandle(topology, transport, producer, buffers, consumers)
