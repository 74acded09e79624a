"""caravan: task farming across a producer/buffer/consumer worker topology,
driven by a cooperative search-engine event loop.

Typical embedded use::

    from caravan import Topology, transport_inprocess, start_topology, Engine

    topo = Topology(num_consumers=8)
    sched = start_topology(topo, transport_inprocess(topo, virtual=True))
    engine = Engine(sched)

    def program():
        for i in range(10):
            engine.task_create(f"echo hello caravan {i}")

    report = engine.server_start(program)
"""

from .core import (
    ENGINE,
    PRODUCER,
    CaravanError,
    RenderError,
    TaskId,
    TaskRecord,
    TaskSpec,
    TaskState,
    TransitionError,
    WorkerId,
    render_command,
)
from .engine import Engine, ExitReport, ParameterSet, Run, server_start
from .scheduler import (
    BatchingPolicy,
    SchedulerHandle,
    VirtualOutcome,
    execute_task,
    parse_results,
    start_topology,
    transport_inprocess,
)
from .topology import Topology

__version__ = "0.1.0"

__all__ = [
    "ENGINE",
    "PRODUCER",
    "BatchingPolicy",
    "CaravanError",
    "Engine",
    "ExitReport",
    "ParameterSet",
    "RenderError",
    "Run",
    "SchedulerHandle",
    "TaskId",
    "TaskRecord",
    "TaskSpec",
    "TaskState",
    "Topology",
    "TransitionError",
    "VirtualOutcome",
    "WorkerId",
    "execute_task",
    "parse_results",
    "render_command",
    "server_start",
    "start_topology",
    "transport_inprocess",
    "__version__",
]
