"""Domain types shared by every module: task identity, specs, lifecycle records.

Everything here is plain data with no I/O. Instances are safe to copy and send
between execution contexts; only TaskRecord is mutable, and its mutation is
confined to the engine's event loop.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field
from enum import Enum
from itertools import count
from typing import Iterator, NewType

TaskId = NewType("TaskId", int)

# Worker address space: 0 is the producer, 1..B are buffers, B+1.. are
# consumers. The engine sits outside the worker topology.
WorkerId = NewType("WorkerId", int)
PRODUCER = WorkerId(0)
ENGINE = WorkerId(-1)


class CaravanError(Exception):
    """Base class for framework errors."""


class RenderError(CaravanError):
    """Command template could not be rendered."""


class TransitionError(CaravanError):
    """Illegal task lifecycle transition."""


class TaskState(Enum):
    CREATED = "created"
    DISPATCHED = "dispatched"
    RUNNING = "running"
    FINISHED = "finished"
    FAILED = "failed"


_LEGAL_TRANSITIONS = {
    (TaskState.CREATED, TaskState.DISPATCHED),
    (TaskState.DISPATCHED, TaskState.RUNNING),
    (TaskState.RUNNING, TaskState.FINISHED),
    (TaskState.RUNNING, TaskState.FAILED),
}


def can_transition(src: TaskState, dst: TaskState) -> bool:
    return (src, dst) in _LEGAL_TRANSITIONS


def require_transition(src: TaskState, dst: TaskState) -> TaskState:
    """Validate a lifecycle step, returning the new state."""
    if not can_transition(src, dst):
        raise TransitionError(f"illegal task state transition {src.value} -> {dst.value}")
    return dst


@dataclass(frozen=True, slots=True)
class TaskSpec:
    """A single simulator execution: id, shell command line, optional numeric payload."""

    id: TaskId
    command: str
    input: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if not self.command:
            raise ValueError("TaskSpec.command must be non-empty")


@dataclass(slots=True)
class TaskRecord:
    """Lifecycle record of one task.

    rc is present iff the task reached FINISHED or FAILED; results are parsed
    from the simulator's ``_results.txt`` when present. Timestamps are
    monotonic-clock readings in seconds (intervals matter, dates do not).
    """

    spec: TaskSpec
    state: TaskState = TaskState.CREATED
    rc: int | None = None
    results: list[float] = field(default_factory=list)
    start_at: float | None = None
    finish_at: float | None = None
    place: WorkerId | None = None
    warning: str | None = None

    def transition(self, dst: TaskState) -> None:
        self.state = require_transition(self.state, dst)

    @property
    def complete(self) -> bool:
        return self.state in (TaskState.FINISHED, TaskState.FAILED)


class TaskIdAllocator:
    """Sequential TaskId source, unique and monotonically increasing per run."""

    def __init__(self) -> None:
        self._counter: Iterator[int] = count(0)

    def next(self) -> TaskId:
        return TaskId(next(self._counter))


def _render_number(value: float) -> str:
    """Shortest round-trip decimal; integral floats drop the trailing '.0'."""
    text = repr(float(value))
    return text[:-2] if text.endswith(".0") else text


def render_command(template: str, input: list[float] | tuple[float, ...], seed: int) -> str:
    """Fill ``{0}``, ``{1}``, ... and ``{seed}`` placeholders in a command template.

    Raises RenderError when a placeholder index is out of range for the input
    or names an unknown field.
    """
    values = [_render_number(v) for v in input]
    for _, name, _, _ in string.Formatter().parse(template):
        if name is None or name == "seed":
            continue
        if not name.isdigit():
            raise RenderError(f"unknown placeholder {{{name}}} in command template")
        if int(name) >= len(values):
            raise RenderError(
                f"placeholder index {name} out of range for {len(values)} input value(s)"
            )
    return template.format(*values, seed=seed)
