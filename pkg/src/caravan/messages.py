"""Scheduler wire contract: the message variants exchanged between the engine,
producer, buffers, and consumers, plus their canonical JSON encoding.

The JSON form is what the TCP transport frames on the wire; the in-process
transports pass the dataclasses directly. Encoding is canonical (fixed field
order, compact separators) so transcripts are byte-stable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Union

from .core import TaskId, TaskRecord, TaskSpec, TaskState, WorkerId


@dataclass(frozen=True, slots=True)
class EnqueueTasks:
    """Task injection: engine -> producer and producer -> buffer."""

    tasks: tuple[TaskSpec, ...]


@dataclass(frozen=True, slots=True)
class RequestTasks:
    """Pull request: buffer -> producer."""

    buffer_id: WorkerId
    capacity: int


@dataclass(frozen=True, slots=True)
class Dispatch:
    """Single task hand-off: buffer -> consumer."""

    task: TaskSpec


@dataclass(frozen=True, slots=True)
class TaskStarted:
    """Execution began: consumer -> buffer -> producer."""

    task_id: TaskId
    worker: WorkerId
    start_at: float


@dataclass(frozen=True, slots=True)
class TaskDone:
    """Execution finished or failed: consumer -> buffer."""

    record: TaskRecord


@dataclass(frozen=True, slots=True)
class ResultBatch:
    """Batched completions: buffer -> producer -> engine. Never empty."""

    records: tuple[TaskRecord, ...]
    flush_reason: str  # size_threshold | time_threshold | shutdown

    def __post_init__(self) -> None:
        if not self.records:
            raise ValueError("ResultBatch must be non-empty")


@dataclass(frozen=True, slots=True)
class NoMoreTasks:
    """Shutdown marker: engine -> producer -> buffers -> consumers."""


@dataclass(frozen=True, slots=True)
class Hello:
    """TCP session bootstrap: a worker identifies itself to its parent."""

    worker: WorkerId


@dataclass(frozen=True, slots=True)
class WorkerDeath:
    """Transport-generated event: a child worker's connection or loop is gone."""

    worker: WorkerId


Message = Union[
    EnqueueTasks,
    RequestTasks,
    Dispatch,
    TaskStarted,
    TaskDone,
    ResultBatch,
    NoMoreTasks,
    Hello,
    WorkerDeath,
]

FLUSH_SIZE = "size_threshold"
FLUSH_TIME = "time_threshold"
FLUSH_SHUTDOWN = "shutdown"


def _spec_to_obj(spec: TaskSpec) -> dict:
    return {"id": int(spec.id), "command": spec.command, "input": list(spec.input)}


def _spec_from_obj(obj: dict) -> TaskSpec:
    return TaskSpec(
        id=TaskId(int(obj["id"])),
        command=obj["command"],
        input=tuple(float(v) for v in obj["input"]),
    )


def _record_to_obj(rec: TaskRecord) -> dict:
    return {
        "spec": _spec_to_obj(rec.spec),
        "state": rec.state.value,
        "rc": rec.rc,
        "results": list(rec.results),
        "start_at": rec.start_at,
        "finish_at": rec.finish_at,
        "place": None if rec.place is None else int(rec.place),
        "warning": rec.warning,
    }


def _record_from_obj(obj: dict) -> TaskRecord:
    return TaskRecord(
        spec=_spec_from_obj(obj["spec"]),
        state=TaskState(obj["state"]),
        rc=obj["rc"],
        results=[float(v) for v in obj["results"]],
        start_at=obj["start_at"],
        finish_at=obj["finish_at"],
        place=None if obj["place"] is None else WorkerId(int(obj["place"])),
        warning=obj.get("warning"),
    )


def encode_message(msg: Message) -> bytes:
    """Canonical UTF-8 JSON encoding of a Message."""
    if isinstance(msg, EnqueueTasks):
        obj = {"type": "enqueue_tasks", "tasks": [_spec_to_obj(t) for t in msg.tasks]}
    elif isinstance(msg, RequestTasks):
        obj = {"type": "request_tasks", "buffer_id": int(msg.buffer_id), "capacity": msg.capacity}
    elif isinstance(msg, Dispatch):
        obj = {"type": "dispatch", "task": _spec_to_obj(msg.task)}
    elif isinstance(msg, TaskStarted):
        obj = {
            "type": "task_started",
            "task_id": int(msg.task_id),
            "worker": int(msg.worker),
            "start_at": msg.start_at,
        }
    elif isinstance(msg, TaskDone):
        obj = {"type": "task_done", "record": _record_to_obj(msg.record)}
    elif isinstance(msg, ResultBatch):
        obj = {
            "type": "result_batch",
            "records": [_record_to_obj(r) for r in msg.records],
            "flush_reason": msg.flush_reason,
        }
    elif isinstance(msg, NoMoreTasks):
        obj = {"type": "no_more_tasks"}
    elif isinstance(msg, Hello):
        obj = {"type": "hello", "worker": int(msg.worker)}
    elif isinstance(msg, WorkerDeath):
        obj = {"type": "worker_death", "worker": int(msg.worker)}
    else:
        raise TypeError(f"not a Message: {msg!r}")
    return json.dumps(obj, separators=(",", ":")).encode("utf-8")


def decode_message(payload: bytes) -> Message:
    """Inverse of encode_message. Raises ValueError on malformed payloads."""
    obj = json.loads(payload.decode("utf-8"))
    if not isinstance(obj, dict) or "type" not in obj:
        raise ValueError("message payload must be a JSON object with a 'type' field")
    kind = obj["type"]
    if kind == "enqueue_tasks":
        return EnqueueTasks(tasks=tuple(_spec_from_obj(t) for t in obj["tasks"]))
    if kind == "request_tasks":
        return RequestTasks(buffer_id=WorkerId(int(obj["buffer_id"])), capacity=int(obj["capacity"]))
    if kind == "dispatch":
        return Dispatch(task=_spec_from_obj(obj["task"]))
    if kind == "task_started":
        return TaskStarted(
            task_id=TaskId(int(obj["task_id"])),
            worker=WorkerId(int(obj["worker"])),
            start_at=float(obj["start_at"]),
        )
    if kind == "task_done":
        return TaskDone(record=_record_from_obj(obj["record"]))
    if kind == "result_batch":
        return ResultBatch(
            records=tuple(_record_from_obj(r) for r in obj["records"]),
            flush_reason=obj["flush_reason"],
        )
    if kind == "no_more_tasks":
        return NoMoreTasks()
    if kind == "hello":
        return Hello(worker=WorkerId(int(obj["worker"])))
    if kind == "worker_death":
        return WorkerDeath(worker=WorkerId(int(obj["worker"])))
    raise ValueError(f"unknown message type {kind!r}")
