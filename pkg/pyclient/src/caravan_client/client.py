"""Cooperative client loop over the stdio line protocol.

The main thread owns the event pump; activities run on baton-passing helper
threads so their awaits can block naturally while remaining strictly
cooperative (one runnable context at a time, FIFO resumption). Callbacks run
inline on the pump thread when their task's completion event is applied.
"""

from __future__ import annotations

import json
import os
import sys
import threading
from collections import deque

TRANSCRIPT_ENV = "CARAVAN_CLIENT_TRANSCRIPT"


class ClientError(Exception):
    """Protocol or session failure; carries a partial summary when known."""

    def __init__(self, message, summary=None):
        super().__init__(message)
        self.summary = summary


class Task:
    """Client-side mirror of one host task."""

    def __init__(self, command: str):
        self.command = command
        self.id: int | None = None
        self.done = False
        self.rc: int | None = None
        self.results: list[float] = []
        self.start_at: float | None = None
        self.finish_at: float | None = None
        self.place: int | None = None
        self._callbacks: list = []

    @classmethod
    def create(cls, command: str) -> "Task":
        return Server.current().create_task(command)

    def add_callback(self, fn) -> None:
        """fn(task) runs exactly once after completion, in registration order."""
        Server.current().add_callback(self, fn)

    def __repr__(self) -> str:
        state = "done" if self.done else "pending"
        return f"Task(id={self.id}, {state})"


class _Activity:
    def __init__(self, server: "Server", fn, name: str):
        self.name = name
        self.fn = fn
        self.done = False
        self.error: BaseException | None = None
        self.pending: set[int] = set()
        self._server = server
        self._gate = threading.Event()
        self._thread = threading.Thread(target=self._run, name=name, daemon=True)
        self._started = False

    def _run(self) -> None:
        self._gate.wait()
        self._gate.clear()
        try:
            self.fn()
        except BaseException as exc:
            self.error = exc
        self.done = True
        self._server._pump_gate.set()

    def resume(self) -> None:
        server = self._server
        server._pump_gate.clear()
        if not self._started:
            self._started = True
            self._thread.start()
        self._gate.set()
        server._pump_gate.wait()

    def block(self) -> None:
        self._server._pump_gate.set()
        self._gate.wait()
        self._gate.clear()


class Server:
    """One protocol session; use ``with Server.start():``."""

    _current: "Server | None" = None

    def __init__(self, reader=None, writer=None):
        self._reader = reader
        self._writer = writer
        self._tasks: dict[int, Task] = {}
        self._awaiting_ids: deque[Task] = deque()
        self._ready: deque = deque()
        self._waiting: dict[int, list[_Activity]] = {}
        self._activities: list[_Activity] = []
        self._outstanding = 0
        self._finished = 0
        self._failed = 0
        self._protocol_errors: list[str] = []
        self._summary: dict | None = None
        self._current_activity: _Activity | None = None
        self._pump_gate = threading.Event()
        self._transcript_out = None
        self._transcript_in = None

    # -- session lifecycle ---------------------------------------------------------

    @classmethod
    def start(cls, reader=None, writer=None) -> "Server":
        server = cls(reader, writer)
        return server

    @classmethod
    def current(cls) -> "Server":
        if cls._current is None:
            raise ClientError("no active session; use 'with Server.start():'")
        return cls._current

    def __enter__(self) -> "Server":
        if Server._current is not None:
            raise ClientError("a session is already active")
        if self._reader is None:
            self._reader = sys.stdin.buffer
        if self._writer is None:
            self._writer = sys.stdout.buffer
        prefix = os.environ.get(TRANSCRIPT_ENV)
        if prefix:
            self._transcript_out = open(f"{prefix}.out", "wb")
            self._transcript_in = open(f"{prefix}.in", "wb")
        Server._current = self
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        try:
            if exc_type is None:
                self._drain()
                self._send({"cmd": "finish"})
                while self._summary is None:
                    self._apply(self._read_event())
        finally:
            Server._current = None
            for fh in (self._transcript_out, self._transcript_in):
                if fh is not None:
                    fh.close()
        return False

    @property
    def summary(self) -> dict | None:
        return self._summary

    @property
    def protocol_errors(self) -> list[str]:
        return list(self._protocol_errors)

    # -- user API --------------------------------------------------------------------

    def create_task(self, command: str) -> Task:
        task = Task(command)
        self._awaiting_ids.append(task)
        self._send({"cmd": "create_task", "command": command})
        while task.id is None:
            self._apply(self._read_event())
        self._outstanding += 1
        return task

    def add_callback(self, task: Task, fn) -> None:
        if task.id is None or task.id not in self._tasks:
            raise ClientError("callback on a task unknown to this session")
        if task.done:
            self._ready.append(("callback", task, fn))
        else:
            task._callbacks.append(fn)

    def await_task(self, task: Task) -> Task:
        return self.await_all_tasks([task])[0]

    def await_all_tasks(self, tasks: list[Task]) -> list[Task]:
        for task in tasks:
            if task.id is None or task.id not in self._tasks:
                raise ClientError("awaiting a task unknown to this session")
        act = self._current_activity
        if act is not None:
            pending = {t.id for t in tasks if not t.done}
            if pending:
                act.pending = set(pending)
                for tid in pending:
                    self._waiting.setdefault(tid, []).append(act)
                act.block()
            return list(tasks)
        # main body: it owns the pump
        self._settle(lambda: all(t.done for t in tasks))
        return list(tasks)

    def async_(self, fn) -> _Activity:
        act = _Activity(self, fn, name=f"client-activity-{len(self._activities)}")
        self._activities.append(act)
        self._ready.append(("activity", act))
        return act

    # -- pump ---------------------------------------------------------------------------

    def _settle(self, predicate) -> None:
        while True:
            while self._ready:
                self._run_ready(self._ready.popleft())
                if predicate():
                    return
            if predicate():
                return
            self._apply(self._read_event())

    def _run_ready(self, item) -> None:
        kind = item[0]
        if kind == "callback":
            _, task, fn = item
            fn(task)
        else:
            _, act = item
            previous = self._current_activity
            self._current_activity = act
            act.resume()
            self._current_activity = previous
            if act.done and act.error is not None:
                raise ClientError(f"{act.name} failed: {act.error!r}") from act.error

    def _drain(self) -> None:
        self._settle(
            lambda: self._outstanding == 0
            and not self._ready
            and all(a.done for a in self._activities if a._started)
        )

    # -- wire ------------------------------------------------------------------------------

    def _send(self, obj: dict) -> None:
        data = json.dumps(obj, separators=(",", ":")).encode("utf-8") + b"\n"
        try:
            self._writer.write(data)
            self._writer.flush()
        except (BrokenPipeError, ValueError, OSError) as exc:
            raise ClientError(f"host stopped reading commands: {exc}", self._summary)
        if self._transcript_out is not None:
            self._transcript_out.write(data)

    def _read_event(self) -> dict:
        line = self._reader.readline()
        if not line:
            raise ClientError("host closed the event stream", self._summary)
        if self._transcript_in is not None:
            self._transcript_in.write(line)
        try:
            obj = json.loads(line)
        except ValueError as exc:
            raise ClientError(f"unparseable event line {line!r}: {exc}", self._summary)
        if not isinstance(obj, dict) or "event" not in obj:
            raise ClientError(f"malformed event {obj!r}", self._summary)
        return obj

    def _apply(self, event: dict) -> None:
        kind = event["event"]
        if kind == "task_created":
            if not self._awaiting_ids:
                raise ClientError(f"unexpected task_created {event!r}", self._summary)
            task = self._awaiting_ids.popleft()
            task.id = int(event["id"])
            self._tasks[task.id] = task
        elif kind == "task_done":
            task = self._tasks.get(int(event["id"]))
            if task is None or task.done:
                raise ClientError(f"task_done for unknown or finished task {event!r}")
            task.done = True
            task.rc = event["rc"]
            task.results = list(event["results"])
            task.start_at = event["start_at"]
            task.finish_at = event["finish_at"]
            task.place = event["place"]
            self._outstanding -= 1
            if task.rc == 0:
                self._finished += 1
            else:
                self._failed += 1
            callbacks, task._callbacks = task._callbacks, []
            for fn in callbacks:
                self._ready.append(("callback", task, fn))
            for act in self._waiting.pop(task.id, ()):
                act.pending.discard(task.id)
                if not act.pending:
                    self._ready.append(("activity", act))
        elif kind == "exit":
            self._summary = {"finished": event["finished"], "failed": event["failed"]}
        elif kind == "protocol_error":
            self._protocol_errors.append(event.get("detail", ""))
        else:
            raise ClientError(f"unknown event {kind!r}", self._summary)


def client_session(run, reader=None, writer=None) -> dict:
    """Run a callable inside a session; returns the host's exit summary."""
    with Server.start(reader=reader, writer=writer) as server:
        run(server)
    return server.summary
