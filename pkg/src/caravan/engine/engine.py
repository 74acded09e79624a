"""The search-engine runtime: a logically single-threaded event loop.

User code (the program, completion callbacks, and cooperative activities)
creates tasks, registers callbacks, and awaits completions. Exactly one piece
of user code runs at a time; activities interleave only at await points.
Scheduler messages arrive from another context and are applied between user
code segments.

Activities are plain functions run on baton-passing helper threads: the loop
and the activities hand a single execution token back and forth, so the
blocking-style ``await_task`` API needs no async syntax while the semantics
stay strictly cooperative and deterministic (FIFO ready queue).
"""

from __future__ import annotations

import queue
import threading
import time
from collections import deque
from dataclasses import dataclass, field

from ..core import (
    ENGINE,
    PRODUCER,
    CaravanError,
    TaskId,
    TaskIdAllocator,
    TaskRecord,
    TaskSpec,
    TaskState,
)
from ..messages import EnqueueTasks, Message, NoMoreTasks, ResultBatch, TaskDone

__all__ = ["Engine", "ExitReport", "EngineStateError", "server_start"]


class EngineStateError(CaravanError):
    """Operation not legal in the engine's current state."""


class DeadlockError(CaravanError):
    """An await can never resume because the run is over."""


@dataclass
class ExitReport:
    created: int = 0
    finished: int = 0
    failed: int = 0
    wall_time: float = 0.0
    user_error: str | None = None
    worker_errors: list[str] = field(default_factory=list)
    abnormal: bool = False

    @property
    def ok(self) -> bool:
        return (
            self.failed == 0
            and self.user_error is None
            and not self.worker_errors
            and not self.abnormal
        )


class Activity:
    """A cooperative line of execution with a blocking-style await."""

    def __init__(self, engine: "Engine", fn, name: str):
        self.name = name
        self.done = False
        self.error: BaseException | None = None
        self.pending_ids: set[TaskId] = set()
        self.resume_exception: BaseException | None = None
        self._engine = engine
        self._fn = fn
        self._gate = threading.Event()
        self._thread = threading.Thread(target=self._run, name=f"caravan-{name}", daemon=True)
        self._started = False

    def _run(self) -> None:
        self._gate.wait()
        self._gate.clear()
        try:
            self._fn()
        except BaseException as exc:  # recorded, isolated from other activities
            self.error = exc
        self.done = True
        self._engine._loop_gate.set()

    def _resume(self) -> None:
        """Hand the baton to this activity; returns when it blocks or ends."""
        engine = self._engine
        engine._loop_gate.clear()
        if not self._started:
            self._started = True
            self._thread.start()
        self._gate.set()
        engine._loop_gate.wait()

    def _block(self) -> None:
        """Give the baton back to the loop; returns when the loop resumes us."""
        self._engine._loop_gate.set()
        self._gate.wait()
        self._gate.clear()
        if self.resume_exception is not None:
            exc = self.resume_exception
            self.resume_exception = None
            raise exc


class Engine:
    """Event loop driving a SchedulerHandle. See server_start()."""

    def __init__(self, scheduler, trace: bool = False):
        self.scheduler = scheduler
        self.transport = scheduler.transport
        self.records: dict[TaskId, TaskRecord] = {}
        self.callbacks: dict[TaskId, list] = {}
        self.trace: list[tuple] | None = [] if trace else None
        self.completion_listener = None  # called with each completed TaskRecord, in order
        self._ids = TaskIdAllocator()
        self._creation_buffer: list[TaskSpec] = []
        self._ready: deque = deque()
        self._waiting: dict[TaskId, list[Activity]] = {}
        self._activities: list[Activity] = []
        self._completed = 0
        self._failed = 0
        self._draining = False
        self._shutdown_sent = False
        self._main: Activity | None = None
        self._main_needed = True
        self._finish_requested = False
        self._in_user_code = False
        self._current_activity: Activity | None = None
        self._loop_gate = threading.Event()
        self._inbox: queue.Queue | None = None
        self._ctx = None
        self._injected_errors: list[str] = []

    # -- actor interface (virtual transport) ---------------------------------

    def bind(self, ctx) -> None:
        self._ctx = ctx

    def on_start(self) -> None:
        pass

    def on_message(self, msg: Message) -> None:
        self._apply_message(msg)
        self._pump()
        self._maybe_shutdown()

    # -- user API (call only from inside the loop) ----------------------------

    def task_create(self, command: str, input=()) -> TaskId:
        if self._draining:
            raise EngineStateError("task_create after shutdown began")
        tid = self._ids.next()
        spec = TaskSpec(id=tid, command=command, input=tuple(input))
        self.records[tid] = TaskRecord(spec=spec)
        self._creation_buffer.append(spec)
        if self.trace is not None:
            self.trace.append(("create", int(tid)))
        return tid

    def add_callback(self, task_id: TaskId, cb) -> None:
        record = self._require_record(task_id)
        if record.complete:
            self._ready.append(("callback", task_id, cb))
        else:
            self.callbacks.setdefault(task_id, []).append(cb)

    def await_task(self, task_id: TaskId) -> TaskRecord:
        return self.await_all_tasks([task_id])[0]

    def await_all_tasks(self, task_ids) -> list[TaskRecord]:
        act = self._current_activity
        if act is None:
            raise EngineStateError("await is only legal inside an activity or the user program")
        records = [self._require_record(t) for t in task_ids]
        pending = {t for t, r in zip(task_ids, records) if not r.complete}
        if pending:
            act.pending_ids = set(pending)
            for tid in pending:
                self._waiting.setdefault(tid, []).append(act)
            # The loop owns the user-code flag: it clears it when _resume
            # returns (we are blocked) and sets it again before resuming us.
            act._block()
        return records

    def async_spawn(self, fn) -> Activity:
        act = Activity(self, fn, name=f"activity-{len(self._activities)}")
        self._activities.append(act)
        self._ready.append(("activity", act))
        return act

    def record(self, task_id: TaskId) -> TaskRecord:
        return self._require_record(task_id)

    # -- ParameterSet convenience ---------------------------------------------

    def parameter_set_create(self, params, command_template: str, num_runs: int, seed_base: int = 0):
        from .parameter_set import create_parameter_set

        return create_parameter_set(self, params, command_template, num_runs, seed_base)

    def parameter_set_average_results(self, ps) -> list[float]:
        from .parameter_set import average_results

        return average_results(self, ps)

    # -- lifecycle -------------------------------------------------------------

    def server_start(self, user_program) -> ExitReport:
        """Run user_program in the loop, wait for every task, callback, and
        activity to finish, shut the scheduler down, and report."""
        if user_program is None:
            raise EngineStateError("server_start needs a user program; external sessions use manual_begin")
        t0 = time.perf_counter()
        if self.transport.is_virtual:
            self.transport.register(ENGINE, self)
            self.transport.schedule_call(ENGINE, lambda: self._bootstrap(user_program))
            self.transport.run()
        else:
            self._inbox = self.transport.register_inbox(ENGINE)
            self._bootstrap(user_program)
            self._threaded_loop()
        return self._finalize(t0)

    # -- internals ---------------------------------------------------------------

    def _require_record(self, task_id: TaskId) -> TaskRecord:
        try:
            return self.records[task_id]
        except KeyError:
            raise EngineStateError(f"unknown task id {task_id}") from None

    def _send(self, msg: Message) -> None:
        if self._ctx is not None:
            self._ctx.send(PRODUCER, msg)
        else:
            self.transport.send(ENGINE, PRODUCER, msg)

    def _bootstrap(self, user_program) -> None:
        self._main_needed = user_program is not None
        if user_program is not None:
            self._main = Activity(self, user_program, name="main")
            self._ready.append(("activity", self._main))
        self._pump()
        self._maybe_shutdown()

    def _apply_message(self, msg: Message) -> None:
        if isinstance(msg, ResultBatch):
            for record in msg.records:
                self._apply_completion(record)
        elif isinstance(msg, TaskDone):
            self._apply_completion(msg.record)

    def _apply_completion(self, done: TaskRecord) -> None:
        tid = done.spec.id
        record = self.records.get(tid)
        if record is None or record.complete:
            return
        record.transition(TaskState.RUNNING)
        record.transition(done.state)
        record.rc = done.rc
        record.results = done.results
        record.start_at = done.start_at
        record.finish_at = done.finish_at
        record.place = done.place
        record.warning = done.warning
        self._completed += 1
        if done.state is TaskState.FAILED:
            self._failed += 1
        if self.completion_listener is not None:
            self.completion_listener(record)
        for cb in self.callbacks.pop(tid, ()):
            self._ready.append(("callback", tid, cb))
        for act in self._waiting.pop(tid, ()):
            act.pending_ids.discard(tid)
            if not act.pending_ids:
                self._ready.append(("activity", act))

    def _enter_user_code(self, activity: Activity | None) -> None:
        assert not self._in_user_code, "user code segments must never overlap"
        self._in_user_code = True
        self._current_activity = activity

    def _leave_user_code(self) -> None:
        self._in_user_code = False
        self._current_activity = None

    def _flush_creations(self) -> None:
        if not self._creation_buffer:
            return
        specs = tuple(self._creation_buffer)
        self._creation_buffer = []
        for spec in specs:
            self.records[spec.id].transition(TaskState.DISPATCHED)
        self._send(EnqueueTasks(specs))

    def _pump(self) -> None:
        """Run ready callbacks and activity segments to quiescence."""
        while self._ready:
            item = self._ready.popleft()
            if item[0] == "callback":
                _, tid, cb = item
                if self.trace is not None:
                    self.trace.append(("callback", int(tid)))
                self._enter_user_code(None)
                try:
                    cb(self.records[tid])
                except BaseException as exc:
                    self._injected_errors.append(f"callback on task {tid}: {exc!r}")
                finally:
                    self._leave_user_code()
            elif item[0] == "activity":
                act = item[1]
                if self.trace is not None:
                    self.trace.append(("resume", act.name))
                self._enter_user_code(act)
                act._resume()
                self._leave_user_code()
                if act.done and act.error is not None and act is not self._main:
                    self._injected_errors.append(f"{act.name}: {act.error!r}")
            else:  # injected thunk (stdio bridge)
                fn = item[1]
                self._enter_user_code(None)
                try:
                    fn()
                except BaseException as exc:
                    self._injected_errors.append(f"injected command: {exc!r}")
                finally:
                    self._leave_user_code()
            self._flush_creations()

    def _quiescent(self) -> bool:
        if self._ready or self._creation_buffer:
            return False
        if self._main_needed and (self._main is None or not self._main.done):
            return False
        if not self._main_needed and not self._finish_requested:
            return False
        if any(not a.done and a._started for a in self._activities):
            return False
        if self._completed < len(self.records):
            return False
        return True

    def _maybe_shutdown(self) -> None:
        if self._shutdown_sent or not self._quiescent():
            return
        self._draining = True
        self._shutdown_sent = True
        self._send(NoMoreTasks())

    def _threaded_loop(self) -> None:
        assert self._inbox is not None
        while True:
            self._pump()
            self._maybe_shutdown()
            if self._shutdown_sent and not self._ready:
                break
            self._resolve_deadlock()
            try:
                msg = self._inbox.get(timeout=0.05)
            except queue.Empty:
                continue
            self._apply_message(msg)
            while True:
                try:
                    self._apply_message(self._inbox.get_nowait())
                except queue.Empty:
                    break
        self.transport.join()

    def _resolve_deadlock(self) -> None:
        """If every task is complete yet activities still wait, fail their awaits."""
        if self._ready or self._completed < len(self.records):
            return
        stuck = [a for a in self._activities + ([self._main] if self._main else []) if a and a._started and not a.done and a.pending_ids]
        incomplete = any(not self.records[t].complete for a in stuck for t in a.pending_ids)
        if not stuck or incomplete:
            return
        for act in stuck:
            act.resume_exception = DeadlockError(f"{act.name} awaits tasks that already completed with no resume pending")
            self._ready.append(("activity", act))

    def _finalize(self, t0: float) -> ExitReport:
        report = ExitReport(
            created=len(self.records),
            finished=self._completed - self._failed,
            failed=self._failed,
            wall_time=time.perf_counter() - t0,
            worker_errors=list(self._injected_errors),
        )
        if self._main is not None and self._main.error is not None:
            report.user_error = repr(self._main.error)
        suspended = [
            a for a in self._activities + ([self._main] if self._main else [])
            if a and a._started and not a.done
        ]
        if suspended:
            for act in suspended:
                act.resume_exception = DeadlockError(
                    f"{act.name} still suspended when the run drained; its awaited tasks can never complete"
                )
                self._ready.append(("activity", act))
            self._pump()
            report.abnormal = True
            report.worker_errors.extend(
                f"{a.name}: deadlocked await" for a in suspended
            )
            if self._main in suspended and report.user_error is None:
                report.user_error = "user program deadlocked on an await"
        if not self._shutdown_sent:
            report.abnormal = True
        return report

    # -- stdio bridge support ----------------------------------------------------

    def manual_begin(self) -> None:
        """Start a loop with no user program; external commands drive it."""
        if self.transport.is_virtual:
            self.transport.register(ENGINE, self)
            self.transport.schedule_call(ENGINE, lambda: self._bootstrap(None))
            self.transport.run()
        else:
            self._inbox = self.transport.register_inbox(ENGINE)
            self._bootstrap(None)

    def manual_step(self, fn) -> None:
        """Run one injected command as a user segment and settle the loop."""
        self._ready.append(("thunk", fn))
        if self.transport.is_virtual:
            self.transport.schedule_call(ENGINE, lambda: (self._pump(), self._maybe_shutdown()))
            self.transport.run()
        else:
            self._pump()

    def manual_drain(self) -> None:
        """Threaded mode: apply pending scheduler messages without blocking."""
        if self._inbox is None:
            return
        while True:
            try:
                msg = self._inbox.get_nowait()
            except queue.Empty:
                return
            self._apply_message(msg)
            self._pump()

    def manual_finish(self, t0: float) -> ExitReport:
        """Declare no more external commands; drain everything and report."""
        self._finish_requested = True
        if self.transport.is_virtual:
            self.transport.schedule_call(ENGINE, self._maybe_shutdown)
            self.transport.run()
        else:
            self._threaded_loop()
        return self._finalize(t0)

    @property
    def outstanding(self) -> int:
        return len(self.records) - self._completed


def server_start(scheduler, user_program, trace: bool = False) -> ExitReport:
    """Convenience wrapper: build an Engine on a running topology and run."""
    return Engine(scheduler, trace=trace).server_start(user_program)
