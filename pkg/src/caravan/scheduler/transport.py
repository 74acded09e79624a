"""In-process transports.

Two flavors with identical message semantics:

* ThreadedTransport — each actor loop runs on its own thread with a queue
  inbox; consumers execute tasks as real external processes; time is the
  monotonic clock.
* VirtualTransport — every loop is multiplexed on one thread by a
  deterministic discrete-event scheduler; task executions are simulated by a
  pluggable ``task_fn`` and time is a virtual clock. Used for fast,
  reproducible tests and benchmarks.

Delivery is ordered and reliable in both; per-sender order is preserved.
"""

from __future__ import annotations

import heapq
import logging
import queue
import threading
import time
from dataclasses import dataclass
from itertools import count
from pathlib import Path
from typing import Callable

logger = logging.getLogger(__name__)

from ..core import CaravanError, TaskSpec, WorkerId
from ..messages import Message
from .executor import SPAWN_FAILURE_RC, ExecutionOutcome, execute_task

_MSG = 0
_CALL = 1
_TIMER = 2


@dataclass(frozen=True)
class VirtualOutcome:
    """Simulated execution result: how long the task 'ran' and what it produced."""

    duration: float = 0.0
    rc: int = 0
    results: tuple[float, ...] = ()
    warning: str | None = None


def sleep_interpreter(spec: TaskSpec) -> VirtualOutcome:
    """Default virtual executor: ``sleep X`` commands take X virtual seconds,
    anything else completes instantly with rc 0."""
    parts = spec.command.split()
    if len(parts) == 2 and parts[0] == "sleep":
        try:
            return VirtualOutcome(duration=float(parts[1]))
        except ValueError:
            pass
    return VirtualOutcome()


class _Timer:
    __slots__ = ("cancelled",)

    def __init__(self) -> None:
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True


class _VirtualContext:
    """Per-actor handle into the virtual runtime."""

    __slots__ = ("_rt", "addr")

    def __init__(self, rt: "VirtualTransport", addr: WorkerId):
        self._rt = rt
        self.addr = addr

    def now(self) -> float:
        return self._rt.now()

    def send(self, dst: WorkerId, msg: Message) -> None:
        self._rt.send(self.addr, dst, msg)

    def set_timer(self, delay: float, callback: Callable[[], None]) -> _Timer:
        timer = _Timer()
        self._rt.schedule_timer(self.addr, timer, callback, delay)
        return timer

    def execute(self, spec: TaskSpec, on_complete: Callable[[ExecutionOutcome], None]) -> None:
        try:
            sim = self._rt.task_fn(spec)
        except Exception as exc:  # simulated evaluator bug -> failed task
            sim = VirtualOutcome(rc=-1, warning=f"virtual executor error: {exc}")
        outcome = ExecutionOutcome(rc=sim.rc, results=list(sim.results), warning=sim.warning)
        self._rt.schedule_call(self.addr, lambda: on_complete(outcome), sim.duration)

    def stop(self) -> None:
        self._rt.deactivate(self.addr)


class VirtualTransport:
    """Deterministic single-threaded event calendar with a virtual clock."""

    is_virtual = True

    def __init__(self, task_fn: Callable[[TaskSpec], VirtualOutcome] | None = None):
        self.task_fn = task_fn if task_fn is not None else sleep_interpreter
        self._calendar: list = []
        self._seq = count()
        self._now = 0.0
        self._actors: dict[WorkerId, object] = {}
        self._inactive: set[WorkerId] = set()
        self.send_hook: Callable[[WorkerId, WorkerId, Message], None] | None = None
        self.dropped = 0

    def now(self) -> float:
        return self._now

    def register(self, addr: WorkerId, actor) -> None:
        if addr in self._actors:
            raise ValueError(f"address {addr} already registered")
        self._actors[addr] = actor
        actor.bind(_VirtualContext(self, addr))
        self.schedule_call(addr, actor.on_start, 0.0)

    def send(self, src: WorkerId, dst: WorkerId, msg: Message) -> None:
        if self.send_hook is not None:
            self.send_hook(src, dst, msg)
        heapq.heappush(self._calendar, (self._now, next(self._seq), dst, _MSG, msg))

    def schedule_call(self, addr: WorkerId | None, fn: Callable[[], None], delay: float = 0.0) -> None:
        heapq.heappush(self._calendar, (self._now + delay, next(self._seq), addr, _CALL, fn))

    def schedule_timer(self, addr: WorkerId, timer: _Timer, fn: Callable[[], None], delay: float) -> None:
        heapq.heappush(self._calendar, (self._now + delay, next(self._seq), addr, _TIMER, (timer, fn)))

    def deactivate(self, addr: WorkerId) -> None:
        self._inactive.add(addr)

    def kill_worker(self, addr: WorkerId) -> None:
        """Drop an actor outright; any in-flight events touching it are lost."""
        self.deactivate(addr)

    def start(self) -> None:
        pass

    def run(self) -> None:
        """Drain the event calendar; returns when nothing remains scheduled."""
        calendar = self._calendar
        actors = self._actors
        inactive = self._inactive
        while calendar:
            at, _, addr, kind, payload = heapq.heappop(calendar)
            if kind == _TIMER:
                timer, fn = payload
                # dead timers neither run nor advance the clock
                if timer.cancelled or (addr is not None and addr in inactive):
                    continue
                self._now = at
                fn()
                continue
            self._now = at
            if addr is not None and addr in inactive:
                self.dropped += 1
                continue
            if kind == _MSG:
                actors[addr].on_message(payload)
            else:
                payload()

    def join(self) -> None:
        pass


_POISON = object()


class _ThreadedContext:
    __slots__ = ("_rt", "_host", "addr")

    def __init__(self, rt: "ThreadedTransport", host: "_ActorHost", addr: WorkerId):
        self._rt = rt
        self._host = host
        self.addr = addr

    def now(self) -> float:
        return time.monotonic()

    def send(self, dst: WorkerId, msg: Message) -> None:
        self._rt.send(self.addr, dst, msg)

    def set_timer(self, delay: float, callback: Callable[[], None]) -> _Timer:
        return self._host.add_timer(delay, callback)

    def execute(self, spec: TaskSpec, on_complete: Callable[[ExecutionOutcome], None]) -> None:
        try:
            outcome = execute_task(spec, self._rt.work_root)
        except CaravanError as exc:
            # Keep the consumer alive: report the task failed instead.
            outcome = ExecutionOutcome(rc=SPAWN_FAILURE_RC, warning=str(exc))
        on_complete(outcome)

    def stop(self) -> None:
        self._host.stopped = True


class _ActorHost:
    """Thread wrapper giving one actor a blocking inbox plus local timers."""

    def __init__(self, rt: "ThreadedTransport", addr: WorkerId, actor):
        self.addr = addr
        self.actor = actor
        self.inbox: queue.Queue = queue.Queue()
        self.stopped = False
        self._timers: list = []
        self._timer_seq = count()
        self.thread = threading.Thread(target=self._run, name=f"caravan-w{addr}", daemon=True)
        actor.bind(_ThreadedContext(rt, self, addr))

    def add_timer(self, delay: float, callback: Callable[[], None]) -> _Timer:
        timer = _Timer()
        heapq.heappush(self._timers, (time.monotonic() + delay, next(self._timer_seq), timer, callback))
        return timer

    def _fire_due_timers(self) -> None:
        now = time.monotonic()
        while self._timers and self._timers[0][0] <= now:
            _, _, timer, callback = heapq.heappop(self._timers)
            if not timer.cancelled:
                callback()

    def _next_timeout(self) -> float | None:
        if not self._timers:
            return None
        return max(0.0, self._timers[0][0] - time.monotonic())

    def _run(self) -> None:
        self.actor.on_start()
        while not self.stopped:
            try:
                msg = self.inbox.get(timeout=self._next_timeout())
            except queue.Empty:
                self._fire_due_timers()
                continue
            if msg is _POISON:
                break
            try:
                self.actor.on_message(msg)
            except Exception:
                logger.exception("actor %s failed handling %r", self.addr, msg)
            self._fire_due_timers()

    def force_stop(self) -> None:
        self.stopped = True
        self.inbox.put(_POISON)


class ThreadedTransport:
    """One thread per role loop; real clock; real external-process execution."""

    is_virtual = False

    def __init__(self, work_root: Path | str = "caravan_work"):
        self.work_root = Path(work_root)
        self._hosts: dict[WorkerId, _ActorHost] = {}
        self._inboxes: dict[WorkerId, queue.Queue] = {}
        self.send_hook: Callable[[WorkerId, WorkerId, Message], None] | None = None
        self._started = False
        self._lock = threading.Lock()

    def now(self) -> float:
        return time.monotonic()

    def register(self, addr: WorkerId, actor) -> None:
        if addr in self._hosts or addr in self._inboxes:
            raise ValueError(f"address {addr} already registered")
        self._hosts[addr] = _ActorHost(self, addr, actor)
        if self._started:
            self._hosts[addr].thread.start()

    def register_inbox(self, addr: WorkerId) -> queue.Queue:
        """Plain inbox for a loop driven by the caller (the engine)."""
        box: queue.Queue = queue.Queue()
        self._inboxes[addr] = box
        return box

    def send(self, src: WorkerId, dst: WorkerId, msg: Message) -> None:
        if self.send_hook is not None:
            self.send_hook(src, dst, msg)
        if dst in self._inboxes:
            self._inboxes[dst].put(msg)
        else:
            self._hosts[dst].inbox.put(msg)

    def start(self) -> None:
        with self._lock:
            if self._started:
                return
            self._started = True
            for host in self._hosts.values():
                host.thread.start()

    def run(self) -> None:
        raise RuntimeError("ThreadedTransport loops run on their own threads; use start()/join()")

    def join(self, timeout: float | None = None) -> None:
        deadline = None if timeout is None else time.monotonic() + timeout
        for host in self._hosts.values():
            remaining = None if deadline is None else max(0.0, deadline - time.monotonic())
            host.thread.join(remaining)

    def force_stop(self) -> None:
        for host in self._hosts.values():
            host.force_stop()

    def kill_worker(self, addr: WorkerId) -> None:
        raise NotImplementedError("worker-death injection requires the virtual or TCP transport")
