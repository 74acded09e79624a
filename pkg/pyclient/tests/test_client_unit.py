"""Client loop logic against an in-memory lockstep bridge (no host process)."""

import json
from collections import deque

import pytest

from caravan_client import ClientError, Server, Task, client_session


class FakeBridge:
    """Serves both pipe ends: commands written in, events read out.

    Lockstep: every create_task is answered with task_created and, unless
    deferred, an immediate task_done. Deferred completions are released by
    the test via release().
    """

    def __init__(self, defer=False, fail_ids=()):
        self.defer = defer
        self.fail_ids = set(fail_ids)
        self.events: deque[bytes] = deque()
        self.deferred: deque[int] = deque()
        self.next_id = 0
        self.finished = 0
        self.failed = 0
        self.commands: list[dict] = []
        self._clock = 0.0

    # writer side
    def write(self, data: bytes) -> None:
        for line in data.decode().splitlines():
            self._handle(json.loads(line))

    def flush(self) -> None:
        pass

    # reader side
    def readline(self) -> bytes:
        if not self.events and self.deferred:
            # the client is blocked waiting: let "time pass" and finish the
            # oldest outstanding task
            self._complete(self.deferred.popleft())
        return self.events.popleft() if self.events else b""

    def _emit(self, obj: dict) -> None:
        self.events.append((json.dumps(obj, separators=(",", ":")) + "\n").encode())

    def _handle(self, obj: dict) -> None:
        self.commands.append(obj)
        if obj["cmd"] == "create_task":
            tid = self.next_id
            self.next_id += 1
            self._emit({"event": "task_created", "id": tid})
            if self.defer:
                self.deferred.append(tid)
            else:
                self._complete(tid)
        elif obj["cmd"] == "finish":
            while self.deferred:
                self._complete(self.deferred.popleft())
            self._emit({"event": "exit", "finished": self.finished, "failed": self.failed})

    def _complete(self, tid: int) -> None:
        rc = 1 if tid in self.fail_ids else 0
        if rc == 0:
            self.finished += 1
        else:
            self.failed += 1
        start = self._clock
        self._clock += 1.0
        self._emit(
            {
                "event": "task_done",
                "id": tid,
                "rc": rc,
                "results": [float(tid)],
                "start_at": start,
                "finish_at": self._clock,
                "place": 2,
            }
        )

    def release(self, n=None) -> None:
        count = len(self.deferred) if n is None else n
        for _ in range(count):
            self._complete(self.deferred.popleft())


def session(bridge):
    return Server.start(reader=bridge, writer=bridge)


def test_create_assigns_sequential_ids():
    bridge = FakeBridge()
    with session(bridge) as server:
        ids = [Task.create("true").id for _ in range(5)]
    assert ids == list(range(5))
    assert server.summary == {"finished": 5, "failed": 0}


def test_await_already_done_returns_immediately():
    bridge = FakeBridge()
    with session(bridge) as server:
        task = Task.create("true")
        server.await_task(task)
        assert task.done
        # a second await returns without reading anything (the event stream
        # is empty now, so any read would raise EOF)
        got = server.await_task(task)
        assert got.results == [0.0]


def test_await_all_empty():
    bridge = FakeBridge()
    with session(bridge) as server:
        assert server.await_all_tasks([]) == []


def test_callback_fires_once_in_order():
    bridge = FakeBridge(defer=True)
    order = []
    with session(bridge) as server:
        task = Task.create("true")
        task.add_callback(lambda t: order.append("first"))
        task.add_callback(lambda t: order.append("second"))
        server.await_task(task)
    assert order == ["first", "second"]


def test_callback_after_completion_still_runs():
    bridge = FakeBridge()
    seen = []
    with session(bridge) as server:
        task = Task.create("true")
        task.add_callback(lambda t: seen.append(t.id))
    assert seen == [0]


def test_callbacks_can_create_follow_up_tasks():
    bridge = FakeBridge()
    with session(bridge) as server:
        for i in range(10):
            task = Task.create("sleep")
            task.add_callback(lambda t: Task.create("follow"))
    assert server.summary == {"finished": 20, "failed": 0}


def test_failed_task_visible_in_mirror_and_summary():
    bridge = FakeBridge(fail_ids={0})
    with session(bridge) as server:
        task = Task.create("false")
        server.await_task(task)
        assert task.rc == 1
    assert server.summary == {"finished": 0, "failed": 1}


def test_activities_interleave_and_chain():
    bridge = FakeBridge(defer=True)
    log = []

    def line(n):
        def run():
            for step in range(3):
                task = Task.create(f"chain-{n}-{step}")
                log.append(("created", n, step))
                Server.current().await_task(task)
                log.append(("resumed", n, step))

        return run

    with session(bridge) as server:
        for n in range(2):
            server.async_(line(n))
    # both activities started (created their first task) before any resumed
    first_two = log[:2]
    assert first_two == [("created", 0, 0), ("created", 1, 0)]
    assert server.summary == {"finished": 6, "failed": 0}
    for n in range(2):
        steps = [e[2] for e in log if e[0] == "created" and e[1] == n]
        assert steps == [0, 1, 2]


def test_await_unknown_task_rejected():
    bridge = FakeBridge()
    with pytest.raises(ClientError):
        with session(bridge) as server:
            foreign = Task("never created")
            server.await_task(foreign)


def test_host_eof_raises_with_partial_summary():
    bridge = FakeBridge(defer=True)
    with pytest.raises(ClientError):
        with session(bridge) as server:
            Task.create("true")
            bridge.deferred.clear()  # completion never arrives, readline hits EOF
            server.await_task(next(iter(server._tasks.values())))


def test_client_session_wrapper():
    bridge = FakeBridge()

    def run(server):
        for _ in range(3):
            Task.create("true")

    summary = client_session(run, reader=bridge, writer=bridge)
    assert summary == {"finished": 3, "failed": 0}


def test_protocol_error_recorded_session_continues():
    bridge = FakeBridge()
    bridge._emit({"event": "protocol_error", "detail": "bad line"})
    with session(bridge) as server:
        task = Task.create("true")
    assert server.protocol_errors == ["bad line"]
    assert server.summary == {"finished": 1, "failed": 0}
