"""Bridge for external search engines over bidirectional pipes.

The child process writes newline-delimited JSON commands on its stdout and
reads newline-delimited JSON events on its stdin:

  commands:  {"cmd":"create_task","command":<text>} | {"cmd":"flush"} | {"cmd":"finish"}
  events:    {"event":"task_created","id":N}
             {"event":"task_done","id":N,"rc":int,"results":[..],"start_at":f,"finish_at":f,"place":int}
             {"event":"exit","finished":int,"failed":int}
             {"event":"protocol_error","detail":<text>}

Encodings are canonical (fixed key order, compact separators, UTF-8) so
session transcripts are byte-stable. task_done events are emitted exactly
once per task, in completion order. The child inherits the environment plus
CARAVAN_PROTOCOL_VERSION=1.
"""

from __future__ import annotations

import json
import logging
import os
import queue
import subprocess
import threading
import time

from .core import TaskRecord
from .engine import Engine, ExitReport

logger = logging.getLogger(__name__)

PROTOCOL_VERSION = "1"
PROTOCOL_ENV = "CARAVAN_PROTOCOL_VERSION"


def encode_event(obj: dict) -> bytes:
    return json.dumps(obj, separators=(",", ":")).encode("utf-8") + b"\n"


def task_created_event(task_id: int) -> dict:
    return {"event": "task_created", "id": int(task_id)}


def task_done_event(record: TaskRecord) -> dict:
    return {
        "event": "task_done",
        "id": int(record.spec.id),
        "rc": record.rc,
        "results": list(record.results),
        "start_at": record.start_at,
        "finish_at": record.finish_at,
        "place": int(record.place),
    }


def exit_event(report: ExitReport) -> dict:
    return {"event": "exit", "finished": report.finished, "failed": report.failed}


def protocol_error_event(detail: str) -> dict:
    return {"event": "protocol_error", "detail": detail}


def parse_command(line: str) -> dict:
    """Parse one child command line; raises ValueError when malformed."""
    obj = json.loads(line)
    if not isinstance(obj, dict):
        raise ValueError("command must be a JSON object")
    cmd = obj.get("cmd")
    if cmd == "create_task":
        if not isinstance(obj.get("command"), str) or not obj["command"]:
            raise ValueError("create_task needs a non-empty 'command' string")
        return obj
    if cmd in ("flush", "finish"):
        return obj
    raise ValueError(f"unknown cmd {cmd!r}")


class _Session:
    """One live child process speaking the line protocol."""

    def __init__(self, child_command: str, engine: Engine):
        self.engine = engine
        self.finish_requested = False
        self.child_eof = False
        env = dict(os.environ)
        env[PROTOCOL_ENV] = PROTOCOL_VERSION
        self.proc = subprocess.Popen(
            child_command,
            shell=True,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            env=env,
        )
        engine.completion_listener = self._emit_done

    def _emit(self, obj: dict) -> None:
        try:
            self.proc.stdin.write(encode_event(obj))
            self.proc.stdin.flush()
        except (BrokenPipeError, ValueError, OSError):
            logger.warning("child stopped reading events")

    def _emit_done(self, record: TaskRecord) -> None:
        self._emit(task_done_event(record))

    def handle_line(self, raw: bytes) -> None:
        """Apply one command line inside the engine loop."""
        line = raw.decode("utf-8", errors="replace").strip()
        if not line:
            return
        try:
            obj = parse_command(line)
        except ValueError as exc:
            self._emit(protocol_error_event(str(exc)))
            return
        if obj["cmd"] == "create_task":
            tid = self.engine.task_create(obj["command"])
            self._emit(task_created_event(tid))
        elif obj["cmd"] == "flush":
            self.engine._flush_creations()
        else:  # finish
            self.finish_requested = True

    def close(self, report: ExitReport) -> None:
        self._emit(exit_event(report))
        try:
            self.proc.stdin.close()
        except OSError:
            pass
        try:
            self.proc.wait(timeout=10)
        except subprocess.TimeoutExpired:
            self.proc.kill()
            self.proc.wait()


def bridge_run(child_command: str, scheduler) -> ExitReport:
    """Spawn an external engine process and relay the protocol until it
    finishes; returns after every created task has drained."""
    engine = Engine(scheduler)
    session = _Session(child_command, engine)
    t0 = time.perf_counter()
    engine.manual_begin()

    if scheduler.transport.is_virtual:
        # Deterministic pump: settle the whole virtual run after every line,
        # so event interleaving is a pure function of the child's script.
        for raw in session.proc.stdout:
            engine.manual_step(lambda raw=raw: session.handle_line(raw))
            if session.finish_requested:
                break
        else:
            session.child_eof = True
    else:
        lines: queue.Queue = queue.Queue()

        def read_child() -> None:
            for raw in session.proc.stdout:
                lines.put(raw)
            lines.put(None)

        reader = threading.Thread(target=read_child, daemon=True)
        reader.start()
        while not session.finish_requested:
            engine.manual_drain()
            try:
                raw = lines.get(timeout=0.05)
            except queue.Empty:
                continue
            if raw is None:
                session.child_eof = True
                break
            engine.manual_step(lambda raw=raw: session.handle_line(raw))

    report = engine.manual_finish(t0)
    if session.child_eof:
        report.abnormal = True
    session.close(report)
    return report
