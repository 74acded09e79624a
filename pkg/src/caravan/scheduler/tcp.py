"""TCP transport.

Same message semantics as the in-process transports, but every parent-child
link in the topology is a real TCP connection: buffers dial the producer's
listen address, consumers dial their buffer's listener. Each frame is one
length-prefixed record: a 4-byte big-endian payload length followed by the
canonical UTF-8 JSON encoding of the message. Frames above 64 MiB are
rejected by closing the connection. A lost connection surfaces to the parent
loop as a worker-death event.

Worker loops are hosted on threads of the calling process; the wire protocol
is what a remote deployment would speak.
"""

from __future__ import annotations

import logging
import queue
import socket
import struct
import threading
import time
from pathlib import Path
from typing import Callable

from ..core import PRODUCER, CaravanError, TaskSpec, WorkerId
from ..messages import Hello, Message, WorkerDeath, decode_message, encode_message
from ..topology import Topology
from .executor import SPAWN_FAILURE_RC, ExecutionOutcome, execute_task
from .transport import _POISON, _Timer

logger = logging.getLogger(__name__)

HEADER = struct.Struct(">I")
MAX_FRAME = 64 * 2**20


class FrameError(CaravanError):
    """Oversized or malformed frame."""


def send_frame(sock: socket.socket, msg: Message) -> None:
    payload = encode_message(msg)
    if len(payload) > MAX_FRAME:
        raise FrameError(f"frame of {len(payload)} bytes exceeds the 64 MiB cap")
    sock.sendall(HEADER.pack(len(payload)) + payload)


def _recv_exactly(sock: socket.socket, n: int) -> bytes | None:
    parts = []
    while n:
        chunk = sock.recv(n)
        if not chunk:
            return None
        parts.append(chunk)
        n -= len(chunk)
    return b"".join(parts)


def recv_frame(sock: socket.socket) -> Message | None:
    """Read one frame; None on clean EOF; FrameError on an oversized length."""
    header = _recv_exactly(sock, HEADER.size)
    if header is None:
        return None
    (length,) = HEADER.unpack(header)
    if length > MAX_FRAME:
        raise FrameError(f"declared frame length {length} exceeds the 64 MiB cap")
    payload = _recv_exactly(sock, length)
    if payload is None:
        return None
    return decode_message(payload)


class _Host:
    """Actor thread with an inbox fed by local puts and socket readers."""

    def __init__(self, transport: "TcpTransport", addr: WorkerId, actor):
        self.transport = transport
        self.addr = addr
        self.actor = actor
        self.inbox: queue.Queue = queue.Queue()
        self.stopped = False
        self.up_sock: socket.socket | None = None  # link to parent
        self.children: dict[WorkerId, socket.socket] = {}
        self._timers: list = []
        self._timer_seq = 0
        self.thread = threading.Thread(target=self._run, name=f"caravan-tcp-w{addr}", daemon=True)
        actor.bind(_TcpContext(transport, self))

    def add_timer(self, delay: float, callback: Callable[[], None]) -> _Timer:
        import heapq

        timer = _Timer()
        self._timer_seq += 1
        heapq.heappush(self._timers, (time.monotonic() + delay, self._timer_seq, timer, callback))
        return timer

    def _fire_due_timers(self) -> None:
        import heapq

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
        self._close_sockets()

    def _close_sockets(self) -> None:
        for sock in [self.up_sock, *self.children.values()]:
            if sock is not None:
                try:
                    sock.close()
                except OSError:
                    pass

    def force_stop(self) -> None:
        self.stopped = True
        self.inbox.put(_POISON)


class _TcpContext:
    def __init__(self, transport: "TcpTransport", host: _Host):
        self._transport = transport
        self._host = host
        self.addr = host.addr

    def now(self) -> float:
        return time.monotonic()

    def send(self, dst: WorkerId, msg: Message) -> None:
        self._transport.send(self.addr, dst, msg)

    def set_timer(self, delay: float, callback: Callable[[], None]) -> _Timer:
        return self._host.add_timer(delay, callback)

    def execute(self, spec: TaskSpec, on_complete: Callable[[ExecutionOutcome], None]) -> None:
        try:
            outcome = execute_task(spec, self._transport.work_root)
        except CaravanError as exc:
            outcome = ExecutionOutcome(rc=SPAWN_FAILURE_RC, warning=str(exc))
        on_complete(outcome)

    def stop(self) -> None:
        self._host.stopped = True


class TcpTransport:
    """Producer listens; every worker dials its parent and says Hello."""

    is_virtual = False

    def __init__(
        self,
        topology: Topology,
        listen_addr: tuple[str, int] = ("127.0.0.1", 0),
        worker_connect_addr: tuple[str, int] | None = None,
        work_root: Path | str = "caravan_work",
    ):
        self.topology = topology
        self.listen_addr = listen_addr
        self.worker_connect_addr = worker_connect_addr
        self.work_root = Path(work_root)
        self.send_hook: Callable[[WorkerId, WorkerId, Message], None] | None = None
        self._hosts: dict[WorkerId, _Host] = {}
        self._inboxes: dict[WorkerId, queue.Queue] = {}
        self._listeners: list[socket.socket] = []
        self._reader_threads: list[threading.Thread] = []
        self._started = False

    def now(self) -> float:
        return time.monotonic()

    def register(self, addr: WorkerId, actor) -> None:
        if self._started:
            raise RuntimeError("register before start()")
        if addr in self._hosts:
            raise ValueError(f"address {addr} already registered")
        self._hosts[addr] = _Host(self, addr, actor)

    def register_inbox(self, addr: WorkerId) -> queue.Queue:
        box: queue.Queue = queue.Queue()
        self._inboxes[addr] = box
        return box

    # -- wiring -----------------------------------------------------------------

    def _listen(self, addr: tuple[str, int]) -> socket.socket:
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind(addr)
        sock.listen()
        return sock

    def _dial(self, addr: tuple[str, int], worker: WorkerId) -> socket.socket:
        sock = socket.create_connection(addr, timeout=10)
        sock.settimeout(None)
        send_frame(sock, Hello(worker=worker))
        return sock

    def _accept_child(self, listener: socket.socket) -> tuple[WorkerId, socket.socket]:
        conn, _ = listener.accept()
        hello = recv_frame(conn)
        if not isinstance(hello, Hello):
            conn.close()
            raise ConnectionError("peer did not introduce itself with a hello frame")
        return hello.worker, conn

    def _spawn_reader(self, parent: _Host, child: WorkerId, sock: socket.socket) -> None:
        def read_loop() -> None:
            while True:
                try:
                    msg = recv_frame(sock)
                except FrameError as exc:
                    logger.warning("rejecting connection from %s: %s", child, exc)
                    try:
                        sock.close()
                    except OSError:
                        pass
                    msg = None
                except OSError:
                    msg = None
                if msg is None:
                    if not parent.stopped:
                        parent.inbox.put(WorkerDeath(child))
                    return
                parent.inbox.put(msg)

        t = threading.Thread(target=read_loop, name=f"caravan-tcp-read-{child}", daemon=True)
        self._reader_threads.append(t)
        t.start()

    def _spawn_up_reader(self, host: _Host) -> None:
        sock = host.up_sock

        def read_loop() -> None:
            while True:
                try:
                    msg = recv_frame(sock)
                except (FrameError, OSError):
                    msg = None
                if msg is None:
                    return
                host.inbox.put(msg)

        t = threading.Thread(target=read_loop, name=f"caravan-tcp-up-{host.addr}", daemon=True)
        self._reader_threads.append(t)
        t.start()

    def start(self) -> None:
        if self._started:
            return
        topo = self.topology
        producer_host = self._hosts[PRODUCER]
        head = self._listen(self.listen_addr)
        self._listeners.append(head)
        connect_addr = self.worker_connect_addr or head.getsockname()

        # Buffers dial the producer, then listen for their own consumers.
        buffer_listeners: dict[WorkerId, socket.socket] = {}
        for bid in topo.buffer_ids():
            host = self._hosts[bid]
            host.up_sock = self._dial(connect_addr, bid)
            self._spawn_up_reader(host)
            child, conn = self._accept_child(head)
            producer_host.children[child] = conn
            self._spawn_reader(producer_host, child, conn)
            listener = self._listen((connect_addr[0], 0))
            buffer_listeners[bid] = listener
            self._listeners.append(listener)

        for bid in topo.buffer_ids():
            buffer_host = self._hosts[bid]
            listener = buffer_listeners[bid]
            for cid in topo.consumers_of(bid):
                host = self._hosts[cid]
                host.up_sock = self._dial(listener.getsockname(), cid)
                self._spawn_up_reader(host)
                child, conn = self._accept_child(listener)
                buffer_host.children[child] = conn
                self._spawn_reader(buffer_host, child, conn)

        # Late or unknown connections are drained by guard acceptors and
        # dropped as soon as they misbehave (oversized frame, bad hello).
        for listener in self._listeners:
            self._spawn_guard_acceptor(listener)

        self._started = True
        for host in self._hosts.values():
            host.thread.start()

    def _spawn_guard_acceptor(self, listener: socket.socket) -> None:
        def guard() -> None:
            while True:
                try:
                    conn, _ = listener.accept()
                except OSError:
                    return
                threading.Thread(
                    target=self._reject_loop, args=(conn,), daemon=True
                ).start()

        t = threading.Thread(target=guard, name="caravan-tcp-guard", daemon=True)
        self._reader_threads.append(t)
        t.start()

    def _reject_loop(self, conn: socket.socket) -> None:
        try:
            while recv_frame(conn) is not None:
                pass
        except (FrameError, OSError) as exc:
            logger.warning("closing unexpected connection: %s", exc)
        finally:
            try:
                conn.close()
            except OSError:
                pass

    # -- message routing -----------------------------------------------------------

    def send(self, src: WorkerId, dst: WorkerId, msg: Message) -> None:
        if self.send_hook is not None:
            self.send_hook(src, dst, msg)
        if dst in self._inboxes:  # engine, co-located with the producer
            self._inboxes[dst].put(msg)
            return
        if src in self._inboxes:
            self._hosts[dst].inbox.put(msg)
            return
        host = self._hosts[src]
        sock = host.children.get(dst, host.up_sock)
        if sock is None:
            logger.warning("no route from %s to %s; dropping %r", src, dst, msg)
            return
        try:
            send_frame(sock, msg)
        except OSError as exc:
            logger.warning("send from %s to %s failed (%s); dropping", src, dst, exc)

    def join(self, timeout: float | None = None) -> None:
        deadline = None if timeout is None else time.monotonic() + timeout
        for host in self._hosts.values():
            remaining = None if deadline is None else max(0.0, deadline - time.monotonic())
            host.thread.join(remaining)
        for listener in self._listeners:
            try:
                listener.close()
            except OSError:
                pass

    def force_stop(self) -> None:
        for host in self._hosts.values():
            host.force_stop()
        for listener in self._listeners:
            try:
                listener.close()
            except OSError:
                pass

    def kill_worker(self, addr: WorkerId) -> None:
        """Sever a worker: its parent sees the connection drop as a death."""
        host = self._hosts[addr]
        host.force_stop()
        if host.up_sock is not None:
            try:
                host.up_sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                host.up_sock.close()
            except OSError:
                pass


def transport_tcp(
    topology: Topology,
    listen_addr: tuple[str, int] = ("127.0.0.1", 0),
    worker_connect_addr: tuple[str, int] | None = None,
    work_root: Path | str = "caravan_work",
) -> TcpTransport:
    return TcpTransport(topology, listen_addr, worker_connect_addr, work_root)
