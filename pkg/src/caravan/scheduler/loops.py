"""Role loops for the hierarchical scheduler: producer, buffer, consumer.

Each loop is a sequential actor owning its state exclusively; all cross-role
interaction is message passing through a transport context. The same loop
classes run on the threaded, virtual-time, and TCP transports, so correctness
cannot depend on relative speeds.

Dispatch policy: buffers pull. A buffer keeps its local queue topped up to a
low watermark of twice its consumer count and dispatches one task per idle
consumer. The producer answers each request with what it has and remembers
unfulfilled capacity, pushing the remainder as soon as new tasks arrive, so
no consumer starves while tasks exist anywhere upstream.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass

from ..core import ENGINE, PRODUCER, TaskId, TaskRecord, TaskSpec, TaskState, WorkerId
from ..messages import (
    FLUSH_SHUTDOWN,
    FLUSH_SIZE,
    FLUSH_TIME,
    Dispatch,
    EnqueueTasks,
    Message,
    NoMoreTasks,
    RequestTasks,
    ResultBatch,
    TaskDone,
    TaskStarted,
    WorkerDeath,
)

logger = logging.getLogger(__name__)

LOW_WATERMARK_FACTOR = 2
DEFAULT_MAX_BATCH = 64
DEFAULT_MAX_DELAY = 0.1


@dataclass(frozen=True)
class BatchingPolicy:
    max_batch: int = DEFAULT_MAX_BATCH
    max_delay: float = DEFAULT_MAX_DELAY


class ProducerLoop:
    """Root of the topology: feeds buffers, relays completions to the engine.

    Talks only to buffer ids and the engine.
    """

    def __init__(self, buffer_ids: list[WorkerId]):
        self.buffer_ids = set(buffer_ids)
        self.queue: deque[TaskSpec] = deque()
        # FIFO of [buffer_id, unfulfilled capacity] from requests the queue
        # could not satisfy at arrival time.
        self.deficits: deque[list] = deque()
        self.draining = False
        self.diagnostics = {"unknown_sender_drops": 0, "tasks_started": 0}
        self.ctx = None

    def bind(self, ctx) -> None:
        self.ctx = ctx

    def on_start(self) -> None:
        pass

    def on_message(self, msg: Message) -> None:
        if isinstance(msg, EnqueueTasks):
            self.queue.extend(msg.tasks)
            self._serve_deficits()
            self._maybe_finish()
        elif isinstance(msg, RequestTasks):
            if msg.buffer_id not in self.buffer_ids:
                self.diagnostics["unknown_sender_drops"] += 1
                logger.warning("dropping request from unknown worker %s", msg.buffer_id)
                return
            self._answer_request(msg.buffer_id, msg.capacity)
        elif isinstance(msg, TaskStarted):
            self.diagnostics["tasks_started"] += 1
        elif isinstance(msg, ResultBatch):
            self.ctx.send(ENGINE, msg)
        elif isinstance(msg, NoMoreTasks):
            self.draining = True
            self._maybe_finish()
        elif isinstance(msg, WorkerDeath):
            # A buffer went away; stop routing its unfulfilled requests.
            self.buffer_ids.discard(msg.worker)
            self.deficits = deque(d for d in self.deficits if d[0] != msg.worker)
            logger.warning("buffer %s died", msg.worker)
        else:
            self.diagnostics["unknown_sender_drops"] += 1
            logger.warning("producer dropping unexpected message %r", msg)

    def _answer_request(self, buffer_id: WorkerId, capacity: int) -> None:
        self._serve_deficits()  # earlier requests drain first (FIFO fairness)
        sent = 0
        if self.queue and not self.deficits:
            batch = [self.queue.popleft() for _ in range(min(capacity, len(self.queue)))]
            sent = len(batch)
            self.ctx.send(buffer_id, EnqueueTasks(tuple(batch)))
        if sent == 0:
            # Explicit empty reply; the remainder is pushed on the next
            # EnqueueTasks arrival.
            self.ctx.send(buffer_id, EnqueueTasks(()))
        if sent < capacity:
            self.deficits.append([buffer_id, capacity - sent])
        self._maybe_finish()

    def _serve_deficits(self) -> None:
        while self.queue and self.deficits:
            entry = self.deficits[0]
            n = min(entry[1], len(self.queue))
            batch = tuple(self.queue.popleft() for _ in range(n))
            self.ctx.send(entry[0], EnqueueTasks(batch))
            entry[1] -= n
            if entry[1] == 0:
                self.deficits.popleft()

    def _maybe_finish(self) -> None:
        if self.draining and not self.queue:
            for bid in sorted(self.buffer_ids):
                self.ctx.send(bid, NoMoreTasks())
            self.ctx.stop()


class BufferLoop:
    """Intermediate layer: pulls task batches, feeds a fixed set of consumers,
    batches results upward."""

    def __init__(
        self,
        buffer_id: WorkerId,
        consumers: list[WorkerId],
        batching: BatchingPolicy = BatchingPolicy(),
    ):
        self.buffer_id = buffer_id
        self.consumers = list(consumers)
        self.batching = batching
        self.queue: deque[TaskSpec] = deque()
        self.requested = 0
        self.idle: deque[WorkerId] = deque(consumers)
        self.in_flight: dict[WorkerId, TaskSpec] = {}
        self.retried: set[TaskId] = set()
        self.dead: set[WorkerId] = set()
        self.batch: list[TaskRecord] = []
        self._batch_timer = None
        self.draining = False
        self.ctx = None

    def bind(self, ctx) -> None:
        self.ctx = ctx

    def on_start(self) -> None:
        self._maybe_request()

    def on_message(self, msg: Message) -> None:
        if isinstance(msg, EnqueueTasks):
            self.requested = max(0, self.requested - len(msg.tasks))
            self.queue.extend(msg.tasks)
            self._dispatch_idle()
            self._maybe_request()
            self._maybe_finish()
        elif isinstance(msg, TaskStarted):
            self.ctx.send(PRODUCER, msg)
        elif isinstance(msg, TaskDone):
            worker = msg.record.place
            self.in_flight.pop(worker, None)
            if worker not in self.dead:
                self.idle.append(worker)
            self._add_to_batch(msg.record)
            self._dispatch_idle()
            self._maybe_request()
            self._maybe_finish()
        elif isinstance(msg, WorkerDeath):
            self._on_worker_death(msg.worker)
        elif isinstance(msg, NoMoreTasks):
            self.draining = True
            self._maybe_finish()
        else:
            logger.warning("buffer %s dropping unexpected message %r", self.buffer_id, msg)

    def _alive_count(self) -> int:
        return len(self.consumers) - len(self.dead)

    def _dispatch_idle(self) -> None:
        while self.queue and self.idle:
            consumer = self.idle.popleft()
            if consumer in self.dead:
                continue
            spec = self.queue.popleft()
            self.in_flight[consumer] = spec
            self.ctx.send(consumer, Dispatch(spec))

    def _maybe_request(self) -> None:
        if self.draining:
            return
        want = LOW_WATERMARK_FACTOR * self._alive_count()
        missing = want - len(self.queue) - self.requested
        if missing > 0:
            self.requested += missing
            self.ctx.send(PRODUCER, RequestTasks(self.buffer_id, missing))

    def _add_to_batch(self, record: TaskRecord) -> None:
        self.batch.append(record)
        if len(self.batch) >= self.batching.max_batch:
            self._flush(FLUSH_SIZE)
        elif self._batch_timer is None:
            self._batch_timer = self.ctx.set_timer(
                self.batching.max_delay, lambda: self._flush(FLUSH_TIME)
            )

    def _flush(self, reason: str) -> None:
        if self._batch_timer is not None:
            self._batch_timer.cancel()
            self._batch_timer = None
        if self.batch:
            self.ctx.send(PRODUCER, ResultBatch(tuple(self.batch), reason))
            self.batch = []

    def _on_worker_death(self, worker: WorkerId) -> None:
        if worker in self.dead:
            return
        self.dead.add(worker)
        spec = self.in_flight.pop(worker, None)
        if spec is not None:
            if spec.id in self.retried:
                # Second loss of the same task: report it failed rather than
                # risk a third execution.
                now = self.ctx.now()
                self._add_to_batch(
                    TaskRecord(
                        spec=spec,
                        state=TaskState.FAILED,
                        rc=-1,
                        start_at=now,
                        finish_at=now,
                        place=worker,
                        warning="consumer died twice while executing this task",
                    )
                )
            else:
                self.retried.add(spec.id)
                self.queue.appendleft(spec)
        self._dispatch_idle()
        self._maybe_request()
        self._maybe_finish()

    def _maybe_finish(self) -> None:
        if self.draining and not self.queue and not self.in_flight:
            self._flush(FLUSH_SHUTDOWN)
            for consumer in self.consumers:
                if consumer not in self.dead:
                    self.ctx.send(consumer, NoMoreTasks())
            self.ctx.stop()


class ConsumerLoop:
    """Leaf worker: executes one task at a time via the transport's executor."""

    def __init__(self, worker_id: WorkerId, buffer_id: WorkerId):
        self.worker_id = worker_id
        self.buffer_id = buffer_id
        self.pending: deque[TaskSpec] = deque()
        self.busy = False
        self.stopping = False
        self.ctx = None

    def bind(self, ctx) -> None:
        self.ctx = ctx

    def on_start(self) -> None:
        pass

    def on_message(self, msg: Message) -> None:
        if isinstance(msg, Dispatch):
            self.pending.append(msg.task)
            self._try_start()
        elif isinstance(msg, NoMoreTasks):
            self.stopping = True
            self._maybe_finish()
        else:
            logger.warning("consumer %s dropping unexpected message %r", self.worker_id, msg)

    def _try_start(self) -> None:
        if self.busy or not self.pending:
            return
        spec = self.pending.popleft()
        self.busy = True
        start_at = self.ctx.now()
        self.ctx.send(self.buffer_id, TaskStarted(spec.id, self.worker_id, start_at))
        self.ctx.execute(spec, lambda outcome: self._complete(spec, start_at, outcome))

    def _complete(self, spec: TaskSpec, start_at: float, outcome) -> None:
        finish_at = self.ctx.now()
        state = TaskState.FINISHED if outcome.rc == 0 else TaskState.FAILED
        record = TaskRecord(
            spec=spec,
            state=state,
            rc=outcome.rc,
            results=list(outcome.results),
            start_at=start_at,
            finish_at=finish_at,
            place=self.worker_id,
            warning=outcome.warning,
        )
        self.ctx.send(self.buffer_id, TaskDone(record))
        self.busy = False
        self._try_start()
        self._maybe_finish()

    def _maybe_finish(self) -> None:
        if self.stopping and not self.busy and not self.pending:
            self.ctx.stop()
