"""PBS-like cluster simulation: FIFO queue, fixed slot count, seeded waits.

Time is simulated and advances only through explicit ``step`` calls. The
payload subprocess really runs (at the moment its simulated start event
fires) so artifacts are identical to a local run; only queueing and duration
are simulated. Per-job simulated runtime is ``runtime_hint x speed_factor``
and the queue-wait draw is fully determined by the backend seed and ticket.
"""

from __future__ import annotations

import random
import threading
from collections import deque
from typing import Optional

from ..errors import AlreadyTerminal, QueueFull, UnknownHandle
from .base import BackendDescriptor, DispatchRequest, JobHandle, PollResult, TraceLog, run_payload


class _SimJob:
    __slots__ = (
        "request", "state", "arrival", "queue_wait", "start", "finish",
        "exit_code", "reason", "consumed",
    )

    def __init__(self, request: DispatchRequest, arrival: float, queue_wait: float):
        self.request = request
        self.state = "queued"
        self.arrival = arrival
        self.queue_wait = queue_wait
        self.start: Optional[float] = None
        self.finish: Optional[float] = None
        self.exit_code: Optional[int] = None
        self.reason: Optional[str] = None
        self.consumed = False


class ClusterSimBackend:
    kind = "cluster_sim"

    def __init__(self, descriptor: BackendDescriptor):
        self.descriptor = descriptor
        self.slots = descriptor.slots or 1
        self.max_queue = descriptor.max_queue
        self.now = 0.0
        self.trace = TraceLog()
        self._jobs: dict[int, _SimJob] = {}
        self._queue: deque[int] = deque()   # strict arrival order
        self._running: set[int] = set()
        self._next_ticket = 0
        self._lock = threading.RLock()

    def _draw_wait(self, ticket: int) -> float:
        lo, hi = self.descriptor.queue_wait_ms
        rng = random.Random(self.descriptor.seed * 1_000_003 + ticket)
        return rng.uniform(lo, hi) / 1000.0

    # -- backend protocol --------------------------------------------------------

    def dispatch(self, request: DispatchRequest) -> JobHandle:
        with self._lock:
            if self.max_queue is not None and len(self._queue) >= self.max_queue:
                raise QueueFull(f"backend {self.descriptor.id!r} queue is bounded at {self.max_queue}")
            ticket = self._next_ticket
            self._next_ticket += 1
            job = _SimJob(request, arrival=self.now, queue_wait=self._draw_wait(ticket))
            self._jobs[ticket] = job
            self._queue.append(ticket)
            self.trace.emit(self.now, "dispatch", ticket, request.label)
            return JobHandle(backend_id=self.descriptor.id, ticket=ticket, submitted_at=self.now)

    def poll(self, handle: JobHandle) -> PollResult:
        with self._lock:
            job = self._jobs.get(handle.ticket)
            if job is None or job.consumed:
                raise UnknownHandle(f"no live job for ticket {handle.ticket}", ticket=handle.ticket)
            if job.state in ("done", "failed"):
                job.consumed = True
                if job.state == "done":
                    return PollResult("done", exit_code=job.exit_code)
                return PollResult("failed", exit_code=job.exit_code, reason=job.reason)
            return PollResult(job.state)

    def cancel(self, handle: JobHandle) -> None:
        with self._lock:
            job = self._jobs.get(handle.ticket)
            if job is None or job.consumed:
                raise UnknownHandle(f"no live job for ticket {handle.ticket}", ticket=handle.ticket)
            if job.state in ("done", "failed"):
                raise AlreadyTerminal(f"ticket {handle.ticket} already terminal", ticket=handle.ticket)
            if job.state == "queued":
                self._queue.remove(handle.ticket)
            else:
                self._running.discard(handle.ticket)
            job.state = "failed"
            job.reason = "canceled"
            self.trace.emit(self.now, "cancel", handle.ticket)

    def load(self) -> int:
        with self._lock:
            return len(self._queue) + len(self._running)

    def running_count(self) -> int:
        with self._lock:
            return len(self._running)

    # -- simulation ---------------------------------------------------------------

    def step(self, dt: float) -> list[str]:
        """Advance simulated time by ``dt`` seconds, firing due events in order."""
        with self._lock:
            horizon = self.now + dt
            while True:
                next_finish = min(
                    (self._jobs[t].finish for t in self._running), default=None
                )
                next_start = self._next_start_time()
                candidates = [t for t in (next_finish, next_start) if t is not None and t <= horizon]
                if not candidates:
                    break
                t = min(candidates)
                self.now = t
                # Finishes before starts at equal times, so slots free first.
                if next_finish is not None and next_finish == t:
                    self._finish_due()
                elif next_start is not None and next_start == t:
                    self._start_head()
            self.now = horizon
            return self.trace.lines()

    def _next_start_time(self) -> Optional[float]:
        if not self._queue or len(self._running) >= self.slots:
            return None
        head = self._jobs[self._queue[0]]
        return max(self.now, head.arrival + head.queue_wait)

    def _start_head(self) -> None:
        ticket = self._queue.popleft()
        job = self._jobs[ticket]
        job.start = self.now
        job.finish = self.now + job.request.runtime_hint * self.descriptor.speed_factor
        job.state = "running"
        self._running.add(ticket)
        self.trace.emit(self.now, "start", ticket)
        # Real execution happens now; completion is only reported at the
        # simulated finish time.
        job.exit_code = run_payload(job.request)

    def _finish_due(self) -> None:
        for ticket in sorted(self._running):
            job = self._jobs[ticket]
            if job.finish is not None and job.finish <= self.now:
                self._running.discard(ticket)
                job.state = "done"
                self.trace.emit(self.now, "finish", ticket, f"exit={job.exit_code}")
                return
