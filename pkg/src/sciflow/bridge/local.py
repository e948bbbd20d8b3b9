"""Local executor backend: real subprocesses in the job sandbox."""

from __future__ import annotations

import subprocess
import threading
from collections import deque
from pathlib import Path
from typing import Optional

from ..errors import AlreadyTerminal, UnknownHandle
from .base import (
    STDERR_NAME,
    STDOUT_NAME,
    BackendDescriptor,
    DispatchRequest,
    JobHandle,
    PollResult,
)


class _LocalJob:
    __slots__ = ("request", "state", "proc", "fo", "fe", "exit_code", "reason", "consumed")

    def __init__(self, request: DispatchRequest):
        self.request = request
        self.state = "queued"
        self.proc: Optional[subprocess.Popen] = None
        self.fo = None
        self.fe = None
        self.exit_code: Optional[int] = None
        self.reason: Optional[str] = None
        self.consumed = False


class LocalBackend:
    """Spawns the payload directly; at most ``slots`` concurrent processes."""

    kind = "local"

    def __init__(self, descriptor: BackendDescriptor):
        self.descriptor = descriptor
        self.slots = descriptor.slots or 2
        self._jobs: dict[int, _LocalJob] = {}
        self._queue: deque[int] = deque()
        self._next_ticket = 0
        self._lock = threading.RLock()

    # -- backend protocol ------------------------------------------------------

    def dispatch(self, request: DispatchRequest) -> JobHandle:
        with self._lock:
            ticket = self._next_ticket
            self._next_ticket += 1
            self._jobs[ticket] = _LocalJob(request)
            self._queue.append(ticket)
            self._pump()
            return JobHandle(backend_id=self.descriptor.id, ticket=ticket)

    def poll(self, handle: JobHandle) -> PollResult:
        with self._lock:
            job = self._jobs.get(handle.ticket)
            if job is None or job.consumed:
                raise UnknownHandle(f"no live job for ticket {handle.ticket}", ticket=handle.ticket)
            self._reap()
            self._pump()
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
            self._reap()
            if job.state in ("done", "failed"):
                raise AlreadyTerminal(f"ticket {handle.ticket} already terminal", ticket=handle.ticket)
            if job.state == "queued":
                self._queue.remove(handle.ticket)
            elif job.proc is not None and job.proc.poll() is None:
                job.proc.kill()
                job.proc.wait()
                self._close_streams(job)
            job.state = "failed"
            job.reason = "canceled"
            self._pump()

    def load(self) -> int:
        with self._lock:
            self._reap()
            return sum(1 for j in self._jobs.values() if j.state in ("queued", "running"))

    def step(self, dt: float) -> None:
        """No simulated time; stepping just reaps and pumps the queue."""
        with self._lock:
            self._reap()
            self._pump()

    # -- internals ---------------------------------------------------------------

    def _running_count(self) -> int:
        return sum(1 for j in self._jobs.values() if j.state == "running")

    def _pump(self) -> None:
        while self._queue and self._running_count() < self.slots:
            ticket = self._queue.popleft()
            job = self._jobs[ticket]
            work = Path(job.request.sandbox)
            job.fo = open(work / STDOUT_NAME, "wb")
            job.fe = open(work / STDERR_NAME, "wb")
            try:
                job.proc = subprocess.Popen(
                    list(job.request.argv), cwd=work, stdout=job.fo, stderr=job.fe
                )
                job.state = "running"
            except (FileNotFoundError, OSError) as exc:
                job.fe.write(f"spawn failed: {exc}\n".encode())
                self._close_streams(job)
                job.state = "failed"
                job.exit_code = 127
                job.reason = "spawn_failed"

    def _reap(self) -> None:
        for job in self._jobs.values():
            if job.state == "running" and job.proc is not None:
                rc = job.proc.poll()
                if rc is not None:
                    self._close_streams(job)
                    job.exit_code = rc
                    job.state = "done"

    @staticmethod
    def _close_streams(job: _LocalJob) -> None:
        for fh in (job.fo, job.fe):
            if fh is not None and not fh.closed:
                fh.close()
