"""BOINC-like desktop grid simulation: pull workers, replication, quorum.

Each work unit is handed to ``r`` distinct workers; once ``q`` identical
result hashes arrive the unit is canonicalized and completes. A mismatch
round triggers one extension replica at a time (bounded by
``max_replication``); worker churn abandons in-flight assignments, which are
then reassigned on the next fetch. The engine never sees any of this: polls
report only queued/running/done/failed.

Auto workers really execute the payload in a private replica directory (a
corrupt worker perturbs its outputs afterwards), so canonical artifacts are
byte-identical to a local run. Tests can also register manual workers and
drive fetch/report explicitly with synthetic hashes.
"""

from __future__ import annotations

import random
import threading
from pathlib import Path
from typing import Optional

from ..errors import AlreadyTerminal, UnknownHandle, UnknownWorker
from .base import (
    BackendDescriptor,
    DispatchRequest,
    JobHandle,
    PollResult,
    SimWorker,
    TraceLog,
    copy_inputs,
    hash_outputs,
    new_output_files,
    run_payload,
    snapshot_names,
)


class _Assignment:
    __slots__ = ("worker_id", "ticket", "start", "due", "will_fail", "replica_dir", "index")

    def __init__(self, worker_id, ticket, start, due, will_fail, replica_dir, index):
        self.worker_id = worker_id
        self.ticket = ticket
        self.start = start
        self.due = due
        self.will_fail = will_fail
        self.replica_dir = replica_dir
        self.index = index


class _Result:
    __slots__ = ("worker_id", "hash", "exit_code", "replica_dir", "valid")

    def __init__(self, worker_id, hash_, exit_code, replica_dir):
        self.worker_id = worker_id
        self.hash = hash_
        self.exit_code = exit_code
        self.replica_dir = replica_dir
        self.valid: Optional[bool] = None


class _WorkUnit:
    __slots__ = (
        "ticket", "request", "replication", "quorum", "input_names",
        "assignments", "results", "canonical", "state", "exit_code",
        "reason", "consumed", "ever_assigned", "next_replica",
    )

    def __init__(self, ticket, request, replication, quorum, input_names):
        self.ticket = ticket
        self.request = request
        self.replication = replication
        self.quorum = quorum
        self.input_names = input_names
        self.assignments: list[_Assignment] = []
        self.results: list[_Result] = []
        self.canonical: Optional[str] = None
        self.state = "pending"  # pending | done | failed | canceled
        self.exit_code: Optional[int] = None
        self.reason: Optional[str] = None
        self.consumed = False
        self.ever_assigned = False
        self.next_replica = 0

    def participant_ids(self) -> set[str]:
        return {a.worker_id for a in self.assignments} | {r.worker_id for r in self.results}


class DesktopGridBackend:
    kind = "desktop_grid_sim"

    def __init__(self, descriptor: BackendDescriptor):
        self.descriptor = descriptor
        self.now = 0.0
        self.trace = TraceLog()
        self.workers: dict[str, SimWorker] = {}
        self._busy: dict[str, int] = {}  # worker id -> ticket
        self._units: dict[int, _WorkUnit] = {}
        self._next_ticket = 0
        self._lock = threading.RLock()
        if descriptor.worker_specs:
            for spec in descriptor.worker_specs:
                self.workers[spec.id] = spec
        else:
            for i in range(descriptor.workers or 2):
                self.workers[f"w{i}"] = SimWorker(id=f"w{i}")

    def add_worker(self, worker: SimWorker) -> None:
        with self._lock:
            self.workers[worker.id] = worker

    # -- backend protocol --------------------------------------------------------

    def dispatch(self, request: DispatchRequest) -> JobHandle:
        with self._lock:
            ticket = self._next_ticket
            self._next_ticket += 1
            inputs = snapshot_names(request.sandbox) if request.sandbox.exists() else set()
            unit = _WorkUnit(
                ticket, request,
                replication=self.descriptor.replication,
                quorum=self.descriptor.quorum,
                input_names=inputs,
            )
            self._units[ticket] = unit
            self.trace.emit(self.now, "dispatch", ticket, request.label)
            return JobHandle(backend_id=self.descriptor.id, ticket=ticket, submitted_at=self.now)

    def poll(self, handle: JobHandle) -> PollResult:
        with self._lock:
            unit = self._units.get(handle.ticket)
            if unit is None or unit.consumed:
                raise UnknownHandle(f"no live unit for ticket {handle.ticket}", ticket=handle.ticket)
            if unit.state == "done":
                unit.consumed = True
                return PollResult("done", exit_code=unit.exit_code)
            if unit.state in ("failed", "canceled"):
                unit.consumed = True
                return PollResult("failed", exit_code=unit.exit_code, reason=unit.reason or unit.state)
            if unit.assignments:
                return PollResult("running")
            return PollResult("queued")

    def cancel(self, handle: JobHandle) -> None:
        with self._lock:
            unit = self._units.get(handle.ticket)
            if unit is None or unit.consumed:
                raise UnknownHandle(f"no live unit for ticket {handle.ticket}", ticket=handle.ticket)
            if unit.state in ("done", "failed", "canceled"):
                raise AlreadyTerminal(f"ticket {handle.ticket} already terminal", ticket=handle.ticket)
            self._abandon_all(unit)
            unit.state = "canceled"
            unit.reason = "canceled"
            self.trace.emit(self.now, "cancel", handle.ticket)

    def load(self) -> int:
        with self._lock:
            return sum(1 for u in self._units.values() if u.state == "pending")

    # -- pull-model worker API -----------------------------------------------------

    def grid_fetch_work(self, worker_id: str) -> Optional[int]:
        """Assign the oldest needy work unit to the worker; None if nothing fits."""
        with self._lock:
            worker = self.workers.get(worker_id)
            if worker is None:
                raise UnknownWorker(f"worker {worker_id!r} not registered", worker=worker_id)
            if worker_id in self._busy or not worker.is_up(self.now):
                return None
            for ticket in sorted(self._units):
                unit = self._units[ticket]
                if unit.state != "pending":
                    continue
                if len(unit.assignments) + len(unit.results) >= unit.replication:
                    continue
                if worker_id in unit.participant_ids():
                    continue
                return self._assign(unit, worker)
            return None

    def grid_report(self, worker_id: str, ticket: int, result_hash: str, exit_code: int = 0) -> str:
        """Record a worker's result hash; returns accepted or invalid."""
        with self._lock:
            if worker_id not in self.workers:
                raise UnknownWorker(f"worker {worker_id!r} not registered", worker=worker_id)
            unit = self._units.get(ticket)
            if unit is None:
                raise UnknownHandle(f"no unit {ticket}", ticket=ticket)
            assignment = next((a for a in unit.assignments if a.worker_id == worker_id), None)
            replica_dir = assignment.replica_dir if assignment else None
            if assignment is not None:
                unit.assignments.remove(assignment)
            self._busy.pop(worker_id, None)
            if unit.state != "pending":
                return "invalid"
            result = _Result(worker_id, result_hash, exit_code, replica_dir)
            unit.results.append(result)
            self.trace.emit(self.now, "report", ticket, f"{worker_id} {result_hash[:8]}")
            self._check_quorum(unit)
            if unit.canonical is not None and result.hash != unit.canonical:
                result.valid = False
                return "invalid"
            return "accepted"

    # -- simulation -----------------------------------------------------------------

    def step(self, dt: float) -> list[str]:
        """Advance simulated time, driving auto workers through churn/compute."""
        with self._lock:
            horizon = self.now + dt
            self._auto_fetch()
            while True:
                events = [a.due for u in self._units.values() if u.state == "pending"
                          for a in u.assignments]
                events += [b for w in self.workers.values() for win in w.down_windows
                           for b in win if self.now < b]
                events = [t for t in events if t <= horizon and t > self.now]
                if not events:
                    break
                self.now = min(events)
                self._apply_churn()
                self._complete_due()
                self._auto_fetch()
            self.now = horizon
            self._auto_fetch()
            return self.trace.lines()

    def _assign(self, unit: _WorkUnit, worker: SimWorker) -> int:
        duration = unit.request.runtime_hint * worker.speed_factor
        rng = random.Random(self.descriptor.seed * 1_000_003 + unit.ticket * 1009 + unit.next_replica)
        will_fail = rng.random() < worker.p_fail
        replica_dir = None
        if worker.auto:
            replica_dir = unit.request.sandbox / ".replicas" / f"t{unit.ticket}_r{unit.next_replica}_{worker.id}"
        assignment = _Assignment(
            worker.id, unit.ticket, self.now, self.now + duration, will_fail, replica_dir, unit.next_replica
        )
        unit.next_replica += 1
        unit.assignments.append(assignment)
        unit.ever_assigned = True
        self._busy[worker.id] = unit.ticket
        self.trace.emit(self.now, "assign", unit.ticket, f"{worker.id} r{assignment.index}")
        return unit.ticket

    def _auto_fetch(self) -> None:
        for worker_id in sorted(self.workers):
            if self.workers[worker_id].auto:
                self.grid_fetch_work(worker_id)  # one assignment per worker at a time

    def _apply_churn(self) -> None:
        for worker_id in sorted(self.workers):
            worker = self.workers[worker_id]
            if not worker.is_up(self.now) and worker_id in self._busy:
                ticket = self._busy.pop(worker_id)
                unit = self._units[ticket]
                for a in list(unit.assignments):
                    if a.worker_id == worker_id:
                        unit.assignments.remove(a)
                        self.trace.emit(self.now, "lost", ticket, worker_id)

    def _complete_due(self) -> None:
        for ticket in sorted(self._units):
            unit = self._units[ticket]
            if unit.state != "pending":
                continue
            for a in sorted(list(unit.assignments), key=lambda x: (x.due, x.worker_id)):
                if a.due > self.now:
                    continue
                worker = self.workers[a.worker_id]
                if not worker.auto:
                    continue
                if a.will_fail:
                    unit.assignments.remove(a)
                    self._busy.pop(a.worker_id, None)
                    self.trace.emit(self.now, "crash", ticket, a.worker_id)
                    continue
                exit_code, result_hash = self._execute_replica(unit, a, worker)
                self.grid_report(a.worker_id, ticket, result_hash, exit_code)

    def _execute_replica(self, unit: _WorkUnit, a: _Assignment, worker: SimWorker) -> tuple[int, str]:
        replica = Path(a.replica_dir)
        copy_inputs(unit.request.sandbox, replica)
        before = set(unit.input_names)
        exit_code = run_payload(unit.request, cwd=replica)
        outputs = new_output_files(replica, before)
        if worker.corrupt:
            for name in outputs:
                if name not in ("stdout.txt", "stderr.txt"):
                    with open(replica / name, "ab") as fh:
                        fh.write(f"\n#corrupted-by-{worker.id}\n".encode())
        return exit_code, hash_outputs(replica, outputs, exit_code)

    def _check_quorum(self, unit: _WorkUnit) -> None:
        counts: dict[str, int] = {}
        for r in unit.results:
            counts[r.hash] = counts.get(r.hash, 0) + 1
            if counts[r.hash] >= unit.quorum:
                self._canonicalize(unit, r.hash)
                return
        if len(unit.results) >= unit.replication and not unit.assignments:
            if unit.replication < self.descriptor.max_replication:
                unit.replication += 1
                self.trace.emit(self.now, "extend", unit.ticket, f"r={unit.replication}")
            else:
                unit.state = "failed"
                unit.reason = "no_quorum"
                self.trace.emit(self.now, "failed", unit.ticket, "no_quorum")

    def _canonicalize(self, unit: _WorkUnit, canonical: str) -> None:
        unit.canonical = canonical
        for r in unit.results:
            r.valid = r.hash == canonical
        winner = next(r for r in unit.results if r.valid and r.hash == canonical)
        unit.exit_code = winner.exit_code
        if winner.replica_dir is not None and Path(winner.replica_dir).exists():
            replica = Path(winner.replica_dir)
            for name in new_output_files(replica, set(unit.input_names)):
                data = (replica / name).read_bytes()
                (unit.request.sandbox / name).write_bytes(data)
        self._abandon_all(unit)
        unit.state = "done"
        self.trace.emit(self.now, "canonical", unit.ticket, canonical[:8])

    def _abandon_all(self, unit: _WorkUnit) -> None:
        for a in list(unit.assignments):
            self._busy.pop(a.worker_id, None)
            unit.assignments.remove(a)
