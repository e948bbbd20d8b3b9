"""Shared backend machinery: descriptors, handles, payload execution."""

from __future__ import annotations

import hashlib
import shutil
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

STDOUT_NAME = "stdout.txt"
STDERR_NAME = "stderr.txt"


@dataclass(frozen=True)
class BackendDescriptor:
    """A registered compute resource behind the bridge.

    The timing model of the simulated kinds is fully determined by ``seed``.
    """

    id: str
    kind: str  # local | cluster_sim | desktop_grid_sim
    capability_tags: frozenset[str] = frozenset()
    slots: Optional[int] = None            # local, cluster_sim
    workers: Optional[int] = None          # desktop_grid_sim
    seed: int = 0
    queue_wait_ms: tuple[float, float] = (0.0, 0.0)  # uniform draw bounds
    speed_factor: float = 1.0
    max_queue: Optional[int] = None
    health: str = "up"
    replication: int = 2
    quorum: int = 2
    max_replication: int = 5
    worker_specs: tuple["SimWorker", ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "capability_tags", frozenset(self.capability_tags))
        object.__setattr__(self, "worker_specs", tuple(self.worker_specs))

    def to_json(self) -> dict:
        out = {
            "id": self.id,
            "kind": self.kind,
            "tags": sorted(self.capability_tags),
            "seed": self.seed,
            "health": self.health,
            "queue_wait_ms": {"dist": "uniform", "lo": self.queue_wait_ms[0], "hi": self.queue_wait_ms[1]},
        }
        if self.slots is not None:
            out["slots"] = self.slots
        if self.workers is not None:
            out["workers"] = self.workers
        if self.kind == "desktop_grid_sim":
            out["replication"] = self.replication
            out["quorum"] = self.quorum
        return out

    @classmethod
    def from_json(cls, d: dict) -> "BackendDescriptor":
        wait = d.get("queue_wait_ms", {})
        if isinstance(wait, dict):
            wait_t = (float(wait.get("lo", 0.0)), float(wait.get("hi", 0.0)))
        else:
            wait_t = (float(wait[0]), float(wait[1]))
        return cls(
            id=d["id"],
            kind=d["kind"],
            capability_tags=frozenset(d.get("tags", ())),
            slots=d.get("slots"),
            workers=d.get("workers"),
            seed=int(d.get("seed", 0)),
            queue_wait_ms=wait_t,
            speed_factor=float(d.get("speed_factor", 1.0)),
            max_queue=d.get("max_queue"),
            health=d.get("health", "up"),
            replication=int(d.get("replication", 2)),
            quorum=int(d.get("quorum", 2)),
            max_replication=int(d.get("max_replication", 5)),
        )


@dataclass(frozen=True)
class SimWorker:
    """One simulated volunteer node; behavior reproducible from its spec."""

    id: str
    speed_factor: float = 1.0
    corrupt: bool = False
    p_fail: float = 0.0
    down_windows: tuple[tuple[float, float], ...] = ()  # (down_at, up_at) sim seconds
    auto: bool = True

    def is_up(self, t: float) -> bool:
        return not any(lo <= t < hi for lo, hi in self.down_windows)


@dataclass(frozen=True)
class JobHandle:
    backend_id: str
    ticket: int
    submitted_at: float = 0.0


@dataclass(frozen=True)
class DispatchRequest:
    """What the engine hands the bridge: a prepared sandbox plus the command.

    ``runtime_hint`` drives the simulated duration on cluster/grid backends;
    ``wall_limit`` bounds the real subprocess.
    """

    sandbox: Path
    argv: tuple[str, ...]
    runtime_hint: float = 1.0
    wall_limit: float = 60.0
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "argv", tuple(self.argv))
        object.__setattr__(self, "sandbox", Path(self.sandbox))


@dataclass(frozen=True)
class PollResult:
    status: str  # queued | running | done | failed
    exit_code: Optional[int] = None
    reason: Optional[str] = None


def run_payload(request: DispatchRequest, cwd: Optional[Path] = None) -> int:
    """Execute the payload capturing the reserved stdout/stderr files."""
    work = Path(cwd) if cwd is not None else request.sandbox
    out = work / STDOUT_NAME
    err = work / STDERR_NAME
    with open(out, "wb") as fo, open(err, "wb") as fe:
        try:
            proc = subprocess.run(
                list(request.argv), cwd=work, stdout=fo, stderr=fe,
                timeout=max(request.wall_limit, 1.0),
            )
            return proc.returncode
        except subprocess.TimeoutExpired:
            fe.write(b"wall limit exceeded\n")
            return 124
        except FileNotFoundError as exc:
            fe.write(f"executable not found: {exc}\n".encode())
            return 127


def snapshot_names(directory: Path) -> set[str]:
    return {p.name for p in directory.iterdir() if p.is_file()}


def copy_inputs(src: Path, dst: Path) -> None:
    dst.mkdir(parents=True, exist_ok=True)
    for p in src.iterdir():
        if p.is_file():
            shutil.copy2(p, dst / p.name)


def new_output_files(directory: Path, before: set[str]) -> list[str]:
    """Top-level files created by the payload, stdout/stderr included."""
    return sorted(
        p.name for p in directory.iterdir()
        if p.is_file() and p.name not in before and not p.name.startswith(".")
    )


def hash_outputs(directory: Path, names: list[str], exit_code: int) -> str:
    """Canonicalization hash over payload outputs (reserved streams excluded)."""
    h = hashlib.sha256()
    h.update(f"exit={exit_code}\n".encode())
    for name in sorted(names):
        if name in (STDOUT_NAME, STDERR_NAME):
            continue
        h.update(name.encode() + b"\x00")
        h.update((directory / name).read_bytes())
        h.update(b"\x01")
    return h.hexdigest()


class TraceLog:
    """Deterministic per-backend event trace keyed by simulated time."""

    def __init__(self):
        self._lines: list[str] = []

    def emit(self, t: float, event: str, ticket, detail: str = "") -> None:
        self._lines.append(f"{t:.6f} {event} {ticket} {detail}".rstrip())

    def lines(self) -> list[str]:
        return list(self._lines)
