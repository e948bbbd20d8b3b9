"""Single-point bridge between the engine and heterogeneous backends.

Backends register by descriptor; selectors resolve by explicit id or by
capability tags, choosing the least-loaded match (lexicographic id on ties).
"""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Optional, Union

from ..errors import BackendDown, DuplicateId, InvalidCapacity, NoMatchingBackend, UnknownHandle
from ..model import BackendSelector
from .base import (
    STDERR_NAME,
    STDOUT_NAME,
    BackendDescriptor,
    DispatchRequest,
    JobHandle,
    PollResult,
    SimWorker,
)
from .cluster import ClusterSimBackend
from .desktopgrid import DesktopGridBackend
from .local import LocalBackend

__all__ = [
    "BackendDescriptor", "BridgeRegistry", "ClusterSimBackend", "DesktopGridBackend",
    "DispatchRequest", "JobHandle", "LocalBackend", "PollResult", "SimWorker",
    "STDOUT_NAME", "STDERR_NAME", "load_backend_config",
]

_BACKEND_KINDS = {
    "local": LocalBackend,
    "cluster_sim": ClusterSimBackend,
    "desktop_grid_sim": DesktopGridBackend,
}


class BridgeRegistry:
    def __init__(self):
        self._backends: dict[str, object] = {}
        self._lock = threading.Lock()

    def register_backend(self, desc: BackendDescriptor):
        """Instantiate and list a backend; returns the backend object."""
        if desc.kind not in _BACKEND_KINDS:
            raise ValueError(f"unknown backend kind {desc.kind!r}")
        if desc.kind in ("local", "cluster_sim") and (desc.slots is None or desc.slots < 1):
            raise InvalidCapacity(f"backend {desc.id!r} needs slots >= 1", backend=desc.id)
        if desc.kind == "desktop_grid_sim":
            n = len(desc.worker_specs) or (desc.workers or 0)
            if n < 1:
                raise InvalidCapacity(f"backend {desc.id!r} needs workers >= 1", backend=desc.id)
        with self._lock:
            if desc.id in self._backends:
                raise DuplicateId(f"backend id {desc.id!r} already registered", backend=desc.id)
            backend = _BACKEND_KINDS[desc.kind](desc)
            self._backends[desc.id] = backend
            return backend

    def get(self, backend_id: str):
        backend = self._backends.get(backend_id)
        if backend is None:
            raise NoMatchingBackend(f"no backend {backend_id!r}", backend=backend_id)
        return backend

    def descriptors(self) -> list[BackendDescriptor]:
        return [b.descriptor for _, b in sorted(self._backends.items())]

    def resolve(self, selector: BackendSelector, healthy_only: bool = False) -> list:
        """Backends matching the selector, sorted by id."""
        matches = []
        for backend_id in sorted(self._backends):
            backend = self._backends[backend_id]
            desc = backend.descriptor
            if selector.backend_id is not None:
                if backend_id == selector.backend_id:
                    matches.append(backend)
            elif selector.tags and selector.tags <= desc.capability_tags:
                matches.append(backend)
        if healthy_only:
            matches = [b for b in matches if b.descriptor.health == "up"]
        return matches

    def select(self, selector: BackendSelector):
        """Least-loaded healthy match; ties broken by lexicographic id."""
        matches = self.resolve(selector)
        if not matches:
            raise NoMatchingBackend(f"selector {selector} matches no backend")
        healthy = [b for b in matches if b.descriptor.health == "up"]
        if not healthy:
            raise BackendDown(f"all backends matching {selector} are down")
        return min(healthy, key=lambda b: (b.load(), b.descriptor.id))

    def dispatch(self, request: DispatchRequest, selector: BackendSelector) -> JobHandle:
        return self.select(selector).dispatch(request)

    def poll(self, handle: JobHandle) -> PollResult:
        backend = self._backends.get(handle.backend_id)
        if backend is None:
            raise UnknownHandle(f"handle names unknown backend {handle.backend_id!r}")
        return backend.poll(handle)

    def cancel(self, handle: JobHandle) -> None:
        backend = self._backends.get(handle.backend_id)
        if backend is None:
            raise UnknownHandle(f"handle names unknown backend {handle.backend_id!r}")
        backend.cancel(handle)

    def step_all(self, dt: float) -> None:
        for _, backend in sorted(self._backends.items()):
            backend.step(dt)


def load_backend_config(path: Union[str, Path]) -> list[BackendDescriptor]:
    """Parse the backend registry config file (a JSON list of descriptors)."""
    doc = json.loads(Path(path).read_text())
    return [BackendDescriptor.from_json(d) for d in doc]
