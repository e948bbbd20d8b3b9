"""Embedded persistent store: hierarchy items, instance event logs, blobs.

On-disk layout under a single root directory:

    store/items/<id>/meta.json, <version>.zip
    store/instances/<id>/log.jsonl      (one JSON event per line)
    store/blobs/<2-char prefix>/<hash>  (content-addressed, refcounted)

Instance state is event-sourced: the log is append-only and the snapshot is
reconstructible by folding it from genesis. Appends are flushed line-by-line
so a crash loses at most the uncommitted trailing event.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .errors import Forbidden, IntegrityError, NotFound, PublishedImmutable, SequenceGap

ITEM_KINDS = ("graph", "workflow", "template", "application", "project")


@dataclass
class RepoItem:
    id: str
    kind: str
    name: str
    owner: str
    visibility: str  # private | published
    version: int
    created_at: float
    versions: list[int] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "name": self.name,
            "owner": self.owner,
            "visibility": self.visibility,
            "version": self.version,
            "created_at": self.created_at,
            "versions": list(self.versions),
        }

    @classmethod
    def from_json(cls, d: dict) -> "RepoItem":
        return cls(**d)


@dataclass(frozen=True)
class Caller:
    """Identity the service layer passes down for visibility checks."""

    username: str
    role: str  # admin | power_user | end_user

    @property
    def is_admin(self) -> bool:
        return self.role == "admin"


class Repository:
    """Single-node store backing the engine and the portal service.

    Writers are serialized per item id and per instance stream; readers can
    run concurrently with them.
    """

    def __init__(self, root: Path | str, fsync: bool = False):
        self.root = Path(root)
        self.fsync = fsync
        (self.root / "items").mkdir(parents=True, exist_ok=True)
        (self.root / "instances").mkdir(parents=True, exist_ok=True)
        (self.root / "blobs").mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._item_locks: dict[str, threading.Lock] = {}
        self._log_locks: dict[str, threading.Lock] = {}
        self._log_tails: dict[str, int] = {}

    def _get_lock(self, table: dict[str, threading.Lock], key: str) -> threading.Lock:
        with self._lock:
            if key not in table:
                table[key] = threading.Lock()
            return table[key]

    # --- hierarchy items -----------------------------------------------------

    def _item_dir(self, item_id: str) -> Path:
        return self.root / "items" / item_id

    def _load_meta(self, item_id: str) -> RepoItem:
        meta = self._item_dir(item_id) / "meta.json"
        if not meta.exists():
            raise NotFound(f"no item {item_id!r}", item_id=item_id)
        return RepoItem.from_json(json.loads(meta.read_text()))

    def _save_meta(self, item: RepoItem) -> None:
        path = self._item_dir(item.id) / "meta.json"
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(item.to_json(), indent=1, sort_keys=True))
        os.replace(tmp, path)

    def put_item(
        self,
        kind: str,
        name: str,
        archive_bytes: bytes,
        owner: str,
        item_id: Optional[str] = None,
        caller: Optional[Caller] = None,
        new_version: bool = False,
    ) -> RepoItem:
        """Create an item or replace the latest version of a private one.

        Published items are immutable; pass ``new_version=True`` to add a
        fresh version instead (the published older versions stay intact).
        """
        if kind not in ITEM_KINDS:
            raise ValueError(f"unknown item kind {kind!r}")
        if item_id is None:
            item_id = uuid.uuid4().hex[:12]
            lock = self._get_lock(self._item_locks, item_id)
            with lock:
                d = self._item_dir(item_id)
                d.mkdir(parents=True, exist_ok=True)
                item = RepoItem(
                    id=item_id, kind=kind, name=name, owner=owner,
                    visibility="private", version=1, created_at=time.time(), versions=[1],
                )
                (d / "1.zip").write_bytes(archive_bytes)
                self._save_meta(item)
                return item

        lock = self._get_lock(self._item_locks, item_id)
        with lock:
            item = self._load_meta(item_id)
            if caller is not None and not caller.is_admin and caller.username != item.owner:
                raise Forbidden(f"item {item_id!r} is not owned by {caller.username!r}")
            if item.visibility == "published" and not new_version:
                raise PublishedImmutable(f"item {item_id!r} is published; create a new version", item_id=item_id)
            if new_version:
                item.version += 1
                item.versions.append(item.version)
            item.name = name
            (self._item_dir(item_id) / f"{item.version}.zip").write_bytes(archive_bytes)
            self._save_meta(item)
            return item

    def get_item(self, item_id: str, version: Optional[int] = None, caller: Optional[Caller] = None) -> tuple[RepoItem, bytes]:
        item = self._load_meta(item_id)
        if caller is not None and item.visibility != "published":
            if not caller.is_admin and caller.username != item.owner:
                raise Forbidden(f"item {item_id!r} is private", item_id=item_id)
        v = version if version is not None else item.version
        path = self._item_dir(item_id) / f"{v}.zip"
        if not path.exists():
            raise NotFound(f"item {item_id!r} has no version {v}", item_id=item_id, version=v)
        return item, path.read_bytes()

    def list_items(
        self,
        kind: Optional[str] = None,
        owner: Optional[str] = None,
        visibility: Optional[str] = None,
        caller: Optional[Caller] = None,
    ) -> list[RepoItem]:
        """Items visible to the caller, ordered by (kind, name)."""
        out = []
        items_dir = self.root / "items"
        for d in items_dir.iterdir() if items_dir.exists() else ():
            meta = d / "meta.json"
            if not meta.exists():
                continue
            item = RepoItem.from_json(json.loads(meta.read_text()))
            if kind and item.kind != kind:
                continue
            if owner and item.owner != owner:
                continue
            if visibility and item.visibility != visibility:
                continue
            if caller is not None and item.visibility != "published":
                if not caller.is_admin and caller.username != item.owner:
                    continue
            out.append(item)
        return sorted(out, key=lambda i: (i.kind, i.name, i.id))

    def publish(self, item_id: str, caller: Caller) -> str:
        """Freeze an item and make it community-visible. Idempotent."""
        lock = self._get_lock(self._item_locks, item_id)
        with lock:
            item = self._load_meta(item_id)
            if not caller.is_admin:
                if caller.username != item.owner or caller.role != "power_user":
                    raise Forbidden("publishing needs the owning power user or an admin", item_id=item_id)
            item.visibility = "published"
            self._save_meta(item)
            return item.visibility

    def delete_item(self, item_id: str, caller: Optional[Caller] = None) -> None:
        lock = self._get_lock(self._item_locks, item_id)
        with lock:
            item = self._load_meta(item_id)
            if caller is not None and not caller.is_admin and caller.username != item.owner:
                raise Forbidden(f"item {item_id!r} is not owned by {caller.username!r}")
            if item.visibility == "published" and (caller is None or not caller.is_admin):
                raise PublishedImmutable("published items can only be deleted by an admin")
            d = self._item_dir(item_id)
            for p in sorted(d.iterdir()):
                p.unlink()
            d.rmdir()

    # --- instance event logs --------------------------------------------------

    def _log_path(self, instance_id: str) -> Path:
        return self.root / "instances" / instance_id / "log.jsonl"

    def append_event(self, instance_id: str, event: dict) -> int:
        """Append one event; its ``seq`` must be exactly last committed + 1."""
        lock = self._get_lock(self._log_locks, instance_id)
        with lock:
            seq = int(event.get("seq", -1))
            last = self._log_tails.get(instance_id)
            if last is None:
                last = max((e["seq"] for e in self.load_events(instance_id)), default=0)
            if seq != last + 1:
                raise SequenceGap(f"expected seq {last + 1}, got {seq}", expected=last + 1, got=seq)
            path = self._log_path(instance_id)
            path.parent.mkdir(parents=True, exist_ok=True)
            line = json.dumps(event, sort_keys=True, separators=(",", ":")) + "\n"
            with open(path, "a", encoding="utf-8") as fh:
                fh.write(line)
                fh.flush()
                if self.fsync:
                    os.fsync(fh.fileno())
            self._log_tails[instance_id] = seq
            return seq

    def load_events(self, instance_id: str) -> list[dict]:
        """Committed events in order; a torn trailing line is dropped."""
        path = self._log_path(instance_id)
        if not path.exists():
            return []
        events: list[dict] = []
        with open(path, "rb") as fh:
            for raw in fh:
                if not raw.endswith(b"\n"):
                    break  # torn write: at most the last uncommitted event is lost
                try:
                    events.append(json.loads(raw))
                except ValueError:
                    break
        return events

    def list_instances(self) -> list[str]:
        base = self.root / "instances"
        return sorted(d.name for d in base.iterdir() if (d / "log.jsonl").exists()) if base.exists() else []

    def has_instance(self, instance_id: str) -> bool:
        return self._log_path(instance_id).exists()

    def load_instance(self, instance_id: str):
        """Fold the committed log back into a workflow-instance snapshot."""
        from .engine import fold_events  # local import avoids a module cycle

        events = self.load_events(instance_id)
        if not events:
            raise NotFound(f"no instance {instance_id!r}", instance_id=instance_id)
        return fold_events(instance_id, events)

    def sandbox_root(self, instance_id: str) -> Path:
        path = self.root / "sandboxes" / instance_id
        path.mkdir(parents=True, exist_ok=True)
        return path

    # --- content-addressed blobs ----------------------------------------------

    def _blob_path(self, digest: str) -> Path:
        return self.root / "blobs" / digest[:2] / digest

    def put_blob(self, data: bytes) -> str:
        digest = hashlib.sha256(data).hexdigest()
        path = self._blob_path(digest)
        with self._lock:
            if not path.exists():
                path.parent.mkdir(parents=True, exist_ok=True)
                tmp = path.with_suffix(".tmp")
                tmp.write_bytes(data)
                os.replace(tmp, path)
                path.with_suffix(".ref").write_text("1")
            else:
                self._bump_ref(digest, +1)
        return digest

    def get_blob(self, digest: str) -> bytes:
        """Read a blob, re-verifying its content address."""
        path = self._blob_path(digest)
        if not path.exists():
            raise NotFound(f"no blob {digest}", digest=digest)
        data = path.read_bytes()
        actual = hashlib.sha256(data).hexdigest()
        if actual != digest:
            raise IntegrityError(f"blob {digest} corrupt on disk", expected=digest, actual=actual)
        return data

    def has_blob(self, digest: str) -> bool:
        return self._blob_path(digest).exists()

    def _bump_ref(self, digest: str, delta: int) -> int:
        ref = self._blob_path(digest).with_suffix(".ref")
        count = int(ref.read_text()) if ref.exists() else 0
        count += delta
        ref.write_text(str(count))
        return count

    def release_blob(self, digest: str) -> None:
        """Drop one reference; the blob is deleted only at refcount zero."""
        with self._lock:
            path = self._blob_path(digest)
            if not path.exists():
                return
            if self._bump_ref(digest, -1) <= 0:
                path.unlink()
                path.with_suffix(".ref").unlink(missing_ok=True)

    def blob_refcount(self, digest: str) -> int:
        ref = self._blob_path(digest).with_suffix(".ref")
        return int(ref.read_text()) if ref.exists() else 0
