"""Portable archive format for the workflow hierarchy.

An archive is a ZIP container with ``manifest.json`` at the root
(``{"format": "sciflow-archive", "version": 1, "kind", "name"}``),
``graph.json`` / ``configs.json`` where applicable, a ``files/`` directory
for uploaded inputs and executables, and nested ``applications/*.zip`` for
projects. Export/import round-trips every hierarchy kind losslessly.
"""

from __future__ import annotations

import base64
import io
import json
import zipfile
from typing import Any, Mapping, Union

from .errors import CorruptArchive, ManifestMissing, UnsupportedVersion
from .model import (
    Application,
    BackendSelector,
    Edge,
    ExecutableRef,
    Graph,
    InputBinding,
    JobConfig,
    NodeSpec,
    PortKind,
    PortSpec,
    Project,
    ResourceRequest,
    SweepMode,
    Template,
    WorkflowDefinition,
)

ARCHIVE_FORMAT = "sciflow-archive"
ARCHIVE_VERSION = 1

ArchiveItem = Union[Graph, WorkflowDefinition, Template, Application, Project]

# Fixed zip timestamps keep exports byte-stable for identical content.
_ZIP_DATE = (2020, 1, 1, 0, 0, 0)


# --- JSON codecs -------------------------------------------------------------

def port_to_json(p: PortSpec) -> dict:
    out: dict[str, Any] = {"name": p.name, "index": p.index, "kind": p.kind.value}
    if p.cardinality_hint is not None:
        out["cardinality_hint"] = p.cardinality_hint
    return out


def port_from_json(d: Mapping) -> PortSpec:
    return PortSpec(
        name=d["name"],
        index=int(d["index"]),
        kind=PortKind(d.get("kind", "normal")),
        cardinality_hint=d.get("cardinality_hint"),
    )


def graph_to_json(g: Graph) -> dict:
    return {
        "name": g.name,
        "nodes": [
            {
                "name": n.name,
                "input_ports": [port_to_json(p) for p in n.input_ports],
                "output_ports": [port_to_json(p) for p in n.output_ports],
            }
            for n in g.nodes
        ],
        "edges": [
            {"src_node": e.src_node, "src_port": e.src_port, "dst_node": e.dst_node, "dst_port": e.dst_port}
            for e in g.edges
        ],
    }


def graph_from_json(d: Mapping) -> Graph:
    return Graph(
        name=d["name"],
        nodes=tuple(
            NodeSpec(
                name=n["name"],
                input_ports=tuple(port_from_json(p) for p in n.get("input_ports", ())),
                output_ports=tuple(port_from_json(p) for p in n.get("output_ports", ())),
            )
            for n in d.get("nodes", ())
        ),
        edges=tuple(Edge(**e) for e in d.get("edges", ())),
    )


def executable_to_json(ref: ExecutableRef) -> dict:
    out: dict[str, Any] = {"kind": ref.kind}
    if ref.kind == "command":
        out["command"] = ref.command
    elif ref.kind == "inline":
        out.update({"name": ref.name, "text": ref.text, "interpreter": ref.interpreter})
    else:
        out["item_id"] = ref.item_id
    return out


def binding_to_json(b: InputBinding) -> dict:
    out: dict[str, Any] = {"kind": b.kind}
    if b.kind == "file":
        out["file_name"] = b.file_name
    elif b.kind == "literal":
        out["value"] = b.value
    return out


def config_to_json(cfg: JobConfig) -> dict:
    return {
        "node": cfg.node,
        "executable_ref": executable_to_json(cfg.executable_ref),
        "arguments": list(cfg.arguments),
        "input_bindings": {p: binding_to_json(b) for p, b in sorted(cfg.input_bindings.items())},
        "backend_binding": {
            "backend_id": cfg.backend_binding.backend_id,
            "tags": sorted(cfg.backend_binding.tags),
        },
        "resource_request": {
            "cpus": cfg.resource_request.cpus,
            "wall_limit": cfg.resource_request.wall_limit,
            "runtime_hint": cfg.resource_request.runtime_hint,
        },
        "sweep_mode": cfg.sweep_mode.value,
    }


def config_from_json(d: Mapping) -> JobConfig:
    sel = d.get("backend_binding", {})
    return JobConfig(
        node=d["node"],
        executable_ref=ExecutableRef(**d["executable_ref"]),
        arguments=tuple(d.get("arguments", ())),
        input_bindings={p: InputBinding(**b) for p, b in d.get("input_bindings", {}).items()},
        backend_binding=BackendSelector(backend_id=sel.get("backend_id"), tags=frozenset(sel.get("tags", ()))),
        resource_request=ResourceRequest(**d.get("resource_request", {})),
        sweep_mode=SweepMode(d.get("sweep_mode", "cross")),
    )


def definition_to_json(defn: WorkflowDefinition) -> dict:
    """Definition as one JSON document; uploaded files are base64 inline."""
    return {
        "graph": graph_to_json(defn.graph),
        "configs": {n: config_to_json(c) for n, c in sorted(defn.configs.items())},
        "metadata": dict(defn.metadata),
        "files": {n: base64.b64encode(b).decode("ascii") for n, b in sorted(defn.files.items())},
    }


def definition_from_json(d: Mapping) -> WorkflowDefinition:
    return WorkflowDefinition(
        graph=graph_from_json(d["graph"]),
        configs={n: config_from_json(c) for n, c in d.get("configs", {}).items()},
        metadata=dict(d.get("metadata", {})),
        files={n: base64.b64decode(b) for n, b in d.get("files", {}).items()},
    )


def kind_of(item: ArchiveItem) -> str:
    if isinstance(item, Graph):
        return "graph"
    if isinstance(item, Template):
        return "template"
    if isinstance(item, Application):
        return "application"
    if isinstance(item, Project):
        return "project"
    if isinstance(item, WorkflowDefinition):
        return "workflow"
    raise TypeError(f"not an archivable item: {type(item)!r}")


def item_name(item: ArchiveItem) -> str:
    if isinstance(item, Graph):
        return item.name
    if isinstance(item, Template):
        return item.base.graph.name
    if isinstance(item, (Application, Project)):
        return item.name
    return item.graph.name


# --- export / import ----------------------------------------------------------

def _write(zf: zipfile.ZipFile, arcname: str, data: bytes) -> None:
    info = zipfile.ZipInfo(arcname, date_time=_ZIP_DATE)
    info.compress_type = zipfile.ZIP_DEFLATED
    zf.writestr(info, data)


def _dump_json(obj) -> bytes:
    return json.dumps(obj, indent=1, sort_keys=True).encode("utf-8")


def export_archive(item: ArchiveItem) -> bytes:
    kind = kind_of(item)
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        _write(zf, "manifest.json", _dump_json(
            {"format": ARCHIVE_FORMAT, "version": ARCHIVE_VERSION, "kind": kind, "name": item_name(item)}
        ))
        if kind == "graph":
            _write(zf, "graph.json", _dump_json(graph_to_json(item)))
        elif kind in ("workflow", "application", "template"):
            defn = item.base if kind == "template" else (item.definition if kind == "application" else item)
            _write(zf, "graph.json", _dump_json(graph_to_json(defn.graph)))
            _write(zf, "configs.json", _dump_json({
                "configs": {n: config_to_json(c) for n, c in sorted(defn.configs.items())},
                "metadata": dict(defn.metadata),
            }))
            for name in sorted(defn.files):
                _write(zf, f"files/{name}", defn.files[name])
            if kind == "template":
                _write(zf, "template.json", _dump_json({
                    "frozen_fields": sorted(item.frozen_fields),
                    "free_fields": sorted(item.free_fields),
                }))
        else:  # project
            for app in item.applications:
                _write(zf, f"applications/{app.name}.zip", export_archive(app))
    return buf.getvalue()


def import_archive(data: bytes) -> ArchiveItem:
    try:
        zf = zipfile.ZipFile(io.BytesIO(data))
        names = set(zf.namelist())
    except (zipfile.BadZipFile, OSError) as exc:
        raise CorruptArchive(f"not a readable archive: {exc}")

    if "manifest.json" not in names:
        raise ManifestMissing("archive has no manifest.json")
    try:
        manifest = json.loads(zf.read("manifest.json"))
    except (ValueError, zipfile.BadZipFile) as exc:
        raise CorruptArchive(f"manifest unreadable: {exc}")
    if manifest.get("format") != ARCHIVE_FORMAT:
        raise CorruptArchive(f"unknown archive format {manifest.get('format')!r}")
    if manifest.get("version") != ARCHIVE_VERSION:
        raise UnsupportedVersion(f"archive version {manifest.get('version')!r} not supported")
    kind = manifest.get("kind")
    name = manifest.get("name", "")

    try:
        if kind == "graph":
            return graph_from_json(json.loads(zf.read("graph.json")))
        if kind in ("workflow", "application", "template"):
            graph = graph_from_json(json.loads(zf.read("graph.json")))
            cfg_doc = json.loads(zf.read("configs.json"))
            files = {
                n.split("/", 1)[1]: zf.read(n)
                for n in sorted(names)
                if n.startswith("files/") and not n.endswith("/")
            }
            defn = WorkflowDefinition(
                graph=graph,
                configs={n: config_from_json(c) for n, c in cfg_doc.get("configs", {}).items()},
                metadata=dict(cfg_doc.get("metadata", {})),
                files=files,
            )
            if kind == "workflow":
                return defn
            if kind == "application":
                return Application(name=name, definition=defn)
            tmpl_doc = json.loads(zf.read("template.json"))
            return Template(
                base=defn,
                frozen_fields=frozenset(tmpl_doc["frozen_fields"]),
                free_fields=frozenset(tmpl_doc["free_fields"]),
            )
        if kind == "project":
            apps = []
            for n in sorted(names):
                if n.startswith("applications/") and n.endswith(".zip"):
                    inner = import_archive(zf.read(n))
                    if not isinstance(inner, Application):
                        raise CorruptArchive(f"project member {n!r} is not an application")
                    apps.append(inner)
            return Project(name=name, applications=tuple(apps))
    except (KeyError, ValueError, TypeError, zipfile.BadZipFile) as exc:
        if isinstance(exc, (CorruptArchive, UnsupportedVersion, ManifestMissing)):
            raise
        raise CorruptArchive(f"archive payload unreadable: {exc}")
    raise CorruptArchive(f"unknown archive kind {kind!r}")
