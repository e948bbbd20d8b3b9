"""Workflow concept hierarchy: graph, workflow, template, application, project.

A graph is a bare DAG of nodes (executables) and edges (dataflows). Adding a
complete per-node configuration turns it into a workflow definition; exposing
a subset of config paths while freezing the rest turns that into a template.
An application is a packaged runnable definition, and a project is a named
bundle of applications. All of these are immutable values.
"""

from __future__ import annotations

import copy
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Iterable, Mapping, Optional

from .errors import (
    FrozenFieldWrite,
    GraphInvalid,
    MissingRequiredFill,
    SweepModeConflict,
    UnconfiguredNode,
    UnknownField,
    UnknownNode,
)

IDENTIFIER_RE = re.compile(r"^[A-Za-z0-9_]{1,64}$")


def is_identifier(name: object) -> bool:
    """True if ``name`` satisfies the portal naming rule [A-Za-z0-9_]{1,64}."""
    return isinstance(name, str) and bool(IDENTIFIER_RE.match(name))


class PortKind(str, Enum):
    NORMAL = "normal"
    GENERATOR = "generator"
    COLLECTOR = "collector"


class SweepMode(str, Enum):
    CROSS = "cross"
    DOT = "dot"


@dataclass(frozen=True)
class PortSpec:
    name: str
    index: int
    kind: PortKind = PortKind.NORMAL
    cardinality_hint: Optional[int] = None

    def __post_init__(self):
        if self.index < 0:
            raise ValueError(f"port {self.name!r}: index must be non-negative")
        if self.cardinality_hint is not None and self.cardinality_hint < 1:
            raise ValueError(f"port {self.name!r}: cardinality_hint must be positive")


@dataclass(frozen=True)
class NodeSpec:
    name: str
    input_ports: tuple[PortSpec, ...] = ()
    output_ports: tuple[PortSpec, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "input_ports", tuple(self.input_ports))
        object.__setattr__(self, "output_ports", tuple(self.output_ports))
        for ports, direction in ((self.input_ports, "input"), (self.output_ports, "output")):
            indices = sorted(p.index for p in ports)
            if indices != list(range(len(ports))):
                raise ValueError(f"node {self.name!r}: {direction} port indices must be contiguous from 0")
        for p in self.input_ports:
            if p.kind is PortKind.GENERATOR:
                raise ValueError(f"node {self.name!r}: generator kind is only valid on output ports")
        for p in self.output_ports:
            if p.kind is PortKind.COLLECTOR:
                raise ValueError(f"node {self.name!r}: collector kind is only valid on input ports")

    def input_port(self, name: str) -> Optional[PortSpec]:
        return next((p for p in self.input_ports if p.name == name), None)

    def output_port(self, name: str) -> Optional[PortSpec]:
        return next((p for p in self.output_ports if p.name == name), None)


@dataclass(frozen=True)
class Edge:
    """Dataflow from a producer output port to a consumer input port."""

    src_node: str
    src_port: str
    dst_node: str
    dst_port: str


@dataclass(frozen=True)
class Graph:
    name: str
    nodes: tuple[NodeSpec, ...] = ()
    edges: tuple[Edge, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))

    def node(self, name: str) -> Optional[NodeSpec]:
        return next((n for n in self.nodes if n.name == name), None)

    def in_edges(self, node: str) -> list[Edge]:
        return [e for e in self.edges if e.dst_node == node]

    def out_edges(self, node: str) -> list[Edge]:
        return [e for e in self.edges if e.src_node == node]


@dataclass(frozen=True)
class ValidationIssue:
    code: str
    message: str
    context: tuple = ()


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    issues: tuple[ValidationIssue, ...] = ()
    topo_order: tuple[str, ...] = ()

    def codes(self) -> list[str]:
        return [i.code for i in self.issues]


def validate_graph(g: Graph) -> ValidationReport:
    """Check every graph invariant and return all violations at once.

    On success the report carries a deterministic topological order with
    lexicographic tie-breaking.
    """
    issues: list[ValidationIssue] = []

    def issue(code, message, *context):
        issues.append(ValidationIssue(code, message, tuple(context)))

    if not g.nodes:
        issue("EmptyGraph", "graph has no nodes")
        return ValidationReport(ok=False, issues=tuple(issues))

    if not is_identifier(g.name):
        issue("InvalidIdentifier", f"graph name {g.name!r} violates [A-Za-z0-9_]{{1,64}}", g.name)

    seen_nodes: set[str] = set()
    for n in g.nodes:
        if not is_identifier(n.name):
            issue("InvalidIdentifier", f"node name {n.name!r} violates [A-Za-z0-9_]{{1,64}}", n.name)
        if n.name in seen_nodes:
            issue("DuplicateName", f"duplicate node name {n.name!r}", n.name)
        seen_nodes.add(n.name)
        seen_ports: set[str] = set()
        for p in (*n.input_ports, *n.output_ports):
            if not is_identifier(p.name):
                issue("InvalidIdentifier", f"port name {p.name!r} on node {n.name!r} violates [A-Za-z0-9_]{{1,64}}", n.name, p.name)
            if p.name in seen_ports:
                issue("DuplicateName", f"duplicate port name {p.name!r} on node {n.name!r}", n.name, p.name)
            seen_ports.add(p.name)

    by_name = {n.name: n for n in g.nodes}
    inbound: dict[tuple[str, str], int] = {}
    for e in g.edges:
        src = by_name.get(e.src_node)
        dst = by_name.get(e.dst_node)
        if src is None or src.output_port(e.src_port) is None:
            issue("DanglingEdge", f"edge source {e.src_node}.{e.src_port} does not exist", e.src_node, e.src_port)
        if dst is None or dst.input_port(e.dst_port) is None:
            issue("DanglingEdge", f"edge target {e.dst_node}.{e.dst_port} does not exist", e.dst_node, e.dst_port)
        else:
            key = (e.dst_node, e.dst_port)
            inbound[key] = inbound.get(key, 0) + 1
    for (node, port), count in sorted(inbound.items()):
        if count > 1:
            issue("MultipleInputEdges", f"input port {node}.{port} has {count} incoming edges", node, port)

    # Kahn's algorithm over well-formed edges; lexicographic tie-break keeps
    # the order reproducible across runs.
    adj: dict[str, set[str]] = {n.name: set() for n in g.nodes}
    indeg: dict[str, int] = {n.name: 0 for n in g.nodes}
    for e in g.edges:
        if e.src_node in by_name and e.dst_node in by_name and e.src_node != e.dst_node:
            if e.dst_node not in adj[e.src_node]:
                adj[e.src_node].add(e.dst_node)
                indeg[e.dst_node] += 1
        elif e.src_node in by_name and e.src_node == e.dst_node:
            issue("CycleDetected", f"cycle: [{e.src_node}, {e.src_node}]", (e.src_node, e.src_node))

    order: list[str] = []
    frontier = sorted(n for n, d in indeg.items() if d == 0)
    indeg_work = dict(indeg)
    while frontier:
        cur = frontier.pop(0)
        order.append(cur)
        added = False
        for nxt in sorted(adj[cur]):
            indeg_work[nxt] -= 1
            if indeg_work[nxt] == 0:
                frontier.append(nxt)
                added = True
        if added:
            frontier.sort()
    if len(order) < len(by_name):
        cycle = _find_cycle(adj, set(by_name) - set(order))
        issue("CycleDetected", f"cycle: [{', '.join(cycle)}]", tuple(cycle))

    if issues:
        return ValidationReport(ok=False, issues=tuple(issues))
    return ValidationReport(ok=True, topo_order=tuple(order))


def _find_cycle(adj: Mapping[str, set[str]], candidates: set[str]) -> list[str]:
    """Return one cycle as [a, b, ..., a] from the residual (cyclic) nodes."""
    start = min(candidates)
    path: list[str] = []
    on_path: dict[str, int] = {}
    node = start
    while node not in on_path:
        on_path[node] = len(path)
        path.append(node)
        nexts = sorted(m for m in adj[node] if m in candidates)
        if not nexts:  # pragma: no cover - residual nodes always have successors
            candidates = candidates - {node}
            return _find_cycle(adj, candidates)
        node = nexts[0]
    return path[on_path[node]:] + [node]


# --- node configuration -----------------------------------------------------


@dataclass(frozen=True)
class ExecutableRef:
    """What to run for a node.

    kind "command": a program name resolved on PATH in the job sandbox.
    kind "inline": a script staged into the sandbox and run via interpreter.
    kind "repo": a repository item holding the script bytes, resolved at
    submit time.
    """

    kind: str
    command: Optional[str] = None
    name: Optional[str] = None
    text: Optional[str] = None
    interpreter: str = "python3"
    item_id: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("command", "inline", "repo"):
            raise ValueError(f"unknown executable kind {self.kind!r}")
        if self.kind == "command" and not self.command:
            raise ValueError("command executable needs a command")
        if self.kind == "inline" and (not self.name or self.text is None):
            raise ValueError("inline executable needs name and text")
        if self.kind == "repo" and not self.item_id:
            raise ValueError("repo executable needs item_id")


@dataclass(frozen=True)
class InputBinding:
    """How an input port receives its payload.

    kind "edge": from the graph edge into this port.
    kind "file": from an uploaded file bundled with the definition.
    kind "literal": inline text written into the sandbox.
    """

    kind: str
    file_name: Optional[str] = None
    value: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("edge", "file", "literal"):
            raise ValueError(f"unknown binding kind {self.kind!r}")
        if self.kind == "file" and not self.file_name:
            raise ValueError("file binding needs file_name")
        if self.kind == "literal" and self.value is None:
            raise ValueError("literal binding needs value")


@dataclass(frozen=True)
class BackendSelector:
    """Either an explicit backend id or a set of required capability tags."""

    backend_id: Optional[str] = None
    tags: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "tags", frozenset(self.tags))
        if self.backend_id is None and not self.tags:
            raise ValueError("selector needs a backend id or at least one tag")


@dataclass(frozen=True)
class ResourceRequest:
    cpus: int = 1
    wall_limit: float = 60.0
    runtime_hint: float = 1.0  # nominal runtime in simulated seconds

    def __post_init__(self):
        if self.cpus < 1 or self.wall_limit <= 0 or self.runtime_hint < 0:
            raise ValueError("invalid resource request")


@dataclass(frozen=True)
class JobConfig:
    node: str
    executable_ref: ExecutableRef
    arguments: tuple[str, ...] = ()
    input_bindings: Mapping[str, InputBinding] = field(default_factory=dict)
    backend_binding: BackendSelector = BackendSelector(tags=frozenset({"local"}))
    resource_request: ResourceRequest = ResourceRequest()
    sweep_mode: SweepMode = SweepMode.CROSS

    def __post_init__(self):
        object.__setattr__(self, "arguments", tuple(self.arguments))
        object.__setattr__(self, "input_bindings", dict(self.input_bindings))


@dataclass(frozen=True)
class WorkflowDefinition:
    graph: Graph
    configs: Mapping[str, JobConfig] = field(default_factory=dict)
    metadata: Mapping[str, Any] = field(default_factory=dict)
    files: Mapping[str, bytes] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "configs", dict(self.configs))
        object.__setattr__(self, "metadata", dict(self.metadata))
        object.__setattr__(self, "files", dict(self.files))

    def unconfigured_paths(self) -> list[str]:
        """Config paths still needed before the definition is submittable.

        Completeness is always derived from the current state, never stored.
        """
        missing: list[str] = []
        for node in self.graph.nodes:
            cfg = self.configs.get(node.name)
            if cfg is None:
                missing.append(node.name)
                continue
            edge_ports = {e.dst_port for e in self.graph.in_edges(node.name)}
            for port in node.input_ports:
                binding = cfg.input_bindings.get(port.name)
                if binding is None:
                    missing.append(f"{node.name}.input_bindings.{port.name}")
                elif binding.kind == "edge" and port.name not in edge_ports:
                    missing.append(f"{node.name}.input_bindings.{port.name}")
                elif binding.kind != "edge" and port.name in edge_ports:
                    # an edge-fed port must bind its edge, or readiness and
                    # staging would disagree about where the data comes from
                    missing.append(f"{node.name}.input_bindings.{port.name}")
                elif binding.kind == "file" and binding.file_name not in self.files:
                    missing.append(f"{node.name}.input_bindings.{port.name}")
        return missing

    @property
    def is_complete(self) -> bool:
        return not self.unconfigured_paths()


def configure_workflow(
    g: Graph,
    configs: Mapping[str, JobConfig],
    metadata: Optional[Mapping[str, Any]] = None,
    files: Optional[Mapping[str, bytes]] = None,
) -> WorkflowDefinition:
    """Attach per-node configs to a validated graph.

    Raises when a node is missing or incompletely bound, reporting every
    unconfigured path, not just the first.
    """
    report = validate_graph(g)
    if not report.ok:
        raise GraphInvalid("graph does not validate", issues=report.codes())

    node_names = {n.name for n in g.nodes}
    for name in configs:
        if name not in node_names:
            raise UnknownNode(f"config references unknown node {name!r}", node=name)
    for name, cfg in configs.items():
        known_ports = {p.name for p in g.node(name).input_ports}
        for port in cfg.input_bindings:
            if port not in known_ports:
                raise UnknownNode(f"config for {name!r} binds unknown port {port!r}", node=name, port=port)

    defn = WorkflowDefinition(graph=g, configs=configs, metadata=dict(metadata or {}), files=dict(files or {}))
    missing = defn.unconfigured_paths()
    if missing:
        raise UnconfiguredNode("definition incomplete", missing=missing)

    _check_dot_hints(defn)
    return defn


def _check_dot_hints(defn: WorkflowDefinition) -> None:
    """Reject dot-mode consumers whose generator cardinality hints disagree."""
    g = defn.graph
    for node in g.nodes:
        cfg = defn.configs[node.name]
        if cfg.sweep_mode is not SweepMode.DOT:
            continue
        hints = []
        for e in g.in_edges(node.name):
            src_port = g.node(e.src_node).output_port(e.src_port)
            if src_port is not None and src_port.kind is PortKind.GENERATOR and src_port.cardinality_hint:
                hints.append((e.dst_port, src_port.cardinality_hint))
        counts = {h for _, h in hints}
        if len(counts) > 1:
            raise SweepModeConflict(
                f"node {node.name!r} uses dot mode with mismatched generator hints",
                node=node.name,
                hints=sorted(hints),
            )


# --- templates ---------------------------------------------------------------


def config_paths(defn: WorkflowDefinition) -> list[str]:
    """Enumerate every addressable config path of a definition."""
    paths: list[str] = []
    for node in defn.graph.nodes:
        cfg = defn.configs[node.name]
        base = node.name
        paths.append(f"{base}.executable_ref")
        paths.extend(f"{base}.arguments[{i}]" for i in range(len(cfg.arguments)))
        paths.extend(f"{base}.input_bindings.{p}" for p in sorted(cfg.input_bindings))
        paths.append(f"{base}.backend_binding")
        paths.append(f"{base}.resource_request.cpus")
        paths.append(f"{base}.resource_request.wall_limit")
        paths.append(f"{base}.sweep_mode")
    return paths


_PATH_RE = re.compile(
    r"^(?P<node>[A-Za-z0-9_]+)\.(?P<field>executable_ref|backend_binding|sweep_mode"
    r"|arguments\[(?P<argidx>\d+)\]"
    r"|input_bindings\.(?P<port>[A-Za-z0-9_]+)"
    r"|resource_request\.(?P<res>cpus|wall_limit))$"
)


def get_config_path(defn: WorkflowDefinition, path: str) -> Any:
    m = _PATH_RE.match(path)
    if not m:
        raise UnknownField(f"malformed config path {path!r}", path=path)
    cfg = defn.configs.get(m.group("node"))
    if cfg is None:
        raise UnknownField(f"path {path!r} names an unknown node", path=path)
    if m.group("argidx") is not None:
        idx = int(m.group("argidx"))
        if idx >= len(cfg.arguments):
            raise UnknownField(f"path {path!r} is out of range", path=path)
        return cfg.arguments[idx]
    if m.group("port") is not None:
        port = m.group("port")
        if port not in cfg.input_bindings:
            raise UnknownField(f"path {path!r} names an unknown port", path=path)
        return cfg.input_bindings[port]
    if m.group("res") is not None:
        return getattr(cfg.resource_request, m.group("res"))
    return getattr(cfg, m.group("field"))


def set_config_path(defn: WorkflowDefinition, path: str, value: Any) -> WorkflowDefinition:
    """Return a copy of ``defn`` with one config path replaced."""
    m = _PATH_RE.match(path)
    if not m:
        raise UnknownField(f"malformed config path {path!r}", path=path)
    node = m.group("node")
    cfg = defn.configs.get(node)
    if cfg is None:
        raise UnknownField(f"path {path!r} names an unknown node", path=path)

    if m.group("argidx") is not None:
        idx = int(m.group("argidx"))
        if idx >= len(cfg.arguments):
            raise UnknownField(f"path {path!r} is out of range", path=path)
        args = list(cfg.arguments)
        args[idx] = str(value)
        new_cfg = replace(cfg, arguments=tuple(args))
    elif m.group("port") is not None:
        port = m.group("port")
        if port not in cfg.input_bindings:
            raise UnknownField(f"path {path!r} names an unknown port", path=path)
        binding = value if isinstance(value, InputBinding) else InputBinding(kind="literal", value=str(value))
        bindings = dict(cfg.input_bindings)
        bindings[port] = binding
        new_cfg = replace(cfg, input_bindings=bindings)
    elif m.group("res") is not None:
        res = m.group("res")
        kwargs = {res: type(getattr(cfg.resource_request, res))(value)}
        new_cfg = replace(cfg, resource_request=replace(cfg.resource_request, **kwargs))
    elif m.group("field") == "sweep_mode":
        new_cfg = replace(cfg, sweep_mode=SweepMode(value))
    elif m.group("field") == "backend_binding":
        binding = value if isinstance(value, BackendSelector) else BackendSelector(**value)
        new_cfg = replace(cfg, backend_binding=binding)
    else:  # executable_ref
        ref = value if isinstance(value, ExecutableRef) else ExecutableRef(**value)
        new_cfg = replace(cfg, executable_ref=ref)

    configs = dict(defn.configs)
    configs[node] = new_cfg
    return replace(defn, configs=configs)


@dataclass(frozen=True)
class Template:
    """A definition with most fields frozen and a few exposed to end users.

    A free field whose base value is an unbound (literal ``""``) input binding
    counts as required: instantiation without a fill for it is rejected.
    """

    base: WorkflowDefinition
    frozen_fields: frozenset[str]
    free_fields: frozenset[str]

    def __post_init__(self):
        object.__setattr__(self, "frozen_fields", frozenset(self.frozen_fields))
        object.__setattr__(self, "free_fields", frozenset(self.free_fields))
        overlap = self.frozen_fields & self.free_fields
        if overlap:
            raise ValueError(f"fields both frozen and free: {sorted(overlap)}")
        all_paths = set(config_paths(self.base))
        union = self.frozen_fields | self.free_fields
        if union != all_paths:
            missing = sorted(all_paths - union)
            extra = sorted(union - all_paths)
            raise ValueError(f"frozen/free sets must cover config paths exactly (missing={missing}, extra={extra})")

    @classmethod
    def from_definition(cls, base: WorkflowDefinition, free_fields: Iterable[str]) -> "Template":
        free = frozenset(free_fields)
        return cls(base=base, frozen_fields=frozenset(config_paths(base)) - free, free_fields=free)

    def required_fields(self) -> set[str]:
        required = set()
        for path in self.free_fields:
            value = get_config_path(self.base, path)
            if isinstance(value, InputBinding) and value.kind == "literal" and value.value == "":
                required.add(path)
        return required


def instantiate_template(t: Template, fills: Mapping[str, Any]) -> WorkflowDefinition:
    """Overlay end-user fills on a template's free fields.

    Frozen fields come through bit-identical to the base definition.
    """
    for path in fills:
        if path in t.frozen_fields:
            raise FrozenFieldWrite(f"field {path!r} is frozen", path=path)
        if path not in t.free_fields:
            raise UnknownField(f"field {path!r} is not a template field", path=path)
    unfilled = t.required_fields() - set(fills)
    if unfilled:
        raise MissingRequiredFill("required fields not filled", paths=sorted(unfilled))

    defn = t.base
    for path in sorted(fills):
        defn = set_config_path(defn, path, fills[path])
    return defn


# --- application / project ---------------------------------------------------


@dataclass(frozen=True)
class Application:
    """A packaged, runnable workflow definition."""

    name: str
    definition: WorkflowDefinition


@dataclass(frozen=True)
class Project:
    """A purely organizational bundle of applications."""

    name: str
    applications: tuple[Application, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "applications", tuple(self.applications))


def structural_diff(a: WorkflowDefinition, b: WorkflowDefinition) -> list[str]:
    """Config paths whose values differ between two definitions of one graph."""
    diffs = [p for p in config_paths(a) if get_config_path(a, p) != get_config_path(b, p)]
    if a.graph != b.graph:
        diffs.insert(0, "graph")
    if dict(a.files) != dict(b.files):
        diffs.append("files")
    return diffs


def deep_copy_definition(defn: WorkflowDefinition) -> WorkflowDefinition:
    return copy.deepcopy(defn)
