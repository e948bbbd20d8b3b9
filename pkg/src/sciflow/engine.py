"""Runtime orchestrator: turns definitions into job instances and drives them.

The engine is a pull-style scheduler. Each ``tick`` performs one pass over an
instance: advance the simulated backends, poll in-flight handles, stage
outputs of newly finished jobs, expand sweep plans when generator jobs
finish, promote jobs whose inputs all exist, and dispatch ready jobs. All
state changes are appended to the instance's event log, from which the full
snapshot can be folded back (event sourcing).

Job sandbox contract (shared with the bridge and the payload tools): the
working directory contains input files named exactly by port name (with an
``_<i>`` suffix for sweep-instance items), the executable runs with the
configured arguments (``@{port}`` placeholders resolve to staged file
names), declared outputs are collected by port name, and ``stdout.txt`` /
``stderr.txt`` are reserved.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import archive as ar
from .bridge import BridgeRegistry, DispatchRequest, JobHandle
from .errors import (
    AlreadyTerminal,
    AttemptCapExceeded,
    IllegalTransition,
    IncompleteDefinition,
    MissingDeclaredOutput,
    NotFound,
    NotInErrorState,
    SweepDepthExceeded,
    UnknownHandle,
    UnknownInstance,
    UnknownJob,
    UnresolvableBackendSelector,
)
from .model import Graph, PortKind, SweepMode, WorkflowDefinition
from .repository import Repository
from .sweep import GeneratorManifest, manifest_file_name, plan_sweep

INIT = "init"
READY = "ready"
SUBMITTED = "submitted"
RUNNING = "running"
FINISHED = "finished"
ERROR = "error"
ABORTED = "aborted"

TERMINAL_STATES = (FINISHED, ERROR, ABORTED)

LEGAL_TRANSITIONS = frozenset({
    (INIT, READY),
    (READY, SUBMITTED),
    (SUBMITTED, RUNNING),
    (SUBMITTED, ERROR),
    (RUNNING, FINISHED),
    (RUNNING, ERROR),
    (INIT, ABORTED),
    (READY, ABORTED),
    (SUBMITTED, ABORTED),
    (RUNNING, ABORTED),
    (ERROR, READY),
})

STDOUT = "stdout.txt"
STDERR = "stderr.txt"


@dataclass(frozen=True)
class ArtifactRef:
    instance_id: str
    job_id: str
    name: str  # port name, generator item, or stream name
    hash: str
    size: int
    attempt: int = 1


@dataclass
class JobInstance:
    id: str
    node: str
    coord: tuple[int, ...]
    state: str = INIT
    backend: Optional[str] = None
    handle: Optional[JobHandle] = None
    attempt: int = 1
    stdout_ref: Optional[ArtifactRef] = None
    stderr_ref: Optional[ArtifactRef] = None
    exit_code: Optional[int] = None
    artifacts_by_attempt: dict = field(default_factory=dict)

    @property
    def terminal(self) -> bool:
        return self.state in TERMINAL_STATES


@dataclass(frozen=True)
class Transition:
    job_id: str
    node: str
    coord: tuple[int, ...]
    frm: str
    to: str
    detail: dict = field(default_factory=dict)


class _GraphInfo:
    """Static facts about a definition's graph the scheduler consults."""

    def __init__(self, defn: WorkflowDefinition):
        g = defn.graph
        self.graph = g
        self.nodes = {n.name: n for n in g.nodes}
        from .model import validate_graph

        report = validate_graph(g)
        if not report.ok:
            raise IncompleteDefinition("definition graph does not validate", issues=report.codes())
        self.topo = list(report.topo_order)

        self.in_edge: dict[str, dict[str, object]] = {n.name: {} for n in g.nodes}
        for e in g.edges:
            self.in_edge[e.dst_node][e.dst_port] = e

        self.edge_kind: dict[tuple[str, str], str] = {}
        for e in g.edges:
            dst_port = self.nodes[e.dst_node].input_port(e.dst_port)
            src_port = self.nodes[e.src_node].output_port(e.src_port)
            if dst_port.kind is PortKind.COLLECTOR:
                kind = "collector"
            elif src_port.kind is PortKind.GENERATOR:
                kind = "generator"
            else:
                kind = "normal"
            self.edge_kind[(e.dst_node, e.dst_port)] = kind

        self.producers: dict[str, set[str]] = {n.name: set() for n in g.nodes}
        for e in g.edges:
            self.producers[e.dst_node].add(e.src_node)

        self.ancestors: dict[str, set[str]] = {}
        for name in self.topo:
            acc: set[str] = set()
            for p in self.producers[name]:
                acc |= {p} | self.ancestors.get(p, set())
            self.ancestors[name] = acc

        # Generator-fed input ports, sorted by port index: these contribute
        # the node's own sweep axes (appended after the inherited prefix).
        self.gen_ports: dict[str, list[str]] = {}
        self.axis_len: dict[str, int] = {}
        self.inherited_len: dict[str, int] = {}
        for name in self.topo:
            node = self.nodes[name]
            gen = [p.name for p in node.input_ports if self.edge_kind.get((name, p.name)) == "generator"]
            gen.sort(key=lambda p: node.input_port(p).index)
            self.gen_ports[name] = gen
            inherited = 0
            for e in g.in_edges(name):
                kind = self.edge_kind[(name, e.dst_port)]
                if kind == "collector":
                    continue
                inherited = max(inherited, self.axis_len[e.src_node])
            self.inherited_len[name] = inherited
            self.axis_len[name] = inherited + len(gen)

    def max_depth(self) -> int:
        return max(self.axis_len.values(), default=0)

    def source_nodes(self) -> list[str]:
        return [n for n in self.topo if not self.producers[n]]


class _Instance:
    """Mutable runtime state for one workflow instance (single logical writer)."""

    def __init__(self, instance_id: str, defn: WorkflowDefinition, owner: str):
        self.id = instance_id
        self.defn = defn
        self.owner = owner
        self.info = _GraphInfo(defn)
        self.jobs: dict[tuple[str, tuple[int, ...]], JobInstance] = {}
        self.jobs_by_id: dict[str, JobInstance] = {}
        self.artifacts: dict[tuple[str, tuple[int, ...], str], ArtifactRef] = {}
        self.manifests: dict[tuple[str, tuple[int, ...], str], GeneratorManifest] = {}
        self.abort_requested = False
        self.dispatched_ever = False
        self.expansion_error: Optional[str] = None
        self.seq = 0
        self.next_job_n = 0
        self.created_at = time.time()
        self.lock = threading.RLock()

    def node_jobs(self, node: str) -> list[JobInstance]:
        return [j for (n, _), j in sorted(self.jobs.items()) if n == node]

    def sorted_jobs(self) -> list[JobInstance]:
        return [self.jobs[k] for k in sorted(self.jobs.keys())]

    def status(self) -> str:
        jobs = list(self.jobs.values())
        if self.abort_requested and all(j.terminal for j in jobs):
            return "aborted"
        active = any(j.state in (READY, SUBMITTED, RUNNING) for j in jobs)
        if self.expansion_error and not active:
            return "error"
        if jobs and all(j.state == FINISHED for j in jobs):
            return "finished"
        if active:
            return "running" if self.dispatched_ever else "submitted"
        # Quiescent but not all finished: init jobs can only be waiting on a
        # supply chain that a failed or aborted ancestor has cut.
        has_error = any(j.state == ERROR for j in jobs)
        inits = [j for j in jobs if j.state == INIT]
        if has_error and all(self._blocked(j) for j in inits):
            return "error"
        return "running" if self.dispatched_ever else "submitted"

    def _blocked(self, job: JobInstance) -> bool:
        dead = {n for n in self.info.ancestors[job.node]
                for ji in self.node_jobs(n) if ji.state in (ERROR, ABORTED)}
        return bool(dead)


def fold_events(instance_id: str, events: list[dict]) -> _Instance:
    """Rebuild an instance snapshot by replaying its committed event log.

    Every transition in the log is checked against the legal set, so a log
    containing a forbidden transition is rejected outright.
    """
    head = events[0]
    if head.get("type") != "instance_submitted":
        raise NotFound(f"log for {instance_id!r} does not start at genesis")
    inst = _Instance(instance_id, ar.definition_from_json(head["definition"]), head.get("owner", ""))
    inst.created_at = head.get("ts", time.time())
    inst.seq = head["seq"]
    for ev in events[1:]:
        inst.seq = ev["seq"]
        etype = ev["type"]
        if etype == "job_created":
            coord = tuple(ev["coord"])
            job = JobInstance(id=ev["job_id"], node=ev["node"], coord=coord)
            inst.jobs[(ev["node"], coord)] = job
            inst.jobs_by_id[job.id] = job
            inst.next_job_n = max(inst.next_job_n, int(ev["job_id"].rsplit("j", 1)[1]) + 1)
        elif etype == "job_transition":
            job = inst.jobs_by_id[ev["job_id"]]
            frm, to = ev["from"], ev["to"]
            if (frm, to) not in LEGAL_TRANSITIONS:
                raise IllegalTransition(f"log records forbidden transition {frm}->{to}", job=ev["job_id"])
            if job.state != frm:
                raise IllegalTransition(f"log transition {frm}->{to} but job was {job.state}", job=ev["job_id"])
            job.state = to
            job.attempt = ev.get("attempt", job.attempt)
            detail = ev.get("detail", {})
            if to == SUBMITTED:
                inst.dispatched_ever = True
                job.backend = detail.get("backend")
            if "exit_code" in detail:
                job.exit_code = detail["exit_code"]
            if to == READY and frm == ERROR:
                job.exit_code = None
        elif etype == "artifact_staged":
            job = inst.jobs_by_id[ev["job_id"]]
            ref = ArtifactRef(
                instance_id=instance_id, job_id=ev["job_id"], name=ev["name"],
                hash=ev["hash"], size=ev["size"], attempt=ev.get("attempt", 1),
            )
            coord = tuple(ev["coord"])
            inst.artifacts[(ev["node"], coord, ev["name"])] = ref
            job.artifacts_by_attempt.setdefault(ref.attempt, {})[ev["name"]] = ref
            if ev["name"] == "stdout":
                job.stdout_ref = ref
            elif ev["name"] == "stderr":
                job.stderr_ref = ref
        elif etype == "generator_manifest":
            coord = tuple(ev["coord"])
            inst.manifests[(ev["node"], coord, ev["port"])] = GeneratorManifest(
                node=ev["node"], port=ev["port"], count=ev["count"], item_names=tuple(ev["items"]),
            )
        elif etype == "abort_requested":
            inst.abort_requested = True
        elif etype == "expansion_error":
            inst.expansion_error = ev.get("reason", "expansion failed")
        # sweep_expanded events are informational
    return inst


class Engine:
    """Single logical writer per instance; ticks of distinct instances may
    run in parallel. All mutations go through the event log."""

    def __init__(
        self,
        repo: Repository,
        bridge: BridgeRegistry,
        sim_step: float = 3600.0,
        max_sweep_depth: int = 3,
        attempt_cap: int = 10,
    ):
        self.repo = repo
        self.bridge = bridge
        self.sim_step = sim_step
        self.max_sweep_depth = max_sweep_depth
        self.attempt_cap = attempt_cap
        self._instances: dict[str, _Instance] = {}
        self._lock = threading.Lock()

    # -- persistence helpers -----------------------------------------------------

    def _append(self, inst: _Instance, event: dict) -> None:
        inst.seq += 1
        event = {"seq": inst.seq, "ts": time.time(), **event}
        self.repo.append_event(inst.id, event)

    def _emit_transition(self, inst: _Instance, job: JobInstance, to: str,
                         detail: Optional[dict] = None, out: Optional[list] = None) -> None:
        frm = job.state
        if (frm, to) not in LEGAL_TRANSITIONS:
            raise IllegalTransition(f"{frm}->{to} is forbidden", job=job.id)
        job.state = to
        if to == SUBMITTED:
            inst.dispatched_ever = True
        detail = detail or {}
        if "exit_code" in detail:
            job.exit_code = detail["exit_code"]
        if to == READY and frm == ERROR:
            job.exit_code = None
        self._append(inst, {
            "type": "job_transition", "job_id": job.id, "node": job.node,
            "coord": list(job.coord), "from": frm, "to": to,
            "attempt": job.attempt, "detail": detail,
        })
        if out is not None:
            out.append(Transition(job.id, job.node, job.coord, frm, to, detail))

    def _get(self, instance_id: str) -> _Instance:
        with self._lock:
            inst = self._instances.get(instance_id)
        if inst is None:
            if not self.repo.has_instance(instance_id):
                raise UnknownInstance(f"no instance {instance_id!r}", instance_id=instance_id)
            inst = fold_events(instance_id, self.repo.load_events(instance_id))
            with self._lock:
                inst = self._instances.setdefault(instance_id, inst)
        return inst

    def load_instance(self, instance_id: str) -> _Instance:
        return self._get(instance_id)

    def list_instances(self) -> list[str]:
        with self._lock:
            known = set(self._instances)
        return sorted(known | set(self.repo.list_instances()))

    # -- lifecycle ops --------------------------------------------------------------

    def submit_workflow(self, defn: WorkflowDefinition, owner: str) -> str:
        missing = defn.unconfigured_paths()
        if missing:
            raise IncompleteDefinition("definition is not configuration-complete", missing=missing)
        defn = self._resolve_repo_executables(defn)
        info = _GraphInfo(defn)
        if info.max_depth() > self.max_sweep_depth:
            raise SweepDepthExceeded(
                f"sweep depth {info.max_depth()} exceeds cap {self.max_sweep_depth}",
                depth=info.max_depth(), cap=self.max_sweep_depth,
            )
        for name in info.topo:
            sel = defn.configs[name].backend_binding
            if not self.bridge.resolve(sel):
                raise UnresolvableBackendSelector(
                    f"node {name!r} selector matches no registered backend", node=name)

        instance_id = uuid.uuid4().hex[:12]
        inst = _Instance(instance_id, defn, owner)
        self._append_genesis(inst)
        with inst.lock:
            for name in info.topo:
                if info.axis_len[name] == 0:
                    self._create_job(inst, name, ())
            for name in info.source_nodes():
                job = inst.jobs.get((name, ()))
                if job is not None:
                    self._emit_transition(inst, job, READY)
        with self._lock:
            self._instances[instance_id] = inst
        return instance_id

    def _append_genesis(self, inst: _Instance) -> None:
        inst.seq += 1
        self.repo.append_event(inst.id, {
            "seq": inst.seq, "ts": inst.created_at, "type": "instance_submitted",
            "owner": inst.owner, "definition": ar.definition_to_json(inst.defn),
        })

    def _resolve_repo_executables(self, defn: WorkflowDefinition) -> WorkflowDefinition:
        """Inline repo-referenced executables at submit time."""
        from .model import ExecutableRef, set_config_path

        for name, cfg in list(defn.configs.items()):
            ref = cfg.executable_ref
            if ref.kind != "repo":
                continue
            _, data = self.repo.get_item(ref.item_id)
            item = ar.import_archive(data)
            files = getattr(item, "files", None) or getattr(getattr(item, "definition", None), "files", {})
            script = files.get("executable") if files else None
            if script is None:
                raise NotFound(f"repo item {ref.item_id!r} bundles no 'executable' file", node=name)
            defn = set_config_path(defn, f"{name}.executable_ref", ExecutableRef(
                kind="inline", name="executable", text=script.decode("utf-8"),
                interpreter=ref.interpreter,
            ))
        return defn

    def _create_job(self, inst: _Instance, node: str, coord: tuple[int, ...]) -> JobInstance:
        job_id = f"{inst.id}.j{inst.next_job_n}"
        inst.next_job_n += 1
        job = JobInstance(id=job_id, node=node, coord=coord)
        inst.jobs[(node, coord)] = job
        inst.jobs_by_id[job_id] = job
        self._append(inst, {"type": "job_created", "job_id": job_id, "node": node, "coord": list(coord)})
        return job

    def refresh_status(self, instance_id: str) -> str:
        inst = self._get(instance_id)
        with inst.lock:
            return inst.status()

    def abort(self, instance_id: str) -> None:
        inst = self._get(instance_id)
        with inst.lock:
            if inst.status() in ("finished", "error", "aborted"):
                raise AlreadyTerminal(f"instance {instance_id!r} already terminal")
            inst.abort_requested = True
            self._append(inst, {"type": "abort_requested"})
            for job in inst.sorted_jobs():
                if job.state in (SUBMITTED, RUNNING) and job.handle is not None:
                    try:
                        self.bridge.cancel(job.handle)
                    except (AlreadyTerminal, UnknownHandle):
                        pass
                if not job.terminal:
                    self._emit_transition(inst, job, ABORTED)
                job.handle = None

    def resubmit_failed(self, instance_id: str, job_id: str) -> int:
        inst = self._get(instance_id)
        with inst.lock:
            job = inst.jobs_by_id.get(job_id)
            if job is None:
                raise UnknownJob(f"no job {job_id!r}", job=job_id)
            if job.state != ERROR:
                raise NotInErrorState(f"job {job_id!r} is {job.state}", job=job_id)
            if job.attempt >= self.attempt_cap:
                raise AttemptCapExceeded(f"job {job_id!r} reached the attempt cap", cap=self.attempt_cap)
            job.attempt += 1
            self._emit_transition(inst, job, READY, detail={"resubmit": True})
            return job.attempt

    # -- the scheduler pass -----------------------------------------------------------

    def tick(self, instance_id: str) -> list[Transition]:
        inst = self._get(instance_id)
        with inst.lock:
            if inst.status() in ("finished", "error", "aborted"):
                return []
            transitions: list[Transition] = []
            self.bridge.step_all(self.sim_step)
            self._poll_phase(inst, transitions)
            self._expansion_phase(inst, transitions)
            self._readiness_phase(inst, transitions)
            self._dispatch_phase(inst, transitions)
            return transitions

    def _poll_phase(self, inst: _Instance, out: list) -> None:
        for job in inst.sorted_jobs():
            if job.state not in (SUBMITTED, RUNNING):
                continue
            if job.handle is None:
                self._capture_streams(inst, job)
                self._emit_transition(inst, job, ERROR,
                                      detail={"reason": "handle_lost", "exit_code": -1}, out=out)
                continue
            try:
                result = self.bridge.poll(job.handle)
            except UnknownHandle:
                self._capture_streams(inst, job)
                self._emit_transition(inst, job, ERROR,
                                      detail={"reason": "handle_lost", "exit_code": -1}, out=out)
                job.handle = None
                continue
            if result.status == "queued":
                continue
            if result.status == "running":
                if job.state == SUBMITTED:
                    self._emit_transition(inst, job, RUNNING, out=out)
                continue
            # terminal poll: the handle is consumed
            if job.state == SUBMITTED:
                self._emit_transition(inst, job, RUNNING, out=out)
            job.handle = None
            if result.status == "done" and result.exit_code == 0:
                try:
                    self._stage_outputs(inst, job)
                    self._emit_transition(inst, job, FINISHED, detail={"exit_code": 0}, out=out)
                except MissingDeclaredOutput as exc:
                    self._emit_transition(inst, job, ERROR,
                                          detail={"reason": str(exc), "exit_code": 0}, out=out)
            else:
                self._capture_streams(inst, job)
                exit_code = result.exit_code if result.exit_code is not None else -1
                reason = result.reason or f"exit {exit_code}"
                self._emit_transition(inst, job, ERROR,
                                      detail={"reason": reason, "exit_code": exit_code}, out=out)

    def _expansion_phase(self, inst: _Instance, out: list) -> None:
        info = inst.info
        for node in info.topo:
            if info.axis_len[node] == 0:
                continue
            for prefix in self._known_prefixes(inst, node):
                self._expand_prefix(inst, node, prefix, out)

    def _known_prefixes(self, inst: _Instance, node: str) -> list[tuple[int, ...]]:
        info = inst.info
        ilen = info.inherited_len[node]
        if ilen == 0:
            return [()]
        anchors = [e.src_node for e in info.graph.in_edges(node)
                   if info.edge_kind[(node, e.dst_port)] != "collector"
                   and info.axis_len[e.src_node] == ilen]
        prefixes: Optional[set[tuple[int, ...]]] = None
        for anchor in sorted(set(anchors)):
            coords = {j.coord for j in inst.node_jobs(anchor)}
            prefixes = coords if prefixes is None else prefixes & coords
        return sorted(prefixes or ())

    def _expand_prefix(self, inst: _Instance, node: str, prefix: tuple[int, ...], out: list) -> None:
        info = inst.info
        gen_ports = info.gen_ports[node]
        if not gen_ports:
            if (node, prefix) not in inst.jobs:
                self._create_job(inst, node, prefix)
            return
        manifests = {}
        for port in gen_ports:
            e = info.in_edge[node][port]
            pcoord = prefix[: info.axis_len[e.src_node]]
            manifest = inst.manifests.get((e.src_node, pcoord, e.src_port))
            if manifest is None:
                return  # producer has not staged this axis yet
            manifests[port] = manifest
        mode = inst.defn.configs[node].sweep_mode
        try:
            plan = plan_sweep(info.nodes[node], manifests, mode, expected_ports=gen_ports)
        except Exception as exc:
            if inst.expansion_error is None:
                inst.expansion_error = f"{node}: {exc}"
                self._append(inst, {"type": "expansion_error", "node": node, "reason": str(exc)})
            return
        created = 0
        for own in plan.instance_coords:
            coord = prefix + own
            if (node, coord) not in inst.jobs:
                self._create_job(inst, node, coord)
                created += 1
        if created:
            self._append(inst, {
                "type": "sweep_expanded", "node": node, "prefix": list(prefix),
                "count": created, "mode": mode.value,
            })

    def _readiness_phase(self, inst: _Instance, out: list) -> None:
        final_memo: dict[str, bool] = {}
        for job in inst.sorted_jobs():
            if job.state == INIT and self._inputs_available(inst, job, final_memo):
                self._emit_transition(inst, job, READY, out=out)

    def _set_final(self, inst: _Instance, node: str, memo: dict[str, bool]) -> bool:
        """True when no more instances of ``node`` can appear and all are done."""
        if node in memo:
            return memo[node]
        memo[node] = False  # break cycles defensively; DAG makes this moot
        info = inst.info
        for src in sorted(info.producers[node]):
            if not self._set_final(inst, src, memo):
                return False
        jobs = inst.node_jobs(node)
        ok = bool(jobs) and all(j.terminal for j in jobs)
        memo[node] = ok
        return ok

    def _inputs_available(self, inst: _Instance, job: JobInstance, memo: dict[str, bool]) -> bool:
        info = inst.info
        node = info.nodes[job.node]
        ilen = info.inherited_len[job.node]
        gen_ports = info.gen_ports[job.node]
        for port in node.input_ports:
            e = info.in_edge[job.node].get(port.name)
            if e is None:
                continue  # file/literal binding, staged at dispatch
            kind = info.edge_kind[(job.node, port.name)]
            src_len = info.axis_len[e.src_node]
            if kind == "collector":
                if not self._set_final(inst, e.src_node, memo):
                    return False
                src_jobs = inst.node_jobs(e.src_node)
                if not all(j.state == FINISHED for j in src_jobs):
                    return False
                for j in src_jobs:
                    if (e.src_node, j.coord, e.src_port) not in inst.artifacts:
                        return False
            elif kind == "generator":
                k = gen_ports.index(port.name)
                item_index = job.coord[ilen + k]
                pcoord = job.coord[:src_len]
                manifest = inst.manifests.get((e.src_node, pcoord, e.src_port))
                if manifest is None or item_index >= manifest.count:
                    return False
                item = manifest.item_names[item_index]
                if (e.src_node, pcoord, item) not in inst.artifacts:
                    return False
            else:
                pcoord = job.coord[:src_len]
                if (e.src_node, pcoord, e.src_port) not in inst.artifacts:
                    return False
        return True

    def _dispatch_phase(self, inst: _Instance, out: list) -> None:
        from .errors import BackendDown, NoMatchingBackend, QueueFull

        for job in inst.sorted_jobs():
            if job.state != READY:
                continue
            cfg = inst.defn.configs[job.node]
            try:
                backend = self.bridge.select(cfg.backend_binding)
            except (NoMatchingBackend, BackendDown):
                continue  # retried next tick
            sandbox = self._sandbox_dir(inst, job)
            sandbox.mkdir(parents=True, exist_ok=True)
            input_hashes = self._stage_inputs(inst, job, sandbox)
            argv = self._build_argv(inst, job, sandbox)
            request = DispatchRequest(
                sandbox=sandbox,
                argv=tuple(argv),
                runtime_hint=cfg.resource_request.runtime_hint,
                wall_limit=cfg.resource_request.wall_limit,
                label=job.id,
            )
            try:
                handle = backend.dispatch(request)
            except QueueFull:
                continue
            job.handle = handle
            job.backend = backend.descriptor.id
            self._emit_transition(inst, job, SUBMITTED, detail={
                "backend": backend.descriptor.id,
                "ticket": handle.ticket,
                "inputs": input_hashes,
            }, out=out)

    def _sandbox_dir(self, inst: _Instance, job: JobInstance) -> Path:
        jkey = job.id.rsplit(".", 1)[1]
        return self.repo.sandbox_root(inst.id) / f"{jkey}_a{job.attempt}"

    # -- staging -----------------------------------------------------------------

    def _stage_inputs(self, inst: _Instance, job: JobInstance, sandbox: Path) -> dict[str, str]:
        """Write every bound input into the sandbox; returns edge-input hashes."""
        info = inst.info
        node = info.nodes[job.node]
        cfg = inst.defn.configs[job.node]
        ilen = info.inherited_len[job.node]
        gen_ports = info.gen_ports[job.node]
        edge_hashes: dict[str, str] = {}
        for port in sorted(node.input_ports, key=lambda p: p.index):
            binding = cfg.input_bindings[port.name]
            e = info.in_edge[job.node].get(port.name)
            if binding.kind == "literal":
                data = (binding.value or "").encode("utf-8")
                self.repo.put_blob(data)
                (sandbox / port.name).write_bytes(data)
            elif binding.kind == "file":
                data = inst.defn.files[binding.file_name]
                self.repo.put_blob(data)
                (sandbox / port.name).write_bytes(data)
            else:
                kind = info.edge_kind[(job.node, port.name)]
                src_len = info.axis_len[e.src_node]
                if kind == "generator":
                    k = gen_ports.index(port.name)
                    i = job.coord[ilen + k]
                    pcoord = job.coord[:src_len]
                    item = inst.manifests[(e.src_node, pcoord, e.src_port)].item_names[i]
                    ref = inst.artifacts[(e.src_node, pcoord, item)]
                    (sandbox / f"{port.name}_{i}").write_bytes(self.repo.get_blob(ref.hash))
                    edge_hashes[port.name] = ref.hash
                elif kind == "collector":
                    src_jobs = sorted(inst.node_jobs(e.src_node), key=lambda j: j.coord)
                    items = []
                    hashes = []
                    for k, sjob in enumerate(src_jobs):
                        ref = inst.artifacts[(e.src_node, sjob.coord, e.src_port)]
                        name = f"{port.name}_{k}"
                        (sandbox / name).write_bytes(self.repo.get_blob(ref.hash))
                        items.append(name)
                        hashes.append(ref.hash)
                    manifest = {"count": len(items), "items": items}
                    (sandbox / manifest_file_name(port.name)).write_text(
                        json.dumps(manifest, sort_keys=True))
                    edge_hashes[port.name] = ",".join(hashes)
                else:
                    pcoord = job.coord[:src_len]
                    ref = inst.artifacts[(e.src_node, pcoord, e.src_port)]
                    (sandbox / port.name).write_bytes(self.repo.get_blob(ref.hash))
                    edge_hashes[port.name] = ref.hash
        return edge_hashes

    def _build_argv(self, inst: _Instance, job: JobInstance, sandbox: Path) -> list[str]:
        import sys

        info = inst.info
        node = info.nodes[job.node]
        cfg = inst.defn.configs[job.node]
        ilen = info.inherited_len[job.node]
        gen_ports = info.gen_ports[job.node]

        staged: dict[str, str] = {}
        for port in node.input_ports:
            e = info.in_edge[job.node].get(port.name)
            kind = info.edge_kind.get((job.node, port.name)) if e else None
            if kind == "generator":
                staged[port.name] = f"{port.name}_{job.coord[ilen + gen_ports.index(port.name)]}"
            elif kind == "collector":
                staged[port.name] = manifest_file_name(port.name)
            else:
                staged[port.name] = port.name
        for port in node.output_ports:
            staged[port.name] = port.name

        def substitute(arg: str) -> str:
            for name, value in staged.items():
                arg = arg.replace("@{%s}" % name, value)
            return arg

        args = [substitute(a) for a in cfg.arguments]
        ref = cfg.executable_ref
        if ref.kind == "command":
            return [ref.command, *args]
        # inline script staged into the sandbox
        (sandbox / ref.name).write_text(ref.text)
        interpreter = ref.interpreter
        if interpreter in ("python", "python3"):
            interpreter = sys.executable
        elif interpreter == "sh":
            interpreter = "/bin/sh"
        return [interpreter, ref.name, *args]

    def _capture_streams(self, inst: _Instance, job: JobInstance) -> None:
        sandbox = self._sandbox_dir(inst, job)
        for fname, stream in ((STDOUT, "stdout"), (STDERR, "stderr")):
            path = sandbox / fname
            data = path.read_bytes() if path.exists() else b""
            self._record_artifact(inst, job, stream, data)

    def _record_artifact(self, inst: _Instance, job: JobInstance, name: str, data: bytes) -> ArtifactRef:
        digest = self.repo.put_blob(data)
        ref = ArtifactRef(
            instance_id=inst.id, job_id=job.id, name=name,
            hash=digest, size=len(data), attempt=job.attempt,
        )
        inst.artifacts[(job.node, job.coord, name)] = ref
        job.artifacts_by_attempt.setdefault(job.attempt, {})[name] = ref
        if name == "stdout":
            job.stdout_ref = ref
        elif name == "stderr":
            job.stderr_ref = ref
        self._append(inst, {
            "type": "artifact_staged", "job_id": job.id, "node": job.node,
            "coord": list(job.coord), "name": name, "hash": digest,
            "size": len(data), "attempt": job.attempt,
        })
        return ref

    def _stage_outputs(self, inst: _Instance, job: JobInstance) -> list[ArtifactRef]:
        """Collect every declared output (and the reserved streams) as
        content-addressed artifacts; generator ports also yield a manifest."""
        info = inst.info
        node = info.nodes[job.node]
        sandbox = self._sandbox_dir(inst, job)
        self._capture_streams(inst, job)
        refs: list[ArtifactRef] = []
        for port in sorted(node.output_ports, key=lambda p: p.index):
            if port.kind is PortKind.GENERATOR:
                refs.extend(self._stage_generator_port(inst, job, port.name, sandbox))
            else:
                path = sandbox / port.name
                if not path.exists():
                    raise MissingDeclaredOutput(
                        f"declared output {port.name!r} missing from sandbox",
                        node=job.node, port=port.name)
                refs.append(self._record_artifact(inst, job, port.name, path.read_bytes()))
        return refs

    def _stage_generator_port(self, inst: _Instance, job: JobInstance, port: str, sandbox: Path) -> list[ArtifactRef]:
        manifest_path = sandbox / manifest_file_name(port)
        if manifest_path.exists():
            try:
                doc = json.loads(manifest_path.read_text())
                manifest = GeneratorManifest.from_json(job.node, port, doc)
            except (ValueError, KeyError) as exc:
                raise MissingDeclaredOutput(f"generator manifest for {port!r} unreadable: {exc}",
                                            node=job.node, port=port)
        else:
            items = []
            while (sandbox / f"{port}_{len(items)}").exists():
                items.append(f"{port}_{len(items)}")
            if not items:
                raise MissingDeclaredOutput(f"generator port {port!r} produced no items",
                                            node=job.node, port=port)
            manifest = GeneratorManifest(node=job.node, port=port, count=len(items), item_names=tuple(items))
        refs = []
        for item in manifest.item_names:
            path = sandbox / item
            if not path.exists():
                raise MissingDeclaredOutput(
                    f"generator item {item!r} listed in manifest but missing",
                    node=job.node, port=port)
            refs.append(self._record_artifact(inst, job, item, path.read_bytes()))
        inst.manifests[(job.node, job.coord, port)] = manifest
        self._append(inst, {
            "type": "generator_manifest", "job_id": job.id, "node": job.node,
            "coord": list(job.coord), "port": port, "count": manifest.count,
            "items": list(manifest.item_names),
        })
        return refs

    # -- snapshots for the service layer ---------------------------------------------

    def instance_snapshot(self, instance_id: str) -> dict:
        inst = self._get(instance_id)
        with inst.lock:
            return {
                "id": inst.id,
                "owner": inst.owner,
                "status": inst.status(),
                "seq": inst.seq,
                "created_at": inst.created_at,
                "workflow": inst.defn.graph.name,
                "jobs": [
                    {
                        "id": j.id, "node": j.node, "coord": list(j.coord),
                        "state": j.state, "attempt": j.attempt,
                        "backend": j.backend, "exit_code": j.exit_code,
                    }
                    for j in inst.sorted_jobs()
                ],
            }

    def job_snapshot(self, instance_id: str, job_id: str) -> dict:
        inst = self._get(instance_id)
        with inst.lock:
            job = inst.jobs_by_id.get(job_id)
            if job is None:
                raise UnknownJob(f"no job {job_id!r}", job=job_id)
            artifacts = {
                name: {"hash": ref.hash, "size": ref.size}
                for name, ref in sorted(job.artifacts_by_attempt.get(job.attempt, {}).items())
            }
            return {
                "id": job.id, "node": job.node, "coord": list(job.coord),
                "state": job.state, "attempt": job.attempt, "backend": job.backend,
                "exit_code": job.exit_code, "artifacts": artifacts,
            }

    def artifact_bytes(self, instance_id: str, job_id: str, name: str) -> bytes:
        inst = self._get(instance_id)
        with inst.lock:
            job = inst.jobs_by_id.get(job_id)
            if job is None:
                raise UnknownJob(f"no job {job_id!r}", job=job_id)
            ref = job.artifacts_by_attempt.get(job.attempt, {}).get(name)
            if ref is None:
                raise NotFound(f"job {job_id!r} has no artifact {name!r}", name=name)
        return self.repo.get_blob(ref.hash)

    def stream_bytes(self, instance_id: str, job_id: str, stream: str) -> bytes:
        inst = self._get(instance_id)
        with inst.lock:
            job = inst.jobs_by_id.get(job_id)
            if job is None:
                raise UnknownJob(f"no job {job_id!r}", job=job_id)
            ref = job.stdout_ref if stream == "stdout" else job.stderr_ref
            if ref is None:
                raise NotFound(f"no {stream} captured for {job_id!r}", job=job_id)
        return self.repo.get_blob(ref.hash)

    def artifact_map(self, instance_id: str) -> dict[tuple[str, tuple[int, ...], str], str]:
        """(node, coord, name) -> content hash, for determinism checks."""
        inst = self._get(instance_id)
        with inst.lock:
            return {key: ref.hash for key, ref in sorted(inst.artifacts.items())}

    def run_to_quiescence(self, instance_id: str, max_ticks: int = 10_000, sleep: float = 0.0) -> str:
        """Tick until the instance status is terminal; returns the status."""
        for _ in range(max_ticks):
            status = self.refresh_status(instance_id)
            if status in ("finished", "error", "aborted"):
                return status
            self.tick(instance_id)
            if sleep:
                time.sleep(sleep)
        return self.refresh_status(instance_id)
