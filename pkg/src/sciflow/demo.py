"""The bundled MD post-processing demo workflow.

A parameter-file generator fans a toy Lennard-Jones tension run out over
three strain rates; each trajectory is converted and then analyzed four
ways (RDF, diffraction, stress-strain, coordination), mirroring the classic
simulate / convert / analyze gateway pipeline on mixed backends.
"""

from __future__ import annotations

import json
from typing import Sequence

from .bridge import BackendDescriptor, BridgeRegistry
from .model import (
    BackendSelector,
    Edge,
    ExecutableRef,
    Graph,
    InputBinding,
    JobConfig,
    NodeSpec,
    PortKind,
    PortSpec,
    ResourceRequest,
    WorkflowDefinition,
    configure_workflow,
)

ANALYSIS_PORTS = ("rdfcsv", "xrdcsv", "sstable", "coordcsv")
TRAJECTORY_PORT = "traj"

_GEN_SCRIPT = """\
import json

rates = {rates}
base = {base}
items = []
for i, rate in enumerate(rates):
    cfg = dict(base)
    cfg["strain_rate"] = rate
    cfg["seed"] = 1000 + i
    name = f"params_{{i}}"
    with open(name, "w") as fh:
        json.dump(cfg, fh, sort_keys=True)
    items.append(name)
with open("params.manifest.json", "w") as fh:
    json.dump({{"count": len(items), "items": items}}, fh, sort_keys=True)
"""


def demo_graph() -> Graph:
    return Graph(
        name="md_tension_demo",
        nodes=(
            NodeSpec("genparams", output_ports=(
                PortSpec("params", 0, PortKind.GENERATOR, cardinality_hint=3),)),
            NodeSpec("ljmd",
                     input_ports=(PortSpec("config", 0),),
                     output_ports=(PortSpec("traj", 0), PortSpec("stressrec", 1))),
            NodeSpec("convert",
                     input_ports=(PortSpec("traj", 0),),
                     output_ports=(PortSpec("xyztraj", 0),)),
            NodeSpec("rdf",
                     input_ports=(PortSpec("xyztraj", 0),),
                     output_ports=(PortSpec("rdfcsv", 0),)),
            NodeSpec("debye",
                     input_ports=(PortSpec("xyztraj", 0),),
                     output_ports=(PortSpec("xrdcsv", 0),)),
            NodeSpec("stress",
                     input_ports=(PortSpec("stressrec", 0),),
                     output_ports=(PortSpec("sstable", 0),)),
            NodeSpec("coord",
                     input_ports=(PortSpec("xyztraj", 0),),
                     output_ports=(PortSpec("coordcsv", 0),)),
        ),
        edges=(
            Edge("genparams", "params", "ljmd", "config"),
            Edge("ljmd", "traj", "convert", "traj"),
            Edge("ljmd", "stressrec", "stress", "stressrec"),
            Edge("convert", "xyztraj", "rdf", "xyztraj"),
            Edge("convert", "xyztraj", "debye", "xyztraj"),
            Edge("convert", "xyztraj", "coord", "xyztraj"),
        ),
    )


def build_demo_definition(
    rates: Sequence[float] = (0.002, 0.005, 0.01),
    steps: int = 600,
    owner: str = "demo",
) -> WorkflowDefinition:
    base_config = {
        "nx": 3, "ny": 3, "nz": 3, "cutoff": 2.0, "dt": 0.005,
        "steps": steps, "sample_every": max(steps // 6, 1), "temperature": 0.02,
    }
    gen_script = _GEN_SCRIPT.format(rates=json.dumps(list(rates)), base=json.dumps(base_config))

    configs = {
        "genparams": JobConfig(
            node="genparams",
            executable_ref=ExecutableRef(kind="inline", name="genparams.py", text=gen_script),
            backend_binding=BackendSelector(tags={"local"}),
            resource_request=ResourceRequest(wall_limit=60, runtime_hint=0.2),
        ),
        "ljmd": JobConfig(
            node="ljmd",
            executable_ref=ExecutableRef(kind="command", command="sciflow-ljmd"),
            arguments=("@{config}", "--out-traj=@{traj}", "--out-stress=@{stressrec}"),
            input_bindings={"config": InputBinding(kind="edge")},
            backend_binding=BackendSelector(tags={"cluster"}),
            resource_request=ResourceRequest(wall_limit=300, runtime_hint=2.0),
        ),
        "convert": JobConfig(
            node="convert",
            executable_ref=ExecutableRef(kind="command", command="sciflow-convert"),
            arguments=("@{traj}", "--to=xyz", "--out=@{xyztraj}"),
            input_bindings={"traj": InputBinding(kind="edge")},
            backend_binding=BackendSelector(tags={"local"}),
            resource_request=ResourceRequest(wall_limit=60, runtime_hint=0.5),
        ),
        "rdf": JobConfig(
            node="rdf",
            executable_ref=ExecutableRef(kind="command", command="sciflow-rdf"),
            arguments=("@{xyztraj}", "--rmax=2.3", "--bins=80", "--out=@{rdfcsv}"),
            input_bindings={"xyztraj": InputBinding(kind="edge")},
            backend_binding=BackendSelector(tags={"grid"}),
            resource_request=ResourceRequest(wall_limit=120, runtime_hint=0.5),
        ),
        "debye": JobConfig(
            node="debye",
            executable_ref=ExecutableRef(kind="command", command="sciflow-debye"),
            arguments=("@{xyztraj}", "--frame=-1", "--qmin=2", "--qmax=14",
                       "--qbins=120", "--out=@{xrdcsv}"),
            input_bindings={"xyztraj": InputBinding(kind="edge")},
            backend_binding=BackendSelector(tags={"grid"}),
            resource_request=ResourceRequest(wall_limit=120, runtime_hint=0.5),
        ),
        "stress": JobConfig(
            node="stress",
            executable_ref=ExecutableRef(kind="command", command="sciflow-stress"),
            arguments=("@{stressrec}", "--drop-fraction=0.3", "--out=@{sstable}"),
            input_bindings={"stressrec": InputBinding(kind="edge")},
            backend_binding=BackendSelector(tags={"local"}),
            resource_request=ResourceRequest(wall_limit=60, runtime_hint=0.3),
        ),
        "coord": JobConfig(
            node="coord",
            executable_ref=ExecutableRef(kind="command", command="sciflow-coord"),
            arguments=("@{xyztraj}", "--rc=1.3", "--out=@{coordcsv}"),
            input_bindings={"xyztraj": InputBinding(kind="edge")},
            backend_binding=BackendSelector(tags={"local"}),
            resource_request=ResourceRequest(wall_limit=60, runtime_hint=0.3),
        ),
    }
    return configure_workflow(demo_graph(), configs, metadata={"owner": owner, "description":
                              "LJ tension sweep with RDF/diffraction/stress/coordination analyses"})


def register_demo_backends(bridge: BridgeRegistry, seed: int = 12345) -> None:
    """Mixed fleet: local executor, simulated cluster, simulated desktop grid."""
    bridge.register_backend(BackendDescriptor(
        id="local0", kind="local", capability_tags=frozenset({"local"}), slots=3))
    bridge.register_backend(BackendDescriptor(
        id="cluster0", kind="cluster_sim", capability_tags=frozenset({"cluster"}),
        slots=2, seed=seed, queue_wait_ms=(0.0, 200.0)))
    bridge.register_backend(BackendDescriptor(
        id="grid0", kind="desktop_grid_sim", capability_tags=frozenset({"grid"}),
        workers=3, seed=seed + 1, replication=2, quorum=2))


def expected_artifact_counts(n_rates: int = 3) -> dict[str, int]:
    counts = {port: n_rates for port in ANALYSIS_PORTS}
    counts[TRAJECTORY_PORT] = n_rates
    return counts
