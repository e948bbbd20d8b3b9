import pytest

from sciflow.bridge import BackendDescriptor, BridgeRegistry
from sciflow.engine import Engine
from sciflow.model import (
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
    configure_workflow,
)
from sciflow.repository import Repository


@pytest.fixture
def repo(tmp_path):
    return Repository(tmp_path / "store")


@pytest.fixture
def bridge():
    reg = BridgeRegistry()
    reg.register_backend(BackendDescriptor(
        id="cluster0", kind="cluster_sim", capability_tags=frozenset({"cluster"}),
        slots=2, seed=7))
    reg.register_backend(BackendDescriptor(
        id="local0", kind="local", capability_tags=frozenset({"local"}), slots=2))
    return reg


@pytest.fixture
def engine(repo, bridge):
    return Engine(repo, bridge)


def sh_config(node, script, inputs=(), tags=frozenset({"cluster"}), sweep_mode=None, hint=0.01):
    """JobConfig running an inline /bin/sh script; edge-bind the given inputs."""
    kwargs = {}
    if sweep_mode is not None:
        kwargs["sweep_mode"] = sweep_mode
    return JobConfig(
        node=node,
        executable_ref=ExecutableRef(kind="inline", name=f"{node}.sh", text=script, interpreter="sh"),
        input_bindings={p: InputBinding(kind="edge") for p in inputs},
        backend_binding=BackendSelector(tags=tags),
        resource_request=ResourceRequest(wall_limit=30, runtime_hint=hint),
        **kwargs,
    )


def chain_graph(n=3):
    """Linear chain n0 -> n1 -> ... with one port each way."""
    nodes = []
    edges = []
    for i in range(n):
        inputs = (PortSpec("inp", 0),) if i > 0 else ()
        nodes.append(NodeSpec(f"n{i}", input_ports=inputs, output_ports=(PortSpec("out", 0),)))
        if i > 0:
            edges.append(Edge(f"n{i-1}", "out", f"n{i}", "inp"))
    return Graph("chain", nodes=tuple(nodes), edges=tuple(edges))


def chain_definition(n=3):
    g = chain_graph(n)
    configs = {}
    for i in range(n):
        if i == 0:
            script = "echo seed > out\n"
            inputs = ()
        else:
            script = "cat inp > out && echo layer >> out\n"
            inputs = ("inp",)
        configs[f"n{i}"] = sh_config(f"n{i}", script, inputs)
    return configure_workflow(g, configs)


def sweep_definition(count=3):
    """Generator fan-out: gen -(generator port)-> work -> gather (collector)."""
    g = Graph("sweepwf", nodes=(
        NodeSpec("gen", output_ports=(PortSpec("items", 0, PortKind.GENERATOR),)),
        NodeSpec("work", input_ports=(PortSpec("item", 0),), output_ports=(PortSpec("out", 0),)),
        NodeSpec("gather", input_ports=(PortSpec("parts", 0, PortKind.COLLECTOR),),
                 output_ports=(PortSpec("total", 0),)),
    ), edges=(
        Edge("gen", "items", "work", "item"),
        Edge("work", "out", "gather", "parts"),
    ))
    gen_script = (
        f"i=0\nwhile [ $i -lt {count} ]; do echo item$i > items_$i; i=$((i+1)); done\n"
    )
    configs = {
        "gen": sh_config("gen", gen_script),
        "work": sh_config("work", 'tr a-z A-Z < "$1" > out\n', inputs=("item",)),
        "gather": sh_config("gather", "cat parts_* > total\n", inputs=("parts",)),
    }
    configs["work"] = JobConfig(
        node="work",
        executable_ref=configs["work"].executable_ref,
        arguments=("@{item}",),
        input_bindings=configs["work"].input_bindings,
        backend_binding=configs["work"].backend_binding,
        resource_request=configs["work"].resource_request,
    )
    return configure_workflow(g, configs)
