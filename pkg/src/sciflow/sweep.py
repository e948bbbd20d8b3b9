"""Parameter-sweep fan-out: generator manifests, instance grids, collection.

A generator output port produces ``count`` files named ``<base>_0 ...
<base>_{count-1}`` plus a ``<port>.manifest.json`` beside them. Consumers of
generator-fed ports fan out into one job instance per coordinate tuple,
enumerated row-major over axes sorted by port index (cross product by
default, index-matched dot on request). A collector input port gathers every
instance of the upstream plan back into a single invocation.
"""

from __future__ import annotations

import itertools
import json
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

from .errors import (
    CoordOutOfRange,
    DotCardinalityMismatch,
    MissingManifest,
    NotACollectorPort,
    ZeroCount,
)
from .model import NodeSpec, PortKind, PortSpec, SweepMode

_SUFFIX_RE = re.compile(r"_(\d+)$")


@dataclass(frozen=True)
class GeneratorManifest:
    """Inventory of one generator port's output, written by the producing job."""

    node: str
    port: str
    count: int
    item_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "item_names", tuple(self.item_names))
        if self.count < 1:
            raise ZeroCount(f"generator {self.node}.{self.port} produced no items")
        if len(self.item_names) != self.count:
            raise ValueError(f"manifest count {self.count} != {len(self.item_names)} item names")
        for i, name in enumerate(self.item_names):
            m = _SUFFIX_RE.search(name)
            if not m or int(m.group(1)) != i:
                raise ValueError(f"item {name!r} violates the zero-based _<i> suffix convention")

    @classmethod
    def for_port(cls, node: str, port: str, count: int) -> "GeneratorManifest":
        return cls(node=node, port=port, count=count, item_names=tuple(f"{port}_{i}" for i in range(count)))

    def to_json(self) -> dict:
        return {"count": self.count, "items": list(self.item_names)}

    @classmethod
    def from_json(cls, node: str, port: str, doc: Mapping) -> "GeneratorManifest":
        return cls(node=node, port=port, count=int(doc["count"]), item_names=tuple(doc["items"]))


def manifest_file_name(port: str) -> str:
    return f"{port}.manifest.json"


def dump_manifest(manifest: GeneratorManifest) -> bytes:
    return json.dumps(manifest.to_json(), sort_keys=True).encode("utf-8")


@dataclass(frozen=True)
class SweepPlan:
    """The instance grid for one node, in a fixed enumeration order."""

    node: str
    mode: SweepMode
    axes: tuple[tuple[str, int], ...]  # (consumer port, count), sorted by port index
    instance_coords: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if len(set(self.instance_coords)) != len(self.instance_coords):
            raise ValueError("instance coordinates must be unique")


def plan_sweep(
    node: NodeSpec,
    manifests: Mapping[str, GeneratorManifest],
    mode: SweepMode = SweepMode.CROSS,
    expected_ports: Optional[Iterable[str]] = None,
) -> SweepPlan:
    """Expand generator manifests into the node's instance grid.

    ``manifests`` is keyed by the consumer's generator-fed input port name;
    ``expected_ports`` (when given) lists every port that must have one.
    A node with no generator-fed inputs yields exactly one instance with the
    empty coordinate.
    """
    expected = set(expected_ports) if expected_ports is not None else set(manifests)
    for port in expected:
        if node.input_port(port) is None:
            raise MissingManifest(f"node {node.name!r} has no input port {port!r}", port=port)
        if port not in manifests:
            raise MissingManifest(f"no manifest for generator-fed port {port!r}", node=node.name, port=port)

    fed = sorted(expected, key=lambda p: node.input_port(p).index)
    axes = tuple((p, manifests[p].count) for p in fed)
    for port, count in axes:
        if count < 1:
            raise ZeroCount(f"axis {port!r} has zero items", port=port)

    if not axes:
        coords: tuple[tuple[int, ...], ...] = ((),)
    elif mode is SweepMode.CROSS:
        coords = tuple(itertools.product(*(range(c) for _, c in axes)))
    else:
        counts = {c for _, c in axes}
        if len(counts) > 1:
            raise DotCardinalityMismatch(
                f"dot pairing needs equal counts, got {sorted(counts)}",
                node=node.name,
                axes=list(axes),
            )
        n = counts.pop()
        coords = tuple(tuple(i for _ in axes) for i in range(n))

    return SweepPlan(node=node.name, mode=mode, axes=axes, instance_coords=coords)


def resolve_instance_inputs(
    plan: SweepPlan,
    coord: tuple[int, ...],
    bindings: Mapping[str, str],
) -> dict[str, str]:
    """Concrete input file names for one instance.

    A generator-fed port at axis position k resolves to ``<bound name>_<i>``
    with i = coord[k]; every other binding passes through unchanged.
    """
    if tuple(coord) not in plan.instance_coords:
        raise CoordOutOfRange(f"coordinate {tuple(coord)} not in plan for {plan.node!r}", coord=tuple(coord))
    resolved = dict(bindings)
    for k, (port, _count) in enumerate(plan.axes):
        base = bindings.get(port, port)
        resolved[port] = f"{base}_{coord[k]}"
    return resolved


@dataclass(frozen=True)
class CollectionSpec:
    """What a collector port waits for: all upstream instances, in plan order."""

    expected: int
    ordering: tuple[tuple[int, ...], ...]


def plan_collection(consumer_port: PortSpec, upstream_plan: SweepPlan) -> CollectionSpec:
    if consumer_port.kind is not PortKind.COLLECTOR:
        raise NotACollectorPort(f"port {consumer_port.name!r} is kind {consumer_port.kind.value}")
    return CollectionSpec(expected=len(upstream_plan.instance_coords), ordering=upstream_plan.instance_coords)
