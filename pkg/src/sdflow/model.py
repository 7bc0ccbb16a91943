"""Layer-graph intermediate representation of a 3D CNN model.

Parses the JSON model description into a validated DAG of layer
descriptors, provides a deterministic topological order, and counts the
model workload in giga multiply-accumulate operations.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from enum import Enum

from .errors import CycleError, DanglingArc, SchemaError, ShapeMismatch


class Kind(str, Enum):
    CONV = "Conv3D"
    POOL = "Pool3D"
    ACT = "Activation"
    EW = "ElementWise"
    GAP = "GlobalAvgPool"


class ActType(str, Enum):
    RELU = "Relu"
    SIGMOID = "Sigmoid"
    SWISH = "Swish"


class EwType(str, Enum):
    ADD = "Add"
    MUL = "Mul"


class EwMode(str, Enum):
    NORMAL = "Normal"
    BROADCAST = "Broadcast"


@dataclass(frozen=True)
class TensorShape:
    """Feature-map shape, channels first; depth is the temporal axis."""

    channels: int
    height: int
    width: int
    depth: int

    def __post_init__(self):
        for name, v in (("channels", self.channels), ("height", self.height),
                        ("width", self.width), ("depth", self.depth)):
            if not isinstance(v, int) or v < 1:
                raise ShapeMismatch(f"shape dimension {name}={v} must be >= 1")

    @property
    def spatial_elems(self) -> int:
        return self.height * self.width * self.depth

    @property
    def elems(self) -> int:
        return self.channels * self.spatial_elems

    def as_list(self) -> list[int]:
        return [self.channels, self.height, self.width, self.depth]


def conv_axis_out(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def window_output_shape(shape: TensorShape, out_channels: int,
                        kernel: tuple[int, int, int],
                        stride: tuple[int, int, int],
                        padding: tuple[int, int, int]) -> TensorShape:
    dims = [conv_axis_out(s, k, st, p) for s, k, st, p in
            zip((shape.height, shape.width, shape.depth), kernel, stride, padding)]
    if any(d < 1 for d in dims):
        raise ShapeMismatch(
            f"kernel {kernel} with stride {stride}, padding {padding} does not fit "
            f"a {shape.height}x{shape.width}x{shape.depth} map")
    return TensorShape(out_channels, dims[0], dims[1], dims[2])


@dataclass(frozen=True)
class LayerDescriptor:
    """One DAG node: layer kind plus its structural configuration."""

    id: str
    kind: Kind
    input_shapes: tuple[TensorShape, ...]
    output_shape: TensorShape
    kernel: tuple[int, int, int] = (1, 1, 1)
    stride: tuple[int, int, int] = (1, 1, 1)
    padding: tuple[int, int, int] = (0, 0, 0)
    groups: int = 1
    act_type: ActType | None = None
    ew_type: EwType | None = None
    ew_mode: EwMode | None = None

    def __post_init__(self):
        if not self.input_shapes:
            raise ShapeMismatch(f"layer {self.id}: no input shape")
        _validate_layer(self)

    @property
    def in_channels(self) -> int:
        return self.input_shapes[0].channels

    @property
    def out_channels(self) -> int:
        return self.output_shape.channels

    @property
    def kernel_volume(self) -> int:
        return self.kernel[0] * self.kernel[1] * self.kernel[2]

    @property
    def is_depthwise(self) -> bool:
        return self.kind == Kind.CONV and self.groups == self.in_channels

    @property
    def is_pointwise(self) -> bool:
        return self.kind == Kind.CONV and self.kernel == (1, 1, 1)

    @property
    def broadcast_port(self) -> int | None:
        """Index of the 1x1x1-shaped secondary input of a Broadcast join."""
        if self.kind != Kind.EW or self.ew_mode != EwMode.BROADCAST:
            return None
        for i, s in enumerate(self.input_shapes):
            if s.spatial_elems == 1:
                return i
        return None

    def macs(self) -> int:
        """MAC (or per-element op) count of this layer per inference."""
        if self.kind == Kind.CONV:
            per_out = self.kernel_volume * self.in_channels // self.groups
            return self.output_shape.elems * per_out
        if self.kind == Kind.GAP:
            return self.input_shapes[0].elems
        return self.output_shape.elems


def _validate_layer(layer: LayerDescriptor) -> None:
    kind = layer.kind
    ins = layer.input_shapes
    out = layer.output_shape
    if kind in (Kind.CONV, Kind.POOL):
        expect = window_output_shape(ins[0], out.channels, layer.kernel,
                                     layer.stride, layer.padding)
        if (expect.height, expect.width, expect.depth) != (out.height, out.width, out.depth):
            raise ShapeMismatch(
                f"layer {layer.id}: declared output {out.as_list()} contradicts window "
                f"arithmetic {expect.as_list()}")
        if kind == Kind.POOL and out.channels != ins[0].channels:
            raise ShapeMismatch(f"layer {layer.id}: pooling must preserve channels")
        if kind == Kind.CONV:
            g = layer.groups
            if g < 1 or ins[0].channels % g or out.channels % g:
                raise ShapeMismatch(
                    f"layer {layer.id}: groups {g} must divide channels "
                    f"{ins[0].channels} and filters {out.channels}")
    elif kind == Kind.ACT:
        if layer.act_type is None:
            raise SchemaError(f"layer {layer.id}: Activation requires act_type")
        if ins[0] != out:
            raise ShapeMismatch(f"layer {layer.id}: activation must preserve shape")
    elif kind == Kind.EW:
        if layer.ew_type is None or layer.ew_mode is None:
            raise SchemaError(f"layer {layer.id}: ElementWise requires ew_type and ew_mode")
        if len(ins) != 2:
            raise ShapeMismatch(f"layer {layer.id}: ElementWise takes exactly 2 inputs")
        if layer.ew_mode == EwMode.NORMAL:
            if ins[0] != ins[1]:
                raise ShapeMismatch(f"layer {layer.id}: Normal mode inputs must match")
        else:
            if layer.broadcast_port is None:
                raise ShapeMismatch(
                    f"layer {layer.id}: Broadcast mode needs one Cx1x1x1 input")
            side = ins[layer.broadcast_port]
            main = ins[1 - layer.broadcast_port]
            if side.channels != main.channels:
                raise ShapeMismatch(f"layer {layer.id}: broadcast channels differ")
        primary = ins[0] if layer.broadcast_port != 0 else ins[1]
        if primary != out:
            raise ShapeMismatch(f"layer {layer.id}: output must match primary input")
    elif kind == Kind.GAP:
        want = TensorShape(ins[0].channels, 1, 1, 1)
        if out != want:
            raise ShapeMismatch(f"layer {layer.id}: GAP output must be Cx1x1x1")


@dataclass
class ModelDag:
    """Validated layer DAG. Arcs are (producer id, consumer id) in file order."""

    name: str
    nodes: dict[str, LayerDescriptor]
    arcs: list[tuple[str, str]]
    graph_inputs: list[str] = field(default_factory=list)
    graph_outputs: list[str] = field(default_factory=list)

    def predecessors(self, nid: str) -> list[str]:
        return [p for p, c in self.arcs if c == nid]

    def successors(self, nid: str) -> list[str]:
        return [c for p, c in self.arcs if p == nid]

    def __eq__(self, other):
        if not isinstance(other, ModelDag):
            return NotImplemented
        return (self.name == other.name and self.nodes == other.nodes
                and sorted(self.arcs) == sorted(other.arcs)
                and sorted(self.graph_inputs) == sorted(other.graph_inputs)
                and sorted(self.graph_outputs) == sorted(other.graph_outputs))


def toposort(dag: ModelDag) -> list[str]:
    """Topological order of layer ids, ties broken lexicographically."""
    indeg = {nid: 0 for nid in dag.nodes}
    succ: dict[str, list[str]] = {nid: [] for nid in dag.nodes}
    for p, c in dag.arcs:
        indeg[c] += 1
        succ[p].append(c)
    ready = [nid for nid, d in sorted(indeg.items()) if d == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        nid = heapq.heappop(ready)
        order.append(nid)
        for c in succ[nid]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(ready, c)
    if len(order) != len(dag.nodes):
        stuck = sorted(set(dag.nodes) - set(order))
        raise CycleError(f"layer graph has a cycle through {stuck[:4]}")
    return order


_KIND_FIELDS = {
    Kind.CONV: {"kernel", "stride", "padding", "groups"},
    Kind.POOL: {"kernel", "stride", "padding"},
    Kind.ACT: {"act_type"},
    Kind.EW: {"ew_type", "ew_mode"},
    Kind.GAP: set(),
}


def _as_triple(raw, what, lid) -> tuple[int, int, int]:
    if (not isinstance(raw, list) or len(raw) != 3
            or not all(isinstance(v, int) and v >= 0 for v in raw)):
        raise SchemaError(f"layer {lid}: {what} must be a list of 3 non-negative ints")
    return tuple(raw)  # type: ignore[return-value]


def _as_shape(raw, lid) -> TensorShape:
    if not isinstance(raw, list) or len(raw) != 4 or not all(isinstance(v, int) for v in raw):
        raise SchemaError(f"layer {lid}: shape must be [C, H, W, D]")
    return TensorShape(*raw)


def parse_model(file_contents: str) -> ModelDag:
    """Parse and validate a JSON model description.

    Graph-input layers declare "input_shape" (or "input_shapes" when a
    2-input layer takes more than one external tensor); every other layer
    inherits its input shapes from its "inputs" producers in order.
    """
    try:
        doc = json.loads(file_contents)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"model file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("layers"), list):
        raise SchemaError('model file must be an object with a "layers" list')
    name = doc.get("name", "model")

    raw_layers: dict[str, dict] = {}
    for entry in doc["layers"]:
        if not isinstance(entry, dict) or not isinstance(entry.get("id"), str):
            raise SchemaError('every layer needs a string "id"')
        lid = entry["id"]
        if lid in raw_layers:
            raise SchemaError(f"duplicate layer id {lid}")
        raw_layers[lid] = entry

    arcs: list[tuple[str, str]] = []
    for lid, entry in raw_layers.items():
        for src in entry.get("inputs", []):
            if src not in raw_layers:
                raise DanglingArc(f"layer {lid} consumes unknown layer {src}")
            arcs.append((src, lid))

    # Resolve shapes in dependency order; toposort also rejects cycles.
    skeleton = ModelDag(name, {lid: None for lid in raw_layers}, arcs)  # type: ignore[arg-type]
    indeg = {nid: 0 for nid in raw_layers}
    succ: dict[str, list[str]] = {nid: [] for nid in raw_layers}
    for p, c in arcs:
        indeg[c] += 1
        succ[p].append(c)
    ready = sorted(nid for nid, d in indeg.items() if d == 0)
    heapq.heapify(ready)
    resolved: dict[str, LayerDescriptor] = {}
    order_count = 0
    while ready:
        lid = heapq.heappop(ready)
        order_count += 1
        resolved[lid] = _build_layer(raw_layers[lid], resolved)
        for c in succ[lid]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(ready, c)
    if order_count != len(raw_layers):
        raise CycleError("model layer list contains a cycle")

    nodes = {lid: resolved[lid] for lid in raw_layers}  # keep file order
    inputs = [lid for lid in nodes if not skeleton.predecessors(lid)]
    outputs = [lid for lid in nodes if not skeleton.successors(lid)]
    dag = ModelDag(name, nodes, arcs, inputs, outputs)
    _validate_dag(dag)
    return dag


def _build_layer(entry: dict, resolved: dict[str, LayerDescriptor]) -> LayerDescriptor:
    lid = entry["id"]
    try:
        kind = Kind(entry.get("kind"))
    except ValueError:
        raise SchemaError(f"layer {lid}: unknown kind {entry.get('kind')!r}") from None

    srcs = entry.get("inputs", [])
    if srcs:
        in_shapes = tuple(resolved[s].output_shape for s in srcs)
    elif "input_shapes" in entry:
        in_shapes = tuple(_as_shape(s, lid) for s in entry["input_shapes"])
    elif "input_shape" in entry:
        in_shapes = (_as_shape(entry["input_shape"], lid),)
    else:
        raise SchemaError(f"layer {lid}: graph input layers must declare input_shape")

    want_arity = 2 if kind == Kind.EW else 1
    if len(in_shapes) != want_arity:
        raise SchemaError(f"layer {lid}: {kind.value} takes {want_arity} input(s), "
                          f"got {len(in_shapes)}")

    out_shape = _as_shape(entry.get("output_shape"), lid)
    kw: dict = {}
    allowed = _KIND_FIELDS[kind]
    if "kernel" in allowed:
        kw["kernel"] = _as_triple(entry.get("kernel", [1, 1, 1]), "kernel", lid)
        kw["stride"] = _as_triple(entry.get("stride", [1, 1, 1]), "stride", lid)
        kw["padding"] = _as_triple(entry.get("padding", [0, 0, 0]), "padding", lid)
        if any(v < 1 for v in kw["kernel"]) or any(v < 1 for v in kw["stride"]):
            raise SchemaError(f"layer {lid}: kernel and stride entries must be >= 1")
    if "groups" in allowed:
        g = entry.get("groups", 1)
        if not isinstance(g, int) or g < 1:
            raise SchemaError(f"layer {lid}: groups must be a positive int")
        kw["groups"] = g
    try:
        if "act_type" in allowed:
            kw["act_type"] = ActType(entry.get("act_type", "Relu"))
        if "ew_type" in allowed:
            kw["ew_type"] = EwType(entry.get("ew_type"))
            kw["ew_mode"] = EwMode(entry.get("ew_mode", "Normal"))
    except ValueError as exc:
        raise SchemaError(f"layer {lid}: {exc}") from None

    return LayerDescriptor(id=lid, kind=kind, input_shapes=in_shapes,
                           output_shape=out_shape, **kw)


def _validate_dag(dag: ModelDag) -> None:
    toposort(dag)
    for lid, layer in dag.nodes.items():
        preds = dag.predecessors(lid)
        if preds:
            shapes = tuple(dag.nodes[p].output_shape for p in preds)
            if shapes != layer.input_shapes:
                raise ShapeMismatch(f"layer {lid}: input shapes out of sync with arcs")
    if not dag.graph_inputs or not dag.graph_outputs:
        raise SchemaError("model must have at least one graph input and output")


def serialize_model(dag: ModelDag) -> str:
    """Inverse of parse_model: parse_model(serialize_model(d)) == d."""
    layers = []
    for lid, layer in dag.nodes.items():
        entry: dict = {"id": lid, "kind": layer.kind.value}
        preds = dag.predecessors(lid)
        if preds:
            entry["inputs"] = preds
        elif len(layer.input_shapes) == 1:
            entry["input_shape"] = layer.input_shapes[0].as_list()
        else:
            entry["input_shapes"] = [s.as_list() for s in layer.input_shapes]
        entry["output_shape"] = layer.output_shape.as_list()
        allowed = _KIND_FIELDS[layer.kind]
        if "kernel" in allowed:
            entry["kernel"] = list(layer.kernel)
            entry["stride"] = list(layer.stride)
            entry["padding"] = list(layer.padding)
        if "groups" in allowed:
            entry["groups"] = layer.groups
        if "act_type" in allowed:
            entry["act_type"] = layer.act_type.value
        if "ew_type" in allowed:
            entry["ew_type"] = layer.ew_type.value
            entry["ew_mode"] = layer.ew_mode.value
        layers.append(entry)
    return json.dumps({"name": dag.name, "layers": layers}, indent=2)


def model_workload(dag: ModelDag) -> float:
    """Total model workload in GOps (MAC count for convolutions, one op
    per produced element elsewhere, per consumed element for GAP)."""
    return sum(layer.macs() for layer in dag.nodes.values()) / 1e9
