"""Synchronous dataflow graph assembly with branch support.

Maps configured blocks plus memory boundary nodes onto the stream (S)
and rate (R) matrices whose signed elementwise product is the topology
matrix. Handles fan-out duplication, element-wise joins, stream-width
adapters, rate equalization at merge points, and merge-buffer sizing.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .blocks import BlockConfig
from .errors import DisconnectedGraph, StreamMismatch
from .model import Kind
from .resources import DeviceSpec

MEM_IN = "in"
MEM_OUT = "out"


@dataclass(frozen=True)
class MemoryNode:
    name: str
    direction: str  # MEM_IN or MEM_OUT
    streams: int
    rate: float  # per stream, elements/cycle, capped at 1
    depth: int = 0


@dataclass(frozen=True)
class Arc:
    producer: str
    consumer: str
    consumer_port: int
    tokens: int  # elements crossing per inference


@dataclass
class SdfGraph:
    node_names: list[str]
    blocks: dict[str, BlockConfig]
    mems: dict[str, MemoryNode]
    arcs: list[Arc]
    S: np.ndarray
    R: np.ndarray
    device: DeviceSpec
    merge_buffers: dict[int, int] = field(default_factory=dict)

    @property
    def gamma(self) -> np.ndarray:
        g = self.S * self.R
        for a, arc in enumerate(self.arcs):
            g[a, self.col(arc.consumer)] *= -1.0
        return g

    def col(self, name: str) -> int:
        return self.node_names.index(name)

    def is_mem(self, name: str) -> bool:
        return name in self.mems

    def node_depth(self, name: str) -> int:
        return self.blocks[name].depth if name in self.blocks else 0

    @property
    def depth_total(self) -> int:
        """Pipeline fill: block depths plus merge-buffer fill cycles."""
        return (sum(b.depth for b in self.blocks.values())
                + sum(self.merge_buffers.values()))

    def in_arcs(self, name: str) -> list[int]:
        return [i for i, a in enumerate(self.arcs) if a.consumer == name]

    def out_arcs(self, name: str) -> list[int]:
        return [i for i, a in enumerate(self.arcs) if a.producer == name]


def _check_connected(blocks: list[BlockConfig], dag_arcs) -> None:
    if not blocks:
        raise DisconnectedGraph("partition contains no layers")
    names = {b.name for b in blocks}
    adj: dict[str, set[str]] = {n: set() for n in names}
    for p, c in dag_arcs:
        adj[p].add(c)
        adj[c].add(p)
    seen = set()
    stack = [blocks[0].name]
    while stack:
        n = stack.pop()
        if n in seen:
            continue
        seen.add(n)
        stack.extend(adj[n] - seen)
    if seen != names:
        raise DisconnectedGraph(
            f"layers {sorted(names - seen)} are unreachable within the partition")


def build_sdfg(blocks: list[BlockConfig], dag_arcs: list[tuple[str, str]],
               device: DeviceSpec, strict_streams: bool = False,
               equalize: bool = True) -> SdfGraph:
    """Assemble the SDF graph of one partition.

    Block input ports not fed by an internal arc read from off-chip
    memory; blocks with no internal consumer write to it. The device
    bandwidth is split across all memory nodes (equally, or per the
    device's mem_split_in fraction between the two directions).
    """
    _check_connected(blocks, dag_arcs)
    by_name = {b.name: b for b in blocks}

    internal_ports: dict[str, list[int]] = {b.name: [] for b in blocks}
    arcs: list[Arc] = []
    for p, c in dag_arcs:
        port = _next_port(by_name[c], internal_ports[c])
        internal_ports[c].append(port)
        tokens = by_name[c].layer.input_shapes[port].elems
        assert tokens == by_name[p].layer.output_shape.elems, \
            f"arc {p}->{c} token mismatch"
        arcs.append(Arc(p, c, port, tokens))

    mem_ins: list[tuple[MemoryNode, Arc]] = []
    mem_outs: list[tuple[MemoryNode, Arc]] = []
    consumers = {a.producer for a in arcs}
    for b in blocks:
        n_ports = len(b.layer.input_shapes)
        for port in range(n_ports):
            if port not in internal_ports[b.name]:
                mname = f"mem_in.{b.name}.{port}" if n_ports > 1 else f"mem_in.{b.name}"
                node = MemoryNode(mname, MEM_IN, streams=b.s_i, rate=1.0)
                mem_ins.append((node, Arc(mname, b.name, port,
                                          b.layer.input_shapes[port].elems)))
    for b in blocks:
        if b.name not in consumers:
            mname = f"mem_out.{b.name}"
            node = MemoryNode(mname, MEM_OUT, streams=b.s_o, rate=1.0)
            mem_outs.append((node, Arc(b.name, mname, 0, b.layer.output_shape.elems)))
    if not mem_ins or not mem_outs:
        raise DisconnectedGraph("partition needs at least one input and one output")

    n_in, n_out = len(mem_ins), len(mem_outs)
    mem_ins = [(_bandwidth_limited(n, device, n_in, n_out), a) for n, a in mem_ins]
    mem_outs = [(_bandwidth_limited(n, device, n_in, n_out), a) for n, a in mem_outs]

    node_names = ([n.name for n, _ in mem_ins] + [b.name for b in blocks]
                  + [n.name for n, _ in mem_outs])
    mems = {n.name: n for n, _ in mem_ins + mem_outs}
    all_arcs = [a for _, a in mem_ins] + arcs + [a for _, a in mem_outs]
    col = {n: i for i, n in enumerate(node_names)}
    all_arcs.sort(key=lambda a: (col[a.producer], col[a.consumer], a.consumer_port))

    graph = SdfGraph(node_names=node_names, blocks=by_name, mems=mems,
                     arcs=all_arcs, S=np.zeros(0), R=np.zeros(0), device=device)
    _populate_matrices(graph, strict_streams)
    if equalize:
        equalize_merge_rates(graph)
    graph.merge_buffers = size_merge_buffers(graph)
    return graph


def _next_port(block: BlockConfig, taken: list[int]) -> int:
    for port in range(len(block.layer.input_shapes)):
        if port not in taken:
            return port
    raise StreamMismatch(f"block {block.name} has more producers than input ports")


def _bandwidth_limited(node: MemoryNode, device: DeviceSpec,
                       n_in: int, n_out: int) -> MemoryNode:
    total = device.words_per_cycle
    if device.mem_split_in is None:
        share = total / (n_in + n_out)
    elif node.direction == MEM_IN:
        share = total * device.mem_split_in / n_in
    else:
        share = total * (1.0 - device.mem_split_in) / n_out
    rate = min(share / node.streams, 1.0)
    return MemoryNode(node.name, node.direction, node.streams, rate)


def _populate_matrices(graph: SdfGraph, strict_streams: bool) -> None:
    n_arcs, n_nodes = len(graph.arcs), len(graph.node_names)
    S = np.zeros((n_arcs, n_nodes))
    R = np.zeros((n_arcs, n_nodes))
    for i, arc in enumerate(graph.arcs):
        pc, cc = graph.col(arc.producer), graph.col(arc.consumer)
        if arc.producer in graph.blocks:
            b = graph.blocks[arc.producer]
            s_p, r_p = b.s_o, b.r_o
        else:
            m = graph.mems[arc.producer]
            s_p, r_p = m.streams, m.rate
        if arc.consumer in graph.blocks:
            b = graph.blocks[arc.consumer]
            s_c, r_c = b.s_i, b.input_rate(arc.consumer_port)
        else:
            m = graph.mems[arc.consumer]
            s_c, r_c = m.streams, m.rate
        if s_p != s_c:
            if strict_streams:
                raise StreamMismatch(
                    f"arc {arc.producer}->{arc.consumer}: {s_p} streams feed {s_c}")
            # width adapter: the arc moves at most min(s_p, s_c) elements per
            # cycle, so the faster side serializes down to the narrow width
            cap = min(s_p, s_c)
            if s_p > s_c:
                r_p = min(r_p, cap / s_p)
            else:
                r_c = min(r_c, cap / s_c)
        S[i, pc], R[i, pc] = s_p, r_p
        S[i, cc], R[i, cc] = s_c, r_c
    graph.S, graph.R = S, R


def equalize_merge_rates(graph: SdfGraph) -> SdfGraph:
    """Slow each element-wise join down to its slowest arrival.

    Arrival rates are compared per unit of inference so that a broadcast
    side carrying fewer tokens per inference is not over-penalized. The
    scaling propagates downstream through the achieved-rate chain, hence
    a single topological pass reaches the fixpoint; the whole operation
    recomputes from intrinsic rates and is idempotent.
    """
    _populate_matrices(graph, strict_streams=False)
    order = _topo_node_order(graph)
    # inference throughput multiplier actually achieved at each node's output
    mu: dict[str, float] = {}
    for name in order:
        if name in graph.mems:
            mu[name] = 1.0
            continue
        block = graph.blocks[name]
        cc = graph.col(name)
        # rates compared per unit of inference: a port carrying fewer tokens
        # (broadcast side) must not be judged by its raw element rate
        supply = demand = float("inf")
        for ai in graph.in_arcs(name):
            arc = graph.arcs[ai]
            pc = graph.col(arc.producer)
            supply = min(supply, mu[arc.producer] * graph.S[ai, pc]
                         * graph.R[ai, pc] / arc.tokens)
            demand = min(demand, graph.S[ai, cc] * graph.R[ai, cc] / arc.tokens)
        factor = min(1.0, supply / demand) if demand > 0 else 1.0
        mu[name] = factor
        if block.layer.kind == Kind.EW and factor < 1.0:
            for ai in graph.in_arcs(name):
                graph.R[ai, cc] *= factor
            for ai in graph.out_arcs(name):
                graph.R[ai, cc] *= factor
            mu[name] = 1.0  # the scaled entries now carry the achieved rate
    return graph


def _topo_node_order(graph: SdfGraph) -> list[str]:
    indeg = {n: 0 for n in graph.node_names}
    for arc in graph.arcs:
        indeg[arc.consumer] += 1
    ready = [n for n in graph.node_names if indeg[n] == 0]
    order = []
    while ready:
        n = ready.pop(0)
        order.append(n)
        for ai in graph.out_arcs(n):
            c = graph.arcs[ai].consumer
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
    return order


def size_merge_buffers(graph: SdfGraph) -> dict[int, int]:
    """Extra FIFO depth per arc so both sides of every join fill together.

    The shallower path into a join gets a FIFO covering the pipeline-depth
    difference of the deeper path; nested branches resolve naturally in
    topological order.
    """
    order = _topo_node_order(graph)
    cum: dict[str, int] = {}
    buffers: dict[int, int] = {}
    for name in order:
        in_arcs = graph.in_arcs(name)
        if not in_arcs:
            cum[name] = 0
            continue
        arrivals = {ai: cum[graph.arcs[ai].producer] for ai in in_arcs}
        deepest = max(arrivals.values())
        if len(in_arcs) > 1:
            for ai, depth in arrivals.items():
                if depth < deepest:
                    buffers[ai] = deepest - depth
        cum[name] = deepest + graph.node_depth(name)
    return buffers


def dump_matrices(graph: SdfGraph, w: np.ndarray | None, out_prefix: str) -> list[str]:
    """Write S, R, Gamma (and W when given) as CSV, 6 decimal places."""
    written = []
    matrices = {"s": graph.S, "r": graph.R, "gamma": graph.gamma}
    if w is not None:
        matrices["w"] = w
    for label, mat in matrices.items():
        path = f"{out_prefix}{label}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["arc"] + graph.node_names)
            for i, arc in enumerate(graph.arcs):
                row = [f"{arc.producer}->{arc.consumer}"]
                row += [f"{v:.6f}" for v in mat[i]]
                writer.writerow(row)
        written.append(path)
    return written
