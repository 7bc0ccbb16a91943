"""Contiguous partitioning of the layer graph across reconfigurations.

A design point is an ordered list of partitions (contiguous ranges of
the deterministic topological order) plus per-layer parallelism. Cuts
are restricted to single-arc graph cuts so no branch straddles a
reconfiguration boundary.
"""

from __future__ import annotations

import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

from . import perf
from .blocks import BlockConfig, is_maxed, make_block
from .errors import IllegalMove, NonReconvergentBranch, NotEnoughLegalCuts
from .model import ModelDag, toposort
from .resources import (DEFAULT_COST_MODEL, CostModel, DeviceSpec,
                        ResourceUsage, feasible, partition_resources, violation)
from .sdfg import SdfGraph, build_sdfg


class MoveDir(Enum):
    TO_PREV = "to_prev"
    TO_NEXT = "to_next"


@dataclass(frozen=True)
class LayerParallelism:
    s_i: int = 1
    s_o: int = 1
    p_mac: int = 1


@dataclass(frozen=True)
class PartitionEval:
    """One partition with its graph, resource and performance figures."""

    layer_ids: tuple[str, ...]
    graph: SdfGraph
    blocks: tuple[BlockConfig, ...]
    ii_max: float
    depth: int
    workload_gops: float
    t_batch: float
    usage: ResourceUsage
    memory_bound: bool

    @property
    def parallelism_exhausted(self) -> bool:
        return all(is_maxed(b) for b in self.blocks)


@dataclass(frozen=True)
class DesignPoint:
    """Immutable full-model design: cuts + per-layer parallelism."""

    order: tuple[str, ...]
    cuts: tuple[int, ...]
    configs: dict[str, LayerParallelism]
    batch: int
    partitions: tuple[PartitionEval, ...]
    device: DeviceSpec

    @property
    def n_partitions(self) -> int:
        return len(self.partitions)

    @property
    def workload_gops(self) -> float:
        return sum(p.workload_gops for p in self.partitions)

    @property
    def t_total(self) -> float:
        return perf.total_time([p.t_batch for p in self.partitions],
                               self.device.t_reconfig)

    @property
    def all_feasible(self) -> bool:
        return all(feasible(p.usage, self.device) for p in self.partitions)

    @property
    def total_violation(self) -> float:
        return sum(violation(p.usage, self.device) for p in self.partitions)

    def perf_report(self) -> perf.PerfReport:
        gops, clips = perf.throughput(self.workload_gops, self.batch, self.t_total)
        return perf.PerfReport(
            batch=self.batch,
            ii_max=max(p.ii_max for p in self.partitions),
            depth_total=sum(p.depth for p in self.partitions),
            t_batch=self.t_total,
            throughput_gops=gops,
            clips_per_s=clips,
        )


def crossing_arcs(dag: ModelDag, order: tuple[str, ...], cut: int) -> list[tuple[str, str]]:
    pos = {nid: i for i, nid in enumerate(order)}
    return [(u, v) for u, v in dag.arcs if pos[u] < cut <= pos[v]]


def legal_cut_positions(dag: ModelDag, order: tuple[str, ...] | None = None) -> list[int]:
    """Positions where exactly one arc crosses the boundary."""
    if order is None:
        order = tuple(toposort(dag))
    return [c for c in range(1, len(order))
            if len(crossing_arcs(dag, order, c)) == 1]


def partition_ranges(order: tuple[str, ...], cuts: tuple[int, ...]) -> list[tuple[str, ...]]:
    bounds = [0, *cuts, len(order)]
    return [tuple(order[a:b]) for a, b in zip(bounds, bounds[1:])]


def _assemble_partition(dag: ModelDag, layer_ids: tuple[str, ...],
                        configs: dict[str, LayerParallelism], device: DeviceSpec,
                        strict_streams: bool = False) -> tuple[SdfGraph, tuple[BlockConfig, ...]]:
    inside = set(layer_ids)
    blocks = []
    for lid in layer_ids:
        cfg = configs.get(lid, LayerParallelism())
        blocks.append(make_block(dag.nodes[lid], cfg.s_i, cfg.s_o, cfg.p_mac))
    internal = [(u, v) for u, v in dag.arcs if u in inside and v in inside]
    outgoing = {u for u, v in dag.arcs if u in inside and v not in inside}
    # A producer both consumed inside and streamed out would need its tensor
    # written to memory mid-branch; single-arc cuts exclude that shape.
    internal_producers = {u for u, _ in internal}
    for u in outgoing:
        if u in internal_producers:
            raise NonReconvergentBranch(
                f"layer {u} feeds both inside and outside its partition")
    graph = build_sdfg(blocks, internal, device, strict_streams=strict_streams)
    return graph, tuple(blocks)


def evaluate_partition(dag: ModelDag, layer_ids: tuple[str, ...],
                       configs: dict[str, LayerParallelism], device: DeviceSpec,
                       batch: int, cost: CostModel = DEFAULT_COST_MODEL,
                       strict_streams: bool = False) -> PartitionEval:
    graph, blocks = _assemble_partition(dag, layer_ids, configs, device, strict_streams)
    w = perf.build_workload_matrix(graph)
    ii, ii_max = perf.initiation_interval(graph, w)
    depth = graph.depth_total
    t_batch = perf.partition_time(batch, depth, ii_max, device.clock_hz)
    usage = partition_resources(graph, cost)
    mem_cols = [graph.col(m) for m in graph.mems]
    memory_bound = bool(ii_max > 0 and ii[:, mem_cols].max(initial=0.0) >= ii_max * (1 - 1e-12))
    workload = sum(dag.nodes[lid].macs() for lid in layer_ids) / 1e9
    return PartitionEval(layer_ids=layer_ids, graph=graph, blocks=blocks,
                         ii_max=ii_max, depth=depth, workload_gops=workload,
                         t_batch=t_batch, usage=usage, memory_bound=memory_bound)


def evaluate_design(dag: ModelDag, device: DeviceSpec, cuts: tuple[int, ...],
                    configs: dict[str, LayerParallelism], batch: int,
                    order: tuple[str, ...] | None = None, jobs: int = 1,
                    cache: dict | None = None,
                    cost: CostModel = DEFAULT_COST_MODEL,
                    strict_streams: bool = False) -> DesignPoint:
    """Evaluate every partition of a design (optionally in parallel)."""
    if order is None:
        order = tuple(toposort(dag))
    for c in cuts:
        if len(crossing_arcs(dag, order, c)) != 1:
            raise NonReconvergentBranch(
                f"cut at position {c} slices through a branch region")
    ranges = partition_ranges(order, cuts)

    def one(rng_ids: tuple[str, ...]) -> PartitionEval:
        key = (rng_ids, tuple(sorted((lid, configs.get(lid, LayerParallelism()))
                                     for lid in rng_ids)), batch)
        if cache is not None and key in cache:
            return cache[key]
        pe = evaluate_partition(dag, rng_ids, configs, device, batch, cost,
                                strict_streams=strict_streams)
        if cache is not None:
            cache[key] = pe
        return pe

    if jobs > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = tuple(pool.map(one, ranges))
    else:
        parts = tuple(one(r) for r in ranges)
    return DesignPoint(order=order, cuts=tuple(cuts), configs=dict(configs),
                       batch=batch, partitions=parts, device=device)


def minimal_configs(dag: ModelDag) -> dict[str, LayerParallelism]:
    return {lid: LayerParallelism() for lid in dag.nodes}


def random_partitioning(dag: ModelDag, device: DeviceSpec, initial_cuts: int,
                        rng: random.Random, batch: int = 100,
                        jobs: int = 1, cache: dict | None = None,
                        strict_streams: bool = False) -> DesignPoint:
    """Uniformly drawn legal cut set with all-minimal parallelism."""
    order = tuple(toposort(dag))
    legal = legal_cut_positions(dag, order)
    if initial_cuts < 0 or initial_cuts >= len(order) or initial_cuts > len(legal):
        raise NotEnoughLegalCuts(
            f"requested {initial_cuts} cuts but only {len(legal)} positions are legal")
    cuts = tuple(sorted(rng.sample(legal, initial_cuts)))
    return evaluate_design(dag, device, cuts, minimal_configs(dag), batch,
                           order=order, jobs=jobs, cache=cache,
                           strict_streams=strict_streams)


def move_layer(dag: ModelDag, dp: DesignPoint, partition_idx: int,
               direction: MoveDir, jobs: int = 1,
               cache: dict | None = None,
               strict_streams: bool = False) -> DesignPoint:
    """Reassign one boundary layer to the adjacent partition."""
    cuts = list(dp.cuts)
    if direction == MoveDir.TO_PREV:
        if partition_idx <= 0 or partition_idx > len(cuts):
            raise IllegalMove("no previous partition")
        ci = partition_idx - 1
        new_pos = cuts[ci] + 1
    else:
        if partition_idx < 0 or partition_idx >= len(cuts):
            raise IllegalMove("no next partition")
        ci = partition_idx
        new_pos = cuts[ci] - 1
    upper = cuts[ci + 1] if ci + 1 < len(cuts) else len(dp.order)
    lower = cuts[ci - 1] if ci > 0 else 0
    if not (lower < new_pos < upper):
        raise IllegalMove("move would empty a partition")
    if len(crossing_arcs(dag, dp.order, new_pos)) != 1:
        raise IllegalMove(f"cut at position {new_pos} is not a single-arc cut")
    cuts[ci] = new_pos
    return evaluate_design(dag, dp.device, tuple(cuts), dp.configs, dp.batch,
                           order=dp.order, jobs=jobs, cache=cache,
                           strict_streams=strict_streams)


class BottleneckCause(Enum):
    MEMORY_BOUND = "MemoryBound"
    PARALLELISM_EXHAUSTED = "ParallelismExhausted"
    RESOURCE_BOUND = "ResourceBound"


def identify_bottleneck(dp: DesignPoint) -> tuple[int, BottleneckCause]:
    """Partition with the worst time per unit of workload, plus why."""
    scores = []
    for i, p in enumerate(dp.partitions):
        per_gop = p.t_batch / p.workload_gops if p.workload_gops > 0 else float("inf")
        scores.append((per_gop, i))
    _, idx = max(scores, key=lambda t: (t[0], -t[1]))
    part = dp.partitions[idx]
    if part.parallelism_exhausted:
        cause = BottleneckCause.PARALLELISM_EXHAUSTED
    elif part.memory_bound:
        cause = BottleneckCause.MEMORY_BOUND
    else:
        cause = BottleneckCause.RESOURCE_BOUND
    return idx, cause
