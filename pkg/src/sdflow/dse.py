"""Simulated-annealing exploration of partitioning and parallelism.

Maximizes design throughput at a fixed batch size subject to the device
resource budget. Moves either retune one layer's parallelism (adjacent
channel divisor or one MAC step) or reshape the partitioning (move a
boundary layer, add or remove a reconfiguration point).
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field, replace

from .blocks import divisors
from .errors import IllegalMove, NoFeasibleDesign, SchemaError, StreamMismatch
from .model import Kind, ModelDag
from .partitions import (DesignPoint, LayerParallelism, MoveDir, evaluate_design,
                         identify_bottleneck, legal_cut_positions, move_layer,
                         random_partitioning)
from .resources import DeviceSpec

DEFAULT_MOVE_WEIGHTS = {
    "CoarseIn": 0.25,
    "CoarseOut": 0.2,
    "Fine": 0.3,
    "MoveLayer": 0.1,
    "AddCut": 0.075,
    "RemoveCut": 0.075,
}

_NEIGHBOR_RETRIES = 24


@dataclass(frozen=True)
class SaConfig:
    """Annealing schedule; None temperature fields are derived at runtime."""

    initial_temperature: float | None = None
    cooling_rate: float = 0.97
    iterations_per_temperature: int = 100
    min_temperature: float | None = None  # default: initial * 1e-3
    rng_seed: int = 0
    batch: int = 100
    move_weights: dict[str, float] = field(
        default_factory=lambda: dict(DEFAULT_MOVE_WEIGHTS))

    def __post_init__(self):
        if not 0.0 < self.cooling_rate < 1.0:
            raise SchemaError("cooling_rate must be in (0, 1)")
        if self.iterations_per_temperature < 1 or self.batch < 1:
            raise SchemaError("iteration and batch counts must be >= 1")
        unknown = set(self.move_weights) - set(DEFAULT_MOVE_WEIGHTS)
        if unknown:
            raise SchemaError(f"unknown move weights {sorted(unknown)}")

    @staticmethod
    def from_json(path) -> "SaConfig":
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"SA config is not valid JSON: {exc}") from exc
        cfg = SaConfig()
        unknown = set(doc) - set(cfg.__dataclass_fields__)
        if unknown:
            raise SchemaError(f"SA config has unknown keys {sorted(unknown)}")
        if "move_weights" in doc:
            doc = dict(doc)
            doc["move_weights"] = {**DEFAULT_MOVE_WEIGHTS, **doc["move_weights"]}
        return replace(cfg, **doc)


@dataclass(frozen=True)
class TraceEntry:
    iteration: int
    temperature: float
    objective: float
    accepted: bool


def objective(dp: DesignPoint) -> float:
    """Throughput in GOps/s, or -inf when any partition is infeasible."""
    if not dp.all_feasible:
        return float("-inf")
    return dp.perf_report().throughput_gops


def _adjacent_divisor(value: int, total: int, rng: random.Random) -> int | None:
    divs = divisors(total)
    i = divs.index(value)
    options = []
    if i > 0:
        options.append(divs[i - 1])
    if i + 1 < len(divs):
        options.append(divs[i + 1])
    return rng.choice(options) if options else None


def _retuned(dag: ModelDag, dp: DesignPoint, rng: random.Random,
             kind: str) -> dict[str, LayerParallelism] | None:
    lid = rng.choice(dp.order)
    layer = dag.nodes[lid]
    cfg = dp.configs[lid]
    if kind == "CoarseIn":
        s = _adjacent_divisor(cfg.s_i, layer.in_channels, rng)
        if s is None:
            return None
        if layer.kind == Kind.CONV and not layer.is_depthwise:
            new = replace(cfg, s_i=s)
        else:
            new = replace(cfg, s_i=s, s_o=s)  # non-conv and depthwise tie s_o
    elif kind == "CoarseOut":
        if layer.kind != Kind.CONV or layer.is_depthwise:
            return None
        s = _adjacent_divisor(cfg.s_o, layer.out_channels, rng)
        if s is None:
            return None
        new = replace(cfg, s_o=s)
    else:  # Fine
        if layer.kind != Kind.CONV:
            return None
        step = rng.choice((-1, 1))
        p = cfg.p_mac + step
        if not 1 <= p <= layer.kernel_volume:
            p = cfg.p_mac - step
        if not 1 <= p <= layer.kernel_volume or p == cfg.p_mac:
            return None
        new = replace(cfg, p_mac=p)
    configs = dict(dp.configs)
    configs[lid] = new
    return configs


def neighbor(dag: ModelDag, dp: DesignPoint, rng: random.Random,
             weights: dict[str, float] | None = None, jobs: int = 1,
             cache: dict | None = None, strict_streams: bool = False) -> DesignPoint:
    """One weighted-random move; identity after bounded failed retries."""
    weights = weights or DEFAULT_MOVE_WEIGHTS
    kinds = sorted(weights)
    wvals = [weights[k] for k in kinds]
    for _ in range(_NEIGHBOR_RETRIES):
        kind = rng.choices(kinds, weights=wvals, k=1)[0]
        try:
            if kind in ("CoarseIn", "CoarseOut", "Fine"):
                configs = _retuned(dag, dp, rng, kind)
                if configs is None:
                    continue
                return evaluate_design(dag, dp.device, dp.cuts, configs, dp.batch,
                                       order=dp.order, jobs=jobs, cache=cache,
                                       strict_streams=strict_streams)
            if kind == "MoveLayer":
                if dp.n_partitions < 2:
                    continue
                # resize the worst-performing partition at one of its
                # boundaries: shed a layer or take one from a neighbor
                bott, _ = identify_bottleneck(dp)
                idx, direction = rng.choice([
                    (bott, MoveDir.TO_PREV), (bott, MoveDir.TO_NEXT),
                    (bott - 1, MoveDir.TO_NEXT), (bott + 1, MoveDir.TO_PREV)])
                return move_layer(dag, dp, idx, direction, jobs=jobs,
                                  cache=cache, strict_streams=strict_streams)
            if kind == "AddCut":
                free = [c for c in legal_cut_positions(dag, dp.order)
                        if c not in dp.cuts]
                if not free:
                    continue
                cuts = tuple(sorted((*dp.cuts, rng.choice(free))))
            else:  # RemoveCut
                if not dp.cuts:
                    continue
                drop = rng.choice(dp.cuts)
                cuts = tuple(c for c in dp.cuts if c != drop)
            return evaluate_design(dag, dp.device, cuts, dp.configs, dp.batch,
                                   order=dp.order, jobs=jobs, cache=cache,
                                   strict_streams=strict_streams)
        except (IllegalMove, StreamMismatch):
            continue
    return dp


def _initial_temperature(dag: ModelDag, dp: DesignPoint, rng: random.Random,
                         sa: SaConfig, jobs: int, cache: dict,
                         strict_streams: bool = False) -> float:
    """Spread of objectives over a small neighbor sample."""
    objs = [objective(dp)]
    for _ in range(12):
        objs.append(objective(neighbor(dag, dp, rng, sa.move_weights, jobs, cache,
                                       strict_streams)))
    finite = [o for o in objs if math.isfinite(o)]
    if len(finite) >= 2 and max(finite) > min(finite):
        return max(finite) - min(finite)
    if finite:
        return max(abs(finite[0]), 1.0)
    return 1.0


def anneal(dag: ModelDag, device: DeviceSpec, sa: SaConfig,
           initial_cuts: int = 0, jobs: int = 1, strict_streams: bool = False
           ) -> tuple[DesignPoint, list[TraceEntry]]:
    """Classic simulated annealing; deterministic for a fixed rng_seed.

    Returns the best feasible design ever visited. Raises
    NoFeasibleDesign (carrying the least-violating point) if no visited
    design fits the device.
    """
    rng = random.Random(sa.rng_seed)
    cache: dict = {}
    current = random_partitioning(dag, device, initial_cuts, rng, sa.batch,
                                  jobs=jobs, cache=cache,
                                  strict_streams=strict_streams)
    cur_obj = objective(current)
    t0 = sa.initial_temperature
    if t0 is None:
        t0 = _initial_temperature(dag, current, rng, sa, jobs, cache,
                                  strict_streams)
    t_min = sa.min_temperature if sa.min_temperature is not None else t0 * 1e-3

    best: DesignPoint | None = current if math.isfinite(cur_obj) else None
    best_obj = cur_obj
    least_violating = current
    trace: list[TraceEntry] = []
    iteration = 0
    temp = t0
    while temp > t_min:
        for _ in range(sa.iterations_per_temperature):
            cand = neighbor(dag, current, rng, sa.move_weights, jobs, cache,
                            strict_streams)
            cand_obj = objective(cand)
            if math.isfinite(cand_obj):
                accept = cand_obj >= cur_obj or \
                    rng.random() < math.exp((cand_obj - cur_obj) / temp)
            elif not math.isfinite(cur_obj):
                # both infeasible: walk toward lower resource violation
                accept = cand.total_violation <= current.total_violation
            else:
                accept = False
            if accept:
                current, cur_obj = cand, cand_obj
            if math.isfinite(cand_obj) and (best is None or cand_obj > best_obj):
                best, best_obj = cand, cand_obj
            if cand.total_violation < least_violating.total_violation:
                least_violating = cand
            trace.append(TraceEntry(iteration, temp, cand_obj, accept))
            iteration += 1
        temp *= sa.cooling_rate
    if best is None:
        raise NoFeasibleDesign(
            "no resource-feasible design found", least_violating=least_violating)
    return best, trace
