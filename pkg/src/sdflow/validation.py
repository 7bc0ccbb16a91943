"""Model-vs-simulator accuracy suite over the four graph structure
classes: sequential, branch, multi-input, and multi-output."""

from __future__ import annotations

import math

from . import perf
from .assets import bundled_model
from .partitions import LayerParallelism, evaluate_design, minimal_configs
from .resources import DeviceSpec
from .simulate import validate as simulate_validate

# model + parallelism overrides per structure class; convolutions get a
# nontrivial MAC unroll so fractional rates are exercised
SUITE: dict[str, tuple[str, dict[str, LayerParallelism]]] = {
    "sequential": ("toy_chain", {"conv1": LayerParallelism(1, 1, 9)}),
    "branch": ("toy_residual", {"conv1": LayerParallelism(1, 1, 27),
                                "conv2": LayerParallelism(1, 1, 27)}),
    "multi_input": ("toy_multi_input", {}),
    "multi_output": ("toy_multi_output", {}),
}


def validate_class(structure: str, device: DeviceSpec, batch: int = 100) -> dict:
    model_name, overrides = SUITE[structure]
    dag = bundled_model(model_name)
    configs = minimal_configs(dag)
    configs.update(overrides)
    dp = evaluate_design(dag, device, (), configs, batch)
    graph = dp.partitions[0].graph
    w = perf.build_workload_matrix(graph)
    res = simulate_validate(graph, w, batch)
    return {
        "structure": structure,
        "model": model_name,
        "analytic_cycles": res["analytic_cycles"],
        "simulated_cycles": res["simulated_cycles"],
        "relative_error": res["relative_error"],
        "analytic_ii": res["analytic_ii"],
        "measured_ii": res["measured_ii"],
    }


def run_suite(device: DeviceSpec, batch: int = 100) -> tuple[list[dict], float]:
    rows = [validate_class(structure, device, batch) for structure in SUITE]
    geomean = geometric_mean([r["relative_error"] for r in rows])
    return rows, geomean


def geometric_mean(errors: list[float], floor: float = 1e-9) -> float:
    logs = [math.log(max(e, floor)) for e in errors]
    return math.exp(sum(logs) / len(logs))
