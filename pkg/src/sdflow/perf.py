"""Analytic performance model: workload matrix, initiation interval,
partition/total execution time, and throughput."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivisionByZeroRate
from .sdfg import SdfGraph


def build_workload_matrix(graph: SdfGraph) -> np.ndarray:
    """Signed elements-per-inference matrix with the topology pattern."""
    w = np.zeros_like(graph.S)
    for i, arc in enumerate(graph.arcs):
        w[i, graph.col(arc.producer)] = arc.tokens
        w[i, graph.col(arc.consumer)] = -arc.tokens
    return w


def initiation_interval(graph: SdfGraph, w: np.ndarray) -> tuple[np.ndarray, float]:
    """Cycles each node needs per inference on each arc, and the maximum.

    Defined entrywise as |W| / |Gamma| over the shared nonzero pattern;
    magnitude carries the cycle count, signs only encode direction.
    """
    gamma = graph.gamma
    ii = np.zeros_like(w)
    mask = w != 0
    if np.any(mask & (gamma == 0)):
        rows = np.nonzero(np.any(mask & (gamma == 0), axis=1))[0]
        arc = graph.arcs[int(rows[0])]
        raise DivisionByZeroRate(
            f"arc {arc.producer}->{arc.consumer} carries workload at zero rate")
    ii[mask] = np.abs(w[mask]) / np.abs(gamma[mask])
    return ii, float(ii.max(initial=0.0))


def partition_time(batch: int, depth: float, ii_max: float, clock_hz: float) -> float:
    """Seconds to stream `batch` inferences through one partition."""
    if batch < 1:
        raise ValueError("batch must be >= 1")
    return (depth + ii_max * (batch - 1)) / clock_hz


def total_time(partition_times: list[float], t_reconfig: float, _batch: int | None = None) -> float:
    """Whole-model time: partition times plus one reconfiguration per
    partition switch (batch-independent)."""
    n_p = len(partition_times)
    if n_p < 1:
        raise ValueError("need at least one partition")
    return sum(partition_times) + (n_p - 1) * t_reconfig


def throughput(workload_gops: float, batch: int, t_total: float) -> tuple[float, float]:
    """(GOps/s, clips/s); the former is exactly clips/s times the workload."""
    if t_total <= 0:
        raise ValueError("total time must be positive")
    clips_per_s = batch / t_total
    return workload_gops * clips_per_s, clips_per_s


@dataclass(frozen=True)
class PerfReport:
    """Design-level performance summary."""

    batch: int
    ii_max: float  # worst partition, cycles per inference
    depth_total: float  # summed over partitions, cycles
    t_batch: float  # seconds, including reconfigurations
    throughput_gops: float
    clips_per_s: float
