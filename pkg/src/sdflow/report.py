"""Report assembly: machine-readable JSON/CSV plus static figures.

Reports are byte-deterministic for a fixed seed: no timestamps, sorted
keys, and plain float repr. Figures are rendered to files next to the
delimited outputs and never hold data that is absent from those files.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from . import perf  # noqa: E402
from .dse import TraceEntry  # noqa: E402
from .errors import SchemaError  # noqa: E402
from .model import ModelDag  # noqa: E402
from .partitions import (DesignPoint, LayerParallelism,  # noqa: E402
                         evaluate_design)
from .resources import DeviceSpec  # noqa: E402

SCHEMA_VERSION = 1


def design_to_dict(dp: DesignPoint) -> dict:
    return {
        "cuts": list(dp.cuts),
        "batch": dp.batch,
        "parallelism": {lid: {"s_i": c.s_i, "s_o": c.s_o, "p_mac": c.p_mac}
                        for lid, c in sorted(dp.configs.items())},
    }


def design_from_dict(dag: ModelDag, device: DeviceSpec, doc: dict,
                     batch: int | None = None, jobs: int = 1,
                     strict_streams: bool = False) -> DesignPoint:
    if not isinstance(doc, dict) or "parallelism" not in doc:
        raise SchemaError('design file needs a "parallelism" table')
    configs = {}
    for lid, entry in doc["parallelism"].items():
        if lid not in dag.nodes:
            raise SchemaError(f"design names unknown layer {lid}")
        configs[lid] = LayerParallelism(entry.get("s_i", 1), entry.get("s_o", 1),
                                        entry.get("p_mac", 1))
    for lid in dag.nodes:
        configs.setdefault(lid, LayerParallelism())
    cuts = tuple(doc.get("cuts", []))
    use_batch = batch if batch is not None else doc.get("batch", 100)
    return evaluate_design(dag, device, cuts, configs, use_batch, jobs=jobs,
                           strict_streams=strict_streams)


def build_report(dp: DesignPoint, model_name: str, device: DeviceSpec,
                 seed: int | None = None) -> dict:
    """Full machine-readable report for one evaluated design."""
    pr = dp.perf_report()
    dsp_per_part = [p.usage.dsp for p in dp.partitions]
    dsp_mean = sum(dsp_per_part) / len(dsp_per_part)
    gops_per_dsp = pr.throughput_gops / dsp_mean if dsp_mean > 0 else None
    clock_ghz = device.clock_hz / 1e9
    ops_per_dsp_cycle = gops_per_dsp / clock_ghz if gops_per_dsp is not None else None

    partitions = []
    for p in dp.partitions:
        util = p.usage.utilization(device)
        partitions.append({
            "layers": list(p.layer_ids),
            "ii_max": p.ii_max,
            "depth": p.depth,
            "t_batch_s": p.t_batch,
            "workload_gops": p.workload_gops,
            "memory_bound": p.memory_bound,
            "resources": asdict(p.usage),
            "utilization": {k: round(v * 100, 4) for k, v in util.items()},
            "blocks": {b.name: {"s_i": b.s_i, "s_o": b.s_o, "p_mac": b.p_mac,
                                "r_i": b.r_i, "r_o": b.r_o, "depth": b.depth}
                       for b in p.blocks},
        })

    utils = [p.usage.utilization(device) for p in dp.partitions]
    mean_util = {k: round(sum(u[k] for u in utils) / len(utils) * 100, 4)
                 for k in utils[0]}
    max_util = {k: round(max(u[k] for u in utils) * 100, 4) for k in utils[0]}

    return {
        "schema": SCHEMA_VERSION,
        "model": model_name,
        "device": device.name,
        "batch": dp.batch,
        "seed": seed,
        "workload_gops": dp.workload_gops,
        "n_partitions": dp.n_partitions,
        "ii_max": pr.ii_max,
        "depth_total": pr.depth_total,
        "t_total_s": pr.t_batch,
        "clips_per_s": pr.clips_per_s,
        "gops_per_s": pr.throughput_gops,
        "gops_per_s_per_dsp": gops_per_dsp,
        "ops_per_dsp_per_cycle": ops_per_dsp_cycle,
        "dsp_mean": dsp_mean,
        "dsp_max": max(dsp_per_part),
        "utilization_mean_pct": mean_util,
        "utilization_max_pct": max_util,
        "partitions": partitions,
        "design": design_to_dict(dp),
    }


def write_report(outdir: str, report: dict, filename: str = "report.json") -> str:
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, filename)
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def write_partitions_csv(outdir: str, report: dict) -> str:
    path = os.path.join(outdir, "partitions.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["partition", "first_layer", "last_layer", "n_layers",
                         "ii_max", "depth", "t_batch_s", "workload_gops",
                         "dsp", "bram18", "dsp_pct", "bram_pct", "memory_bound"])
        for i, p in enumerate(report["partitions"]):
            writer.writerow([
                i, p["layers"][0], p["layers"][-1], len(p["layers"]),
                p["ii_max"], p["depth"], p["t_batch_s"], p["workload_gops"],
                p["resources"]["dsp"], p["resources"]["bram18"],
                p["utilization"]["dsp"], p["utilization"]["bram18"],
                p["memory_bound"],
            ])
    return path


def write_trace_csv(outdir: str, trace: list[TraceEntry]) -> str:
    path = os.path.join(outdir, "sa_trace.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "temperature", "objective", "accepted"])
        for t in trace:
            writer.writerow([t.iteration, repr(t.temperature), repr(t.objective),
                             int(t.accepted)])
    return path


def plot_sa_trace(outdir: str, trace: list[TraceEntry]) -> str:
    path = os.path.join(outdir, "sa_trace.png")
    finite = [(t.iteration, t.objective) for t in trace if t.objective > float("-inf")]
    fig, ax1 = plt.subplots(figsize=(8, 4.5))
    if finite:
        xs, ys = zip(*finite)
        ax1.plot(xs, ys, ".", markersize=2, color="tab:blue", label="candidate")
        best, bx, by = float("-inf"), [], []
        for x, y in finite:
            if y > best:
                best = y
            bx.append(x)
            by.append(best)
        ax1.plot(bx, by, "-", color="tab:red", label="best so far")
        ax1.legend(loc="lower right", fontsize=8)
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("objective (GOps/s)")
    ax2 = ax1.twinx()
    ax2.plot([t.iteration for t in trace], [t.temperature for t in trace],
             "-", color="tab:gray", alpha=0.5, linewidth=0.8)
    ax2.set_ylabel("temperature")
    ax2.set_yscale("log")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_throughput_vs_batch(outdir: str, dp: DesignPoint,
                             batches: list[int] | None = None) -> str:
    path = os.path.join(outdir, "throughput_vs_batch.png")
    if batches is None:
        batches = sorted({1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, dp.batch})
    gops = []
    for b in batches:
        times = [perf.partition_time(b, p.depth, p.ii_max, dp.device.clock_hz)
                 for p in dp.partitions]
        t_total = perf.total_time(times, dp.device.t_reconfig)
        g, _ = perf.throughput(dp.workload_gops, b, t_total)
        gops.append(g)
    fig, ax = plt.subplots(figsize=(7, 4.2))
    ax.plot(batches, gops, "o-", color="tab:blue")
    ax.axvline(dp.batch, color="tab:gray", linestyle="--", linewidth=0.8)
    ax.set_xscale("log")
    ax.set_xlabel("batch size")
    ax.set_ylabel("throughput (GOps/s)")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def write_validation_csv(outdir: str, rows: list[dict], geomean: float) -> str:
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, "validation.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["structure", "analytic_cycles", "simulated_cycles",
                         "relative_error_pct"])
        for row in rows:
            writer.writerow([row["structure"], row["analytic_cycles"],
                             row["simulated_cycles"],
                             round(row["relative_error"] * 100, 4)])
        writer.writerow(["geomean", "", "", round(geomean * 100, 4)])
    return path


def plot_validation(outdir: str, rows: list[dict], geomean: float) -> str:
    path = os.path.join(outdir, "validation.png")
    names = [r["structure"] for r in rows]
    errs = [r["relative_error"] * 100 for r in rows]
    fig, ax = plt.subplots(figsize=(6.5, 4))
    ax.bar(names, errs, color="tab:blue")
    ax.axhline(geomean * 100, color="tab:red", linestyle="--",
               label=f"geomean {geomean * 100:.2f}%")
    ax.set_ylabel("relative error (%)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
