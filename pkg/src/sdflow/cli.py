"""Command-line front end.

Subcommands: optimize (annealing search), evaluate (fixed design),
validate (analytic model vs token-flow simulation), dump-sdfg (matrix
dump). Exit codes: 0 success, 1 I/O or schema error, 2 no feasible
design.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import dse, perf, report
from .assets import bundled_model_names, bundled_model_text
from .errors import NoFeasibleDesign, SdflowError
from .model import model_workload, parse_model
from .partitions import minimal_configs, evaluate_design
from .resources import bundled_device, load_device
from .sdfg import dump_matrices
from .validation import run_suite


class _Parser(argparse.ArgumentParser):
    # usage mistakes are schema errors (exit 1); exit 2 means infeasible
    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


def _load_model(ref: str):
    if os.path.exists(ref):
        with open(ref) as fh:
            text = fh.read()
    elif ref in bundled_model_names():
        text = bundled_model_text(ref)
    else:
        raise SdflowError(f"model {ref!r} is neither a file nor a bundled model")
    return parse_model(text)


def _load_device(ref: str):
    if os.path.exists(ref):
        return load_device(ref)
    try:
        return bundled_device(ref)
    except FileNotFoundError:
        raise SdflowError(
            f"device {ref!r} is neither a file nor a bundled device") from None


def _common_flags(sub, model=True, device=True):
    if model:
        sub.add_argument("--model", required=True,
                         help="model JSON path or bundled model name")
    if device:
        sub.add_argument("--device", required=True,
                         help="device JSON path or bundled device name")
    sub.add_argument("--batch", type=int, default=None,
                     help="batch size (default 100 unless the config says otherwise)")
    sub.add_argument("--out", default="sdflow-out", help="output directory")
    sub.add_argument("--jobs", type=int, default=1,
                     help="worker threads for partition evaluation")
    sub.add_argument("--strict-streams", action="store_true",
                     help="error on stream-width mismatches instead of adapting")
    sub.add_argument("--dump-matrices", action="store_true",
                     help="also write per-partition S/R/Gamma/W CSV dumps")
    sub.add_argument("--no-plots", action="store_true",
                     help="skip figure rendering")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sdflow",
                     description="SDF-based 3D CNN accelerator modeling and DSE")
    subs = parser.add_subparsers(dest="command", required=True)

    opt = subs.add_parser("optimize", parents=[], help="simulated-annealing search")
    _common_flags(opt)
    opt.add_argument("--seed", type=int, default=0, help="annealer RNG seed")
    opt.add_argument("--initial-cuts", type=int, default=0,
                     help="number of initial reconfiguration points")
    opt.add_argument("--sa-config", default=None, help="SA config JSON path")

    ev = subs.add_parser("evaluate", help="evaluate a fixed design file")
    _common_flags(ev)
    ev.add_argument("--design", required=True, help="design JSON path")

    va = subs.add_parser("validate", help="analytic model vs simulation suite")
    _common_flags(va, model=False)

    du = subs.add_parser("dump-sdfg", help="dump S/R/Gamma/W matrices as CSV")
    _common_flags(du)
    du.add_argument("--design", default=None, help="optional design JSON path")
    return parser


def _write_design_outputs(args, dp, model_name, device, trace=None, seed=None):
    rep = report.build_report(dp, model_name, device, seed=seed)
    path = report.write_report(args.out, rep)
    report.write_report(args.out, rep["design"], filename="design.json")
    report.write_partitions_csv(args.out, rep)
    if trace is not None:
        report.write_trace_csv(args.out, trace)
    if not args.no_plots:
        report.plot_throughput_vs_batch(args.out, dp)
        if trace is not None:
            report.plot_sa_trace(args.out, trace)
    if args.dump_matrices:
        mat_dir = os.path.join(args.out, "matrices")
        os.makedirs(mat_dir, exist_ok=True)
        for i, p in enumerate(dp.partitions):
            w = perf.build_workload_matrix(p.graph)
            dump_matrices(p.graph, w, os.path.join(mat_dir, f"p{i}_"))
    return rep, path


def _print_summary(rep):
    print(f"model {rep['model']} on {rep['device']}: "
          f"{rep['workload_gops']:.4f} GOps, batch {rep['batch']}, "
          f"{rep['n_partitions']} partition(s)")
    print(f"  clips/s        : {rep['clips_per_s']:.4f}")
    print(f"  GOps/s         : {rep['gops_per_s']:.4f}")
    if rep["gops_per_s_per_dsp"] is not None:
        print(f"  GOps/s/DSP     : {rep['gops_per_s_per_dsp']:.4f}")
        print(f"  Op/DSP/cycle   : {rep['ops_per_dsp_per_cycle']:.4f}")
    print(f"  DSP% mean/max  : {rep['utilization_mean_pct']['dsp']:.2f} / "
          f"{rep['utilization_max_pct']['dsp']:.2f}")
    print(f"  BRAM% mean/max : {rep['utilization_mean_pct']['bram18']:.2f} / "
          f"{rep['utilization_max_pct']['bram18']:.2f}")


def cmd_optimize(args) -> int:
    dag = _load_model(args.model)
    device = _load_device(args.device)
    sa = dse.SaConfig.from_json(args.sa_config) if args.sa_config else dse.SaConfig()
    overrides = {"rng_seed": args.seed}
    if args.batch is not None:
        overrides["batch"] = args.batch
    sa = dse.SaConfig(**{**_sa_as_dict(sa), **overrides})
    try:
        best, trace = dse.anneal(dag, device, sa, initial_cuts=args.initial_cuts,
                                 jobs=args.jobs, strict_streams=args.strict_streams)
    except NoFeasibleDesign as exc:
        print(f"sdflow: {exc}", file=sys.stderr)
        if exc.least_violating is not None:
            rep, path = _write_design_outputs(args, exc.least_violating, dag.name,
                                              device, seed=args.seed)
            print(f"least-violating design written to {path}", file=sys.stderr)
        return 2
    rep, path = _write_design_outputs(args, best, dag.name, device, trace=trace,
                                      seed=args.seed)
    _print_summary(rep)
    print(f"report written to {path}")
    return 0


def _sa_as_dict(sa: dse.SaConfig) -> dict:
    return {f: getattr(sa, f) for f in sa.__dataclass_fields__}


def cmd_evaluate(args) -> int:
    dag = _load_model(args.model)
    device = _load_device(args.device)
    with open(args.design) as fh:
        doc = json.load(fh)
    dp = report.design_from_dict(dag, device, doc, batch=args.batch,
                                 jobs=args.jobs,
                                 strict_streams=args.strict_streams)
    rep, path = _write_design_outputs(args, dp, dag.name, device)
    _print_summary(rep)
    print(f"report written to {path}")
    return 0


def cmd_validate(args) -> int:
    device = _load_device(args.device)
    rows, geomean = run_suite(device, batch=args.batch or 100)
    path = report.write_validation_csv(args.out, rows, geomean)
    if not args.no_plots:
        report.plot_validation(args.out, rows, geomean)
    print(f"{'structure':>14} {'analytic':>12} {'simulated':>12} {'error %':>8}")
    for row in rows:
        print(f"{row['structure']:>14} {row['analytic_cycles']:>12.0f} "
              f"{row['simulated_cycles']:>12d} {row['relative_error'] * 100:>8.3f}")
    print(f"{'geomean':>14} {'':>12} {'':>12} {geomean * 100:>8.3f}")
    print(f"table written to {path}")
    return 0


def cmd_dump_sdfg(args) -> int:
    dag = _load_model(args.model)
    device = _load_device(args.device)
    if args.design:
        with open(args.design) as fh:
            doc = json.load(fh)
        dp = report.design_from_dict(dag, device, doc, batch=args.batch,
                                     strict_streams=args.strict_streams)
    else:
        dp = evaluate_design(dag, device, (), minimal_configs(dag),
                             args.batch or 100,
                             strict_streams=args.strict_streams)
    os.makedirs(args.out, exist_ok=True)
    for i, p in enumerate(dp.partitions):
        w = perf.build_workload_matrix(p.graph)
        files = dump_matrices(p.graph, w, os.path.join(args.out, f"p{i}_"))
        for f in files:
            print(f"wrote {f}")
    print(f"workload: {model_workload(dag):.6f} GOps")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"optimize": cmd_optimize, "evaluate": cmd_evaluate,
                "validate": cmd_validate, "dump-sdfg": cmd_dump_sdfg}
    try:
        return handlers[args.command](args)
    except NoFeasibleDesign as exc:
        print(f"sdflow: {exc}", file=sys.stderr)
        return 2
    except (SdflowError, OSError, json.JSONDecodeError) as exc:
        print(f"sdflow: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
