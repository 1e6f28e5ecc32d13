"""Command-line interface.

Subcommands: run, scaling, ablation, gronwall-verify, init-stats, gf-oracle.
Exit codes: 0 success, 2 acceptance-threshold failure, 1 runtime error.
Config keys can be overridden with MIL_<KEY> environment variables
(e.g. MIL_SEEDS=1,2,3 MIL_T_MAX=50000).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, replace

import numpy as np

from . import experiment, gf, gronwall, initstats
from ._kernels import BACKEND_NAME

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_THRESHOLD = 2


def _add_study_args(sub):
    sub.add_argument("--config", required=True, help="path to the JSON config")
    sub.add_argument("--out", default=None, help="output directory (overrides config)")
    sub.add_argument("--seeds", default=None, help="comma-separated seed list override")
    sub.add_argument("--threads", type=int, default=1, help="worker threads for (d, seed) runs")


def _load_config(args) -> experiment.ExperimentConfig:
    cfg = experiment.load_config(args.config)
    if args.out is not None:
        cfg = replace(cfg, out_dir=args.out)
    if args.seeds is not None:
        cfg = replace(cfg, seeds=tuple(int(s) for s in args.seeds.split(",") if s))
    return cfg


def _cmd_run(args) -> int:
    cfg = _load_config(args)
    report = experiment.run_study(cfg, threads=args.threads)
    figure = experiment.figure_name_for_link(cfg.link)
    paths = experiment.emit_outputs(report, cfg.out_dir, figure=figure)
    print(f"[run] backend={BACKEND_NAME} wrote {len(paths)} files to {cfg.out_dir}")
    failed = [r for r in report.records if r.status != "ok"]
    for rec in failed:
        print(f"[run] FAILED d={rec.d} seed={rec.seed}: {rec.error}")
    return EXIT_RUNTIME if failed else EXIT_OK


def _cmd_scaling(args) -> int:
    cfg = _load_config(args)
    report = experiment.run_study(cfg, threads=args.threads)
    figure = experiment.figure_name_for_link(cfg.link)
    experiment.emit_outputs(report, cfg.out_dir, figure=figure)
    for d in cfg.d_list:
        print(f"[scaling] d={d}: median stop {report.medians[d]}, "
              f"success {report.success_rate[d]:.0%}")
    for (d1, d2), ratio in zip(zip(cfg.d_list, cfg.d_list[1:]), report.ratios):
        shown = "n/a" if ratio is None else f"{ratio:.2f}"
        print(f"[scaling] ratio {d1}->{d2}: {shown}")
    problems = experiment.scaling_gates(report)
    for p in problems:
        print(f"[scaling] GATE: {p}")
    return EXIT_THRESHOLD if problems else EXIT_OK


def _cmd_ablation(args) -> int:
    cfg = _load_config(args)
    companion = None
    if not args.no_companion:
        # pair-link rerun of the first seed; the higher-order terms need a
        # smaller step size and a longer horizon than the h2-only run
        companion = replace(
            cfg,
            link={"kind": "h2_h2L", "L": 2},
            seeds=(cfg.seeds[0],),
            eta_c=args.companion_eta_c,
            T_max=args.companion_t_max,
        )
    report = experiment.ablation_h2_only(cfg, companion_cfg=companion)
    experiment.emit_ablation_outputs(report, cfg.out_dir)
    for rec in report.records:
        print(f"[ablation] seed={rec['seed']}: subspace={rec['subspace_recovered']} "
              f"max_ema={rec['max_ema_corr']:.3f} share_drift={rec['max_share_drift']:.3f}")
    for p in report.gates:
        print(f"[ablation] GATE: {p}")
    return EXIT_THRESHOLD if report.gates else EXIT_OK


def _cmd_gronwall(args) -> int:
    reports = {}
    failed = False
    for name, spec in gronwall.default_specs().items():
        rep = gronwall.verify_envelope(spec, trials=args.trials, seed=args.seed)
        margins = {
            k: list(v) for k, v in gronwall.check_conditions(spec).margins.items()
        }
        reports[name] = {
            "spec": asdict(spec),
            "stay_fraction": rep.stay_fraction,
            "stderr": rep.stderr,
            "theoretical_floor": rep.theoretical_floor,
            "condition_satisfied": rep.condition_satisfied,
            "passed": rep.passed,
            "margins": margins,
        }
        print(f"[gronwall] {name}: stay={rep.stay_fraction:.4f} "
              f"floor={rep.theoretical_floor:.4f} passed={rep.passed}")
        failed |= not rep.passed
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "gronwall.json")
        with open(path, "w") as fh:
            json.dump(reports, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"[gronwall] wrote {path}")
    return EXIT_THRESHOLD if failed else EXIT_OK


def _cmd_init_stats(args) -> int:
    reports = initstats.run_all(trials=args.trials, seed=args.seed)
    problems = []
    k1, k2 = reports["max_coordinate_K1"], reports["max_coordinate_K2"]
    if k1.frequency > k1.bound + 2 * k1.stderr:
        problems.append("max-coordinate violation frequency exceeds 4/d bound (K=1)")
    if k2.frequency > k2.bound + 2 * k2.stderr:
        problems.append("max-coordinate violation frequency exceeds 4/d^2 bound (K=2)")
    gap = reports["gap_existence"]
    if gap.frequency < 0.8 - 2 * gap.stderr:
        problems.append("gap-existence coverage below the calibrated 0.8 level")
    nr = reports["norm_ratio"]
    if nr.frequency < 0.99:
        problems.append("norm-ratio interval frequency below 0.99")
    blob = {name: asdict(rep) for name, rep in reports.items()}
    for name, rep in reports.items():
        print(f"[init-stats] {name}: freq={rep.frequency:.5f} bound={rep.bound:.5f}")
    for p in problems:
        print(f"[init-stats] GATE: {p}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "init_stats.json")
        with open(path, "w") as fh:
            json.dump(blob, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"[init-stats] wrote {path}")
    return EXIT_THRESHOLD if problems else EXIT_OK


def _cmd_gf_oracle(args) -> int:
    d, P = args.d, args.P
    w0 = np.full(d, 1.0 / d)
    traj = gf.integrate(
        w0, P=P, L=args.L, tau_max=args.tau_max, dt=args.dt,
        include_higher_order=not args.no_higher_order,
        record_stride=args.record_stride,
    )
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "gf_trajectory.csv")
    k = min(d, 16)
    header = ["tau"] + [f"w{i + 1}" for i in range(k)] + ["norm_ratio"]
    ratios = traj.norm_ratio()
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(len(traj)):
            row = [repr(float(traj.tau[i]))]
            row += [repr(float(v)) for v in traj.w[i, :k]]
            row.append(repr(float(ratios[i])))
            fh.write(",".join(row) + "\n")
    crossing = traj.first_crossing(1.0)
    print(f"[gf-oracle] wrote {path}; norm-ratio crossing of 1 at tau="
          f"{'n/a' if crossing is None else f'{crossing:.4f}'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mindex", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn in (("run", _cmd_run), ("scaling", _cmd_scaling), ("ablation", _cmd_ablation)):
        s = sub.add_parser(name)
        _add_study_args(s)
        s.set_defaults(fn=fn)
        if name == "ablation":
            s.add_argument("--no-companion", action="store_true",
                           help="skip the pair-link rerun of the first seed")
            s.add_argument("--companion-eta-c", type=float, default=1.5e-4)
            s.add_argument("--companion-t-max", type=int, default=2_500_000)

    s = sub.add_parser("gronwall-verify")
    s.add_argument("--trials", type=int, default=2000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default=None)
    s.set_defaults(fn=_cmd_gronwall)

    s = sub.add_parser("init-stats")
    s.add_argument("--trials", type=int, default=10_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default=None)
    s.set_defaults(fn=_cmd_init_stats)

    s = sub.add_parser("gf-oracle")
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--P", type=int, required=True)
    s.add_argument("--L", type=int, default=2)
    s.add_argument("--tau-max", type=float, default=4.0)
    s.add_argument("--dt", type=float, default=1e-3)
    s.add_argument("--record-stride", type=int, default=10)
    s.add_argument("--no-higher-order", action="store_true")
    s.add_argument("--out", default="out")
    s.set_defaults(fn=_cmd_gf_oracle)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # runtime errors -> exit 1 with context
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
