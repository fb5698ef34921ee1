"""Batch command-line front end.

Verbs: simulate, design-filter, learn, evaluate, reproduce-paper-bench
(as ``reproduce-paper``). Exit codes: 0 success, 1 numerical/solver
failure, 2 configuration or I/O error. All outputs are plain CSV/JSON;
plotting is left to external tools.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import scenario
from .errors import ConfigError, GreyboxError
from .estimator import FilterDesign
from .learner import LearnReport

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_CONFIG = 2


def _load_config(args) -> scenario.ScenarioConfig:
    seed = args.seed
    if args.config is None:
        d = scenario.default_config(seed=0 if seed is None else seed)
        return scenario.ScenarioConfig.from_dict(d)
    return scenario.ScenarioConfig.load(args.config, seed_override=seed)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    traj = scenario.stage_simulate(cfg)
    traj.to_csv(out / "training_trajectory.csv")
    _write_json(out / "training_trajectory_meta.json", {
        "t_final": cfg.t_train, "dt": cfg.dt, "seed": cfg.seed,
        "channels": {k: v.shape[1] for k, v in traj.channels.items()},
    })
    print(f"wrote {out / 'training_trajectory.csv'} "
          f"({traj.times.size} samples, dt={cfg.dt:g} s)")
    return EXIT_OK


def cmd_design_filter(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    fd = scenario.stage_design_filter(cfg)
    fd.save(out / "filter_design.json")
    print(f"wrote {out / 'filter_design.json'} "
          f"(lambda*={fd.lambda_star:.6g}, gamma*={fd.gamma_star:.6g}, "
          f"iss gain bound={fd.iss_gain_bound:.6g})")
    return EXIT_OK


def _selected_routes(args, cfg) -> list:
    if args.route == "all":
        return list(cfg.routes)
    return [args.route]


def cmd_learn(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    cfg.routes = _selected_routes(args, cfg)
    fd_path = out / "filter_design.json"
    fd = FilterDesign.load(fd_path) if fd_path.exists() else None
    reports = scenario.stage_learn(cfg, fd)
    for route, rep in reports.items():
        rep.save(out / f"learn_report_{route}.json")
        bound = "none" if rep.trace_W is None else f"{rep.trace_W:.6g}"
        print(f"{route}: J={rep.achieved_J:.6g} trW={bound} "
              f"abscissa={rep.spectral_abscissa:+.6g}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    cfg.routes = _selected_routes(args, cfg)
    reports = {}
    for route in cfg.routes:
        path = out / f"learn_report_{route}.json"
        if not path.exists():
            raise ConfigError(f"missing {path}; run the learn command first")
        reports[route] = LearnReport.load(path)
    evaluation = scenario.stage_evaluate(cfg, reports)
    _write_rmse_outputs(out, evaluation)
    for row in evaluation.table_rows():
        print("  ".join(str(v) for v in row))
    return EXIT_OK


def _write_rmse_outputs(out: Path, evaluation) -> None:
    rows = evaluation.table_rows()
    m = len(rows[0]) - 2
    with open(out / "rmse_table.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model"] + [f"rmse_y{i + 1}" for i in range(m)] + ["status"])
        writer.writerows(rows)
    _write_json(out / "rmse_table.json", evaluation.to_json_dict())
    names = list(evaluation.series)
    for j in range(m):
        with open(out / f"figure_output_{j + 1}.csv", "w", newline="",
                  encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t"] + [f"y_{name}" for name in names])
            for i, t in enumerate(evaluation.times):
                writer.writerow([repr(float(t))]
                                + [repr(float(evaluation.series[name][i, j]))
                                   for name in names])


def cmd_reproduce_paper(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    result = scenario.run_pipeline(cfg)
    result.fd.save(out / "filter_design.json")
    for route, rep in result.reports.items():
        rep.save(out / f"learn_report_{route}.json")
    _write_rmse_outputs(out, result.evaluation)
    _write_json(out / "norm_report.json", result.norm_report.to_json_dict())
    _write_json(out / "certificates.json",
                {k: v.to_json_dict() for k, v in result.certificates.items()})
    checks = scenario.grade_reproduction(result)
    failed = [name for name, ok in checks if not ok]
    print("RMSE table (per output):")
    for row in result.evaluation.table_rows():
        print("  " + "  ".join(f"{v:.6g}" if isinstance(v, float) else str(v)
                               for v in row))
    for name, ok in checks:
        print(f"[{'PASS' if ok else 'FAIL'}] {name}")
    print(f"{len(checks) - len(failed)}/{len(checks)} criteria passed; "
          f"outputs in {out}")
    return EXIT_OK if not failed else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="greybox",
        description="Grey-box LTI correction: estimate, learn, verify.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None,
                        help="scenario JSON (defaults to the shipped bench)")
    common.add_argument("--out", type=Path, default=Path("greybox_out"),
                        help="output directory (created if missing)")
    common.add_argument("--seed", type=int, default=None,
                        help="override the scenario seed")
    common.add_argument("--route", choices=["thm1", "thm2", "ls", "all"],
                        default="all", help="learner route selection")
    sub.add_parser("simulate", parents=[common],
                   help="simulate the true plant with training signals")
    sub.add_parser("design-filter", parents=[common],
                   help="synthesize the uncertainty/state estimation filter")
    sub.add_parser("learn", parents=[common],
                   help="estimate, extract data, and fit uncertainty models")
    sub.add_parser("evaluate", parents=[common],
                   help="RMSE of learned models against the true plant")
    sub.add_parser("reproduce-paper", parents=[common],
                   help="run the full shipped benchmark and grade it")
    return parser


_COMMANDS = {
    "simulate": cmd_simulate,
    "design-filter": cmd_design_filter,
    "learn": cmd_learn,
    "evaluate": cmd_evaluate,
    "reproduce-paper": cmd_reproduce_paper,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GreyboxError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
