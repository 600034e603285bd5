"""Command-line entry point: run, validate, and case-study subcommands."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import casestudy as cs
from .errors import ConfigError
from .scenarios import (
    EXIT_CONFIG,
    EXIT_INFEASIBLE,
    EXIT_OK,
    load_scenario,
    run_scenario,
    write_csv,
    write_json,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgelam-sim",
        description="Deterministic edge-LAM deployment simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario config")
    run_p.add_argument("--config", required=True, help="scenario JSON file")
    run_p.add_argument("--out", required=True, help="output directory")
    run_p.add_argument("--seed", type=int, default=None, help="override the config seed")

    val_p = sub.add_parser("validate", help="parse and validate a scenario config")
    val_p.add_argument("--config", required=True, help="scenario JSON file")

    case_p = sub.add_parser("casestudy", help="token-budget sweep / calibration")
    case_p.add_argument(
        "--budgets", default="64,128,256",
        help="comma-separated per-device token budgets",
    )
    case_p.add_argument(
        "--calibrate", action="store_true",
        help="calibrate the model to the reported reductions before sweeping",
    )
    case_p.add_argument(
        "--targets", default="0.708,0.596",
        help="mem,lat reduction targets used with --calibrate",
    )
    case_p.add_argument("--out", default=None, help="optional output directory")
    return parser


def _cmd_validate(args) -> int:
    try:
        scenario = load_scenario(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"ok: kind={scenario.kind} seed={scenario.seed}")
    return EXIT_OK


def _cmd_casestudy(args) -> int:
    try:
        budgets = [int(b) for b in args.budgets.split(",") if b]
        mem_t, lat_t = (float(t) for t in args.targets.split(","))
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not budgets:
        print("config error: no budgets given", file=sys.stderr)
        return EXIT_CONFIG
    if args.calibrate:
        result = cs.calibrate_casestudy((mem_t, lat_t))
        if result.model is None:
            print(f"infeasible: {result.message}", file=sys.stderr)
            return EXIT_INFEASIBLE
        model = result.model
        print(
            f"calibrated: N={model.n_total} gamma_handoff={model.gamma_handoff:.6g}s "
            f"base_mem={model.base_mem:.6g}B "
            f"(mem_reduction={result.achieved_mem_reduction:.3f}, "
            f"lat_reduction={result.achieved_lat_reduction:.3f}) {result.message}"
        )
    else:
        model = cs.TokenBudgetModel(
            n_total=608, t_budget=min(budgets),
            alpha_mem=cs.DEFAULT_ALPHA_MEM, beta_comp=cs.DEFAULT_BETA_COMP,
            gamma_handoff=0.03, base_mem=1e4,
        )
    try:
        rows = cs.casestudy_sweep(model, budgets)
    except (ValueError, ConfigError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    header = f"{'T':>6} {'devices':>8} {'mem_red':>9} {'lat_red':>9} {'norm_cost':>10}"
    print(header)
    for r in rows:
        print(
            f"{r.t_budget:>6} {r.device_count:>8} {r.mem_reduction:>9.3f} "
            f"{r.lat_reduction:>9.3f} {r.combined_normalized_cost:>10.4f}"
        )
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(
            out / "casestudy_sweep.csv",
            ["max_tokens", "device_count", "mem_reduction", "lat_reduction",
             "combined_normalized_cost"],
            [
                [r.t_budget, r.device_count, r.mem_reduction, r.lat_reduction,
                 r.combined_normalized_cost]
                for r in rows
            ],
        )
        write_json(
            out / "casestudy_model.json",
            {
                "n_total": model.n_total,
                "t_budget": model.t_budget,
                "alpha_mem": model.alpha_mem,
                "beta_comp": model.beta_comp,
                "gamma_handoff": model.gamma_handoff,
                "base_mem": model.base_mem,
                "compute_rate": model.compute_rate,
            },
        )
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return run_scenario(args.config, args.out, seed=args.seed)
    if args.command == "validate":
        return _cmd_validate(args)
    if args.command == "casestudy":
        return _cmd_casestudy(args)
    return EXIT_CONFIG  # pragma: no cover


if __name__ == "__main__":
    sys.exit(main())
