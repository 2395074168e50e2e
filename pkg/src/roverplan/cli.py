"""Command-line front end: solve, sweep, export, plot, replay.

Exit codes: 0 success (certified where that applies), 1 file or schema
problems, 2 degraded-but-written results (budget-limited solve, replay
violation). The CLI defaults to tx_index="new_cell" so the uplink cost of a
first visit shows up in both modes; library callers get "as_printed" unless
they ask otherwise.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import milp
from .dynamics import (
    PlanMismatchError,
    format_plan,
    format_trace_csv,
    parse_plan,
    replay,
)
from .experiments import SweepSpec, format_csv, parse_sweep, run_sweep
from .plotting import PlotError, render_csv
from .scenario import ScenarioError, load_scenario, scenario_digest, with_mode
from .solver import (
    DEFAULT_NODE_BUDGET,
    InfeasibleHorizonError,
    solve_exact,
    solve_greedy,
)


class _CliError(Exception):
    """Carries a diagnostic for exit code 1."""


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--mode", choices=("oros", "slam"), default=None,
                        help="override the scenario's mode")
    parser.add_argument("--greedy", action="store_true",
                        help="use the frontier heuristic instead of exact search")
    parser.add_argument("--node-budget", type=int, default=None,
                        metavar="N", help="exact-search node limit")
    parser.add_argument("--tx-index", choices=("as_printed", "new_cell"),
                        default=None,
                        help="which cell's uplink tier a first visit pays "
                             "(default new_cell; replay follows the plan file)")
    parser.add_argument("--clamp-charge", action="store_true",
                        help="cap charge intake at the battery ceiling")
    parser.add_argument("--out", type=Path, default=None, metavar="PATH",
                        help="output path (subcommand-specific default)")
    parser.add_argument("--workers", type=int, default=1, metavar="N",
                        help="parallel workers; output is identical for any N")
    parser.add_argument("--seedless", action="store_true",
                        help="reserved: runs are seedless by construction")


def _load(path: Path, mode: str | None):
    try:
        config = load_scenario(path.read_text())
    except OSError as err:
        raise _CliError(f"cannot read scenario {path}: {err}") from err
    except ScenarioError as err:
        raise _CliError(f"bad scenario {path}: {err}") from err
    if mode is not None:
        config = with_mode(config, mode.upper())
    return config


def cmd_solve(args: argparse.Namespace) -> int:
    config = _load(args.scenario, args.mode)
    tx_index = args.tx_index or "new_cell"
    budget = args.node_budget if args.node_budget is not None else DEFAULT_NODE_BUDGET
    try:
        if args.greedy:
            res = solve_greedy(config, tx_index=tx_index,
                               clamp_charge=args.clamp_charge)
        else:
            res = solve_exact(config, tx_index=tx_index,
                              clamp_charge=args.clamp_charge,
                              node_budget=budget, workers=args.workers)
    except InfeasibleHorizonError as err:
        raise _CliError(
            f"no plan survives the horizon; longest feasible prefix is "
            f"{err.max_feasible_epoch} epochs"
        ) from err
    base = args.out if args.out is not None else args.scenario.with_suffix("")
    plan_path = base.with_suffix(".plan")
    trace_path = base.with_suffix(".trace.csv")
    try:
        plan_path.write_text(
            format_plan(res.plan, tx_index=tx_index, clamp_charge=args.clamp_charge)
        )
        trace_path.write_text(format_trace_csv(res.trace))
    except OSError as err:
        raise _CliError(f"cannot write outputs: {err}") from err
    cells = res.trace.explored_total
    total = config.grid.n_cells
    bats = " ".join(
        f"r{i + 1}={b:.2f}" for i, b in enumerate(res.final_batteries_j)
    )
    print(f"digest: {scenario_digest(config)}")
    print(f"mode: {config.mode}")
    print(f"method: {res.method}")
    print(f"objective: {res.objective}")
    print(f"explored: {cells}/{total} ({res.explored_fraction * 100:.2f}%)")
    print(f"completion_epoch: {res.completion_epoch}")
    print(f"final_battery_j: {bats}")
    print(f"nodes_expanded: {res.nodes_expanded}")
    print(f"certified: {'yes' if res.certified else 'no'}")
    print(f"plan: {plan_path}")
    print(f"trace: {trace_path}")
    return 0 if res.certified or args.greedy else 2


def cmd_sweep(args: argparse.Namespace) -> int:
    try:
        spec = parse_sweep(args.sweep.read_text(), base_dir=args.sweep.parent)
    except OSError as err:
        raise _CliError(f"cannot read sweep {args.sweep}: {err}") from err
    except ScenarioError as err:
        raise _CliError(f"bad sweep {args.sweep}: {err}") from err
    if args.node_budget is not None:
        spec = SweepSpec(base=spec.base, key=spec.key, values=spec.values,
                         modes=spec.modes, node_budget=args.node_budget)
    records = run_sweep(spec, tx_index=args.tx_index or "new_cell",
                        clamp_charge=args.clamp_charge, workers=args.workers)
    text = format_csv(records)
    if args.out is not None:
        try:
            args.out.write_text(text)
        except OSError as err:
            raise _CliError(f"cannot write {args.out}: {err}") from err
        print(f"wrote {args.out} ({len(records)} rows)")
    else:
        print(text, end="")
    return 2 if any("budget" in r.status for r in records) else 0


def cmd_export(args: argparse.Namespace) -> int:
    config = _load(args.scenario, args.mode)
    instance = milp.encode(config, tx_index=args.tx_index or "new_cell")
    out = args.out if args.out is not None else args.scenario.with_suffix(".mps")
    try:
        out.write_text(milp.write_model(instance))
    except OSError as err:
        raise _CliError(f"cannot write {out}: {err}") from err
    families: dict[str, int] = {}
    for var in instance.variables:
        fam = var.name.split("_", 1)[0]
        families[fam] = families.get(fam, 0) + 1
    counts = " ".join(f"{k}={v}" for k, v in sorted(families.items()))
    print(
        f"wrote {out}: {len(instance.variables)} variables "
        f"({counts}), {len(instance.rows)} rows"
    )
    return 0


def cmd_plot(args: argparse.Namespace) -> int:
    try:
        text = args.csv.read_text()
    except OSError as err:
        raise _CliError(f"cannot read CSV {args.csv}: {err}") from err
    try:
        svg = render_csv(text)
    except PlotError as err:
        raise _CliError(str(err)) from err
    out = args.out if args.out is not None else args.csv.with_suffix(".svg")
    try:
        out.write_text(svg)
    except OSError as err:
        raise _CliError(f"cannot write {out}: {err}") from err
    print(f"wrote {out}")
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    config = _load(args.scenario, args.mode)
    try:
        doc = parse_plan(args.plan.read_text())
    except OSError as err:
        raise _CliError(f"cannot read plan {args.plan}: {err}") from err
    except ValueError as err:
        raise _CliError(f"bad plan {args.plan}: {err}") from err
    tx_index = args.tx_index or doc.tx_index
    clamp = args.clamp_charge or doc.clamp_charge
    try:
        report = replay(doc.plan, config, tx_index=tx_index, clamp_charge=clamp)
    except PlanMismatchError as err:
        raise _CliError(str(err)) from err
    if not report.ok:
        v = report.violation
        print(
            f"violation: {v.constraint} at epoch {v.epoch}"
            + (f" robot {v.robot}" if v.robot is not None else "")
            + f": {v.detail}"
        )
        return 2
    text = format_trace_csv(report.trace)
    if args.out is not None:
        try:
            args.out.write_text(text)
        except OSError as err:
            raise _CliError(f"cannot write {args.out}: {err}") from err
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    print(f"replay ok: objective {report.trace.objective}, "
          f"{report.trace.explored_total} cells explored")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roverplan",
        description="energy-aware multi-robot exploration planner",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one scenario, write plan and trace")
    p.add_argument("scenario", type=Path)
    _common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="run a parameter sweep, emit CSV")
    p.add_argument("sweep", type=Path)
    _common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("export", help="write the exploration MILP as fixed-form MPS")
    p.add_argument("scenario", type=Path)
    _common(p)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("plot", help="render a sweep or trace CSV as SVG")
    p.add_argument("csv", type=Path)
    _common(p)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("replay", help="validate a plan file against a scenario")
    p.add_argument("scenario", type=Path)
    p.add_argument("plan", type=Path)
    _common(p)
    p.set_defaults(func=cmd_replay)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
