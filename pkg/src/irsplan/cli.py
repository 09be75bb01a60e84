"""Command-line front end.

Exit codes: 0 success, 1 SNR target not met / infeasible, 2 input error,
3 numerical failure inside a solver.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from fractions import Fraction
from typing import Sequence

from .barrier import ConvergenceError, SolverOptions
from .channel import explicit_path_snr
from .deploy import Benchmark, FloorCache, SearchConfig, full_enumeration, optimize_deployment
from .routing import Router, brute_force_best_path, hop_gains
from .scenario import CostModel, Scenario, ScenarioError, load_scenario_file
from .snr import (
    DeploymentPlan,
    all_passive_path_snr,
    direct_snr,
    hybrid_path_snr,
    meets_target,
    total_cost,
)
from .tiles import brute_force_tiles, sequential_refine
from .units import to_db, to_linear

EXIT_OK, EXIT_INFEASIBLE, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3

CSV_FIELDS = ["gamma0_db", "scheme", "feasible", "total_cost", "cell_use_cost", "hardware_cost",
              "num_pirs", "num_airs", "sum_passive_tiles", "sum_active_tiles", "wall_ms"]

SCHEMES = {"joint": Benchmark.NONE, "bench1": Benchmark.ALL_PIRS_OPTIMIZED,
           "bench2": Benchmark.ALL_PIRS_EQUAL, "bench3": Benchmark.JOINT_EQUAL}


class InputError(Exception):
    pass


def _cells(text: str | None) -> list[int]:
    if not text:
        return []
    try:
        return sorted({int(t) for t in text.split(",") if t.strip()})
    except ValueError:
        raise InputError(f"expected comma-separated cell ids, got {text!r}") from None


def _number(value) -> str:
    if isinstance(value, Fraction):
        return str(value.numerator) if value.denominator == 1 else f"{float(value):.6g}"
    return str(value)


def _json_number(value):
    if isinstance(value, Fraction):
        return value.numerator if value.denominator == 1 else float(value)
    return value


def _load_plan(path: str) -> DeploymentPlan:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read plan file {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"plan file {path} is not valid JSON: {exc}") from None
    try:
        return DeploymentPlan.from_dict(doc)
    except ValueError as exc:
        raise InputError(f"malformed plan file {path}: {exc}") from None


def _solver(args) -> SolverOptions:
    return SolverOptions(tolerance=args.tolerance, max_newton_iters=args.max_newton_iters)


def _fmt_snr(snr) -> str:
    return "-inf" if snr is None else f"{to_db(snr):.3f}"


def _path_text(path) -> str:
    return "-".join(map(str, path)) if path else "-"


def _cost_dict(cost) -> dict:
    return {"total": _json_number(cost.total), "cell_use": _json_number(cost.cell_use),
            "hardware": _json_number(cost.hardware)}


def _cell_rows(solutions) -> list[dict]:
    return [{"cell": s.cell, "kind": str(s.kind), "path": list(s.path),
             "snr_db": None if s.snr_linear is None else to_db(s.snr_linear)} for s in solutions]


def _print_cells(solutions, gamma0=None, out=None):
    out = out or sys.stdout
    print(f"{'cell':>4}  {'kind':<12} {'snr_db':>9}  path", file=out)
    for s in solutions:
        flag = ""
        if gamma0 is not None and not meets_target(s.snr_linear, gamma0):
            flag = "  SHORT"
        print(f"{s.cell:>4}  {str(s.kind):<12} {_fmt_snr(s.snr_linear):>9}  {_path_text(s.path)}{flag}", file=out)


def _print_cost(cost, out=None):
    out = out or sys.stdout
    print(f"cost: total={_number(cost.total)} cell_use={_number(cost.cell_use)} "
          f"hardware={_number(cost.hardware)}", file=out)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_validate(args, scenario: Scenario) -> int:
    g = scenario.los_graph
    print(f"cells: {scenario.num_cells}  bs cell: {scenario.bs_cell}  "
          f"candidates: {sorted(scenario.candidate_cells)}")
    print(f"graph: {len(g.vertices)} vertices, {len(g.edges)} edges")
    print(f"C0 = {scenario.radio.c0:.6g}  C_A = {scenario.radio.ca:.6g}  max_tiles = {scenario.max_tiles}")
    direct = [j for j in range(scenario.num_cells) if (0, j) in scenario.los_user_pairs]
    print(f"direct coverage: {direct}")
    return EXIT_OK


def cmd_evaluate(args, scenario: Scenario) -> int:
    plan = _load_plan(args.plan)
    try:
        plan.check_against(scenario)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    gamma0 = None if args.gamma0_db is None else to_linear(args.gamma0_db)
    cells = Router(scenario, plan).all_cells()
    cost = total_cost(plan, scenario.costs)
    short = [s for s in cells if gamma0 is not None and not meets_target(s.snr_linear, gamma0)]
    if args.json:
        json.dump({"cells": _cell_rows(cells), "cost": _cost_dict(cost),
                   "shortfall": [s.cell for s in short]}, sys.stdout, indent=2)
        print()
    else:
        _print_cells(cells, gamma0)
        _print_cost(cost)
        if short:
            print(f"target {args.gamma0_db} dB missed in cells: " +
                  ", ".join(f"{s.cell} ({_fmt_snr(s.snr_linear)} dB)" for s in short))
    return EXIT_INFEASIBLE if short else EXIT_OK


def _tile_output(args, scenario, sol, label: str) -> int:
    if sol is None:
        if args.json:
            json.dump({"feasible": False}, sys.stdout)
            print()
        else:
            print(f"{label}: infeasible at {args.gamma0_db} dB even with {scenario.max_tiles} tiles everywhere")
        return EXIT_INFEASIBLE
    if args.json:
        json.dump({"feasible": True, "plan": sol.plan.to_dict(),
                   "cost": _cost_dict(sol.cost)}, sys.stdout, indent=2)
        print()
    else:
        tiles = ", ".join(f"{c}:{t}{'A' if sol.plan.is_active(c) else 'P'}" for c, t in sorted(sol.plan.tiles.items()))
        print(f"tiles: {tiles or '-'}")
        _print_cost(sol.cost)
    if args.plan_out:
        _write_plan(args.plan_out, sol.plan)
    return EXIT_OK


def _locations(args, scenario):
    passive, active = _cells(args.passive), _cells(args.active)
    both = set(passive) & set(active)
    if both:
        raise InputError(f"cells {sorted(both)} listed as both passive and active")
    unknown = (set(passive) | set(active)) - scenario.candidate_cells
    if unknown:
        raise InputError(f"cells {sorted(unknown)} hold no candidate location")
    return passive, active


def cmd_optimize_tiles(args, scenario: Scenario) -> int:
    passive, active = _locations(args, scenario)
    sol = sequential_refine(scenario, passive, active, to_linear(args.gamma0_db), _solver(args))
    return _tile_output(args, scenario, sol, "optimize-tiles")


def _write_plan(path: str, plan: DeploymentPlan):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(plan.to_dict(), fh, indent=2)
        fh.write("\n")


def _report_output(args, report) -> int:
    if args.json:
        doc = {"feasible": report.feasible,
               "plan": report.plan.to_dict() if report.plan else None,
               "cost": _cost_dict(report.cost) if report.cost else None,
               "cells": _cell_rows(report.per_cell),
               "pairs": report.total_pairs, "examined": report.examined,
               "pruned_infeasible": report.pruned_infeasible, "pruned_bound": report.pruned_bound,
               "budget_exhausted": report.budget_exhausted, "wall_s": report.wall_time}
        json.dump(doc, sys.stdout, indent=2)
        print()
    else:
        if report.feasible:
            plan = report.plan
            print(f"passive: {dict(plan.passive) or '-'}  active: {dict(plan.active) or '-'}")
            _print_cost(report.cost)
            _print_cells(report.per_cell)
        else:
            print(f"no feasible deployment at {args.gamma0_db} dB")
        print(f"pairs: {report.total_pairs}  solved: {report.examined}  pruned (infeasible/bound): "
              f"{report.pruned_infeasible}/{report.pruned_bound}  time: {report.wall_time:.2f} s"
              + ("  [budget exhausted]" if report.budget_exhausted else ""))
    if report.feasible and args.plan_out:
        _write_plan(args.plan_out, report.plan)
    return EXIT_OK if report.feasible else EXIT_INFEASIBLE


def _search_config(args, benchmark: Benchmark, gamma0: float) -> SearchConfig:
    return SearchConfig(gamma0, benchmark, args.equal_tiles_passive, args.equal_tiles_active,
                        getattr(args, "workers", 1), getattr(args, "budget", None), _solver(args))


def cmd_optimize(args, scenario: Scenario) -> int:
    config = _search_config(args, Benchmark.from_number(args.benchmark), to_linear(args.gamma0_db))
    return _report_output(args, optimize_deployment(scenario, config))


def _frange(start: float, stop: float, step: float) -> list[float]:
    if step <= 0:
        raise InputError("--step must be positive")
    if start > stop:
        raise InputError("--from must not exceed --to")
    n = int(math.floor((stop - start) / step + 1e-9))
    return [round(start + k * step, 10) for k in range(n + 1)]


def cmd_sweep(args, scenario: Scenario) -> int:
    schemes = [s.strip() for s in args.schemes.split(",") if s.strip()]
    bad = [s for s in schemes if s not in SCHEMES]
    if bad or not schemes:
        raise InputError(f"unknown schemes {bad}; choose from {sorted(SCHEMES)}")
    values = _frange(args.start, args.stop, args.step)
    fields = list(CSV_FIELDS)
    if args.var == "active_tile_cost":
        if args.gamma0_db is None:
            raise InputError("--gamma0-db is required when sweeping active_tile_cost")
        fields.append("active_tile_cost")
    cache = FloorCache()
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        writer = csv.DictWriter(out, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for value in values:
            if args.var == "gamma0_db":
                gamma0_db, sc = value, scenario
            else:
                gamma0_db = args.gamma0_db
                c = scenario.costs
                ca = Fraction(str(value))
                ca = ca.numerator if ca.denominator == 1 else ca
                sc = scenario.with_costs(CostModel(c.cell_use_passive, c.cell_use_active, c.per_tile_passive, ca))
            for name in schemes:
                config = _search_config(args, SCHEMES[name], to_linear(gamma0_db))
                rep = optimize_deployment(sc, config, cache)
                row = {"gamma0_db": gamma0_db, "scheme": name, "feasible": int(rep.feasible),
                       "wall_ms": f"{rep.wall_time * 1000:.1f}"}
                if rep.feasible:
                    row.update(total_cost=_number(rep.cost.total), cell_use_cost=_number(rep.cost.cell_use),
                               hardware_cost=_number(rep.cost.hardware), num_pirs=len(rep.plan.passive),
                               num_airs=len(rep.plan.active), sum_passive_tiles=sum(rep.plan.passive.values()),
                               sum_active_tiles=sum(rep.plan.active.values()))
                if args.var == "active_tile_cost":
                    row["active_tile_cost"] = value
                writer.writerow(row)
                out.flush()
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_oracle(args, scenario: Scenario) -> int:
    if args.what == "snr":
        plan = _load_plan(args.plan)
        try:
            path = [int(t) for t in args.path.split(",")]
        except ValueError:
            raise InputError(f"--path must be comma-separated vertex ids, got {args.path!r}") from None
        mids = path[1:-1]
        active = [v for v in mids if plan.is_active(v)]
        try:
            explicit = explicit_path_snr(scenario, plan, path)
        except ValueError as exc:
            raise InputError(str(exc)) from None
        if not mids:
            closed = direct_snr(scenario, path[-1] - scenario.num_cells)
        elif active:
            closed = hybrid_path_snr(scenario.radio, hop_gains(scenario, tuple(path)),
                                     [plan.tiles[v] for v in mids], mids.index(active[0]) + 1)
        else:
            closed = all_passive_path_snr(scenario.radio, hop_gains(scenario, tuple(path)),
                                          [plan.tiles[v] for v in mids])
        rel = abs(explicit - closed) / closed
        print(f"explicit: {to_db(explicit):.6f} dB  closed form: {to_db(closed):.6f} dB  rel. diff: {rel:.2e}")
        return EXIT_OK
    if args.what == "path":
        plan = _load_plan(args.plan)
        cells = [args.cell] if args.cell is not None else range(scenario.num_cells)
        router = Router(scenario, plan)
        mismatch = 0
        print(f"{'cell':>4}  {'kind':<12} {'oracle_db':>9} {'routed_db':>9}  path")
        for j in cells:
            ref, got = brute_force_best_path(scenario, plan, j), router.overall(j)
            same = (ref.kind == got.kind and
                    (ref.snr_linear is None) == (got.snr_linear is None) and
                    (ref.snr_linear is None or math.isclose(ref.snr_linear, got.snr_linear, rel_tol=1e-9)))
            mismatch += not same
            print(f"{j:>4}  {str(ref.kind):<12} {_fmt_snr(ref.snr_linear):>9} {_fmt_snr(got.snr_linear):>9}  "
                  f"{_path_text(ref.path)}{'' if same else '  MISMATCH'}")
        return EXIT_NUMERIC if mismatch else EXIT_OK
    if args.what == "tiles":
        passive, active = _locations(args, scenario)
        sol = brute_force_tiles(scenario, passive, active, to_linear(args.gamma0_db))
        return _tile_output(args, scenario, sol, "oracle tiles")
    if args.what == "deploy":
        config = _search_config(args, Benchmark.from_number(args.benchmark), to_linear(args.gamma0_db))
        return _report_output(args, full_enumeration(scenario, config))
    raise InputError(f"unknown oracle {args.what!r}")


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="irsplan", description="Joint passive/active IRS deployment planner.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, solver=False):
        p.add_argument("scenario", help="scenario JSON file")
        if solver:
            defaults = SolverOptions()
            p.add_argument("--tolerance", type=float, default=defaults.tolerance,
                           help="barrier duality-measure tolerance (default %(default)g)")
            p.add_argument("--max-newton-iters", type=int, default=defaults.max_newton_iters,
                           help="Newton-step cap per relaxation solve (default %(default)d)")
        return p

    def search_opts(p):
        p.add_argument("--benchmark", type=int, choices=(1, 2, 3), default=None,
                       help="1: all-PIRS optimized tiles, 2: all-PIRS equal tiles, 3: joint equal tiles")
        p.add_argument("--equal-tiles-passive", type=int, default=4)
        p.add_argument("--equal-tiles-active", type=int, default=1)
        p.add_argument("--json", action="store_true", help="machine-readable output")
        p.add_argument("--plan-out", help="write the chosen plan to this JSON file")

    common(sub.add_parser("validate", help="check a scenario file and summarize it"))

    p = common(sub.add_parser("evaluate", help="per-cell SNR and cost of a plan"))
    p.add_argument("--plan", required=True)
    p.add_argument("--gamma0-db", type=float, default=None, help="report cells below this target (exit 1)")
    p.add_argument("--json", action="store_true")

    p = common(sub.add_parser("optimize-tiles", help="tile counts for fixed locations"), solver=True)
    p.add_argument("--passive", default="")
    p.add_argument("--active", default="")
    p.add_argument("--gamma0-db", type=float, required=True)
    p.add_argument("--json", action="store_true")
    p.add_argument("--plan-out")

    p = common(sub.add_parser("optimize", help="joint location and tile optimization"), solver=True)
    p.add_argument("--gamma0-db", type=float, required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--budget", type=int, default=None, help="max tile subproblems to solve")
    search_opts(p)

    p = common(sub.add_parser("sweep", help="cost versus SNR target or active tile cost, as CSV"), solver=True)
    p.add_argument("--var", choices=("gamma0_db", "active_tile_cost"), required=True)
    p.add_argument("--from", dest="start", type=float, required=True)
    p.add_argument("--to", dest="stop", type=float, required=True)
    p.add_argument("--step", type=float, required=True)
    p.add_argument("--schemes", default="joint,bench1,bench2,bench3")
    p.add_argument("--gamma0-db", type=float, default=None, help="fixed target for active_tile_cost sweeps")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--equal-tiles-passive", type=int, default=4)
    p.add_argument("--equal-tiles-active", type=int, default=1)
    p.add_argument("--out", help="CSV file (default: stdout)")

    p = sub.add_parser("oracle", help="exhaustive reference computations")
    p.add_argument("what", choices=("snr", "path", "tiles", "deploy"))
    common(p, solver=True)
    p.add_argument("--plan", help="plan file (snr, path)")
    p.add_argument("--path", help="comma-separated vertex sequence (snr)")
    p.add_argument("--cell", type=int, default=None, help="single cell (path)")
    p.add_argument("--passive", default="")
    p.add_argument("--active", default="")
    p.add_argument("--gamma0-db", type=float, default=None)
    search_opts(p)
    return parser


COMMANDS = {"validate": cmd_validate, "evaluate": cmd_evaluate, "optimize-tiles": cmd_optimize_tiles,
            "optimize": cmd_optimize, "sweep": cmd_sweep, "oracle": cmd_oracle}


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        if args.command == "oracle":
            needs = {"snr": ("plan", "path"), "path": ("plan",), "tiles": ("gamma0_db",), "deploy": ("gamma0_db",)}
            missing = [n for n in needs[args.what] if getattr(args, n) is None]
            if missing:
                raise InputError(f"oracle {args.what} needs --{', --'.join(m.replace('_', '-') for m in missing)}")
        scenario = load_scenario_file(args.scenario)
        return COMMANDS[args.command](args, scenario)
    except (InputError, ScenarioError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ConvergenceError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
