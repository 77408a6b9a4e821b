"""Command line front end.

Verbs: ``synth``, ``bounds``, ``calibrate``, ``cost``, ``simulate`` and
``preset <name>``.  Reports go to stdout as JSON; ``--out`` also writes a
result bundle.  Errors exit with a category code: 2 parse, 3 validation,
4 numerical convergence, 5 infeasible target, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Optional, Sequence

import numpy as np

from .bounds import bound_report
from .calibrate import (
    CalibrationTarget,
    epsilon_for_cost,
    epsilon_range_apriori,
    epsilon_range_aposteriori,
)
from .cost import expected_tracking_cost, total_private_cost
from .errors import DplqgError
from .io import ResultBundle, _jsonable, load_scenario, write_results
from .presets import PRESETS, case_study_scenario, run_preset
from .sim import run_monte_carlo
from .synthesis import spectral_radius, synthesize

logger = logging.getLogger("dplqg")


def _scenario(args):
    if args.scenario is None:
        return case_study_scenario(seed=args.seed)
    return load_scenario(args.scenario, seed=args.seed)


def _emit(args, name: str, report: dict, scenario=None, bundle: Optional[ResultBundle] = None) -> None:
    print(json.dumps(_jsonable(report), indent=2, sort_keys=True))
    if args.out:
        if bundle is None:
            bundle = ResultBundle(name=name, seed=scenario.seed if scenario else (args.seed or 0),
                                  scenario=scenario)
        bundle.reports[name] = report
        write_results(bundle, args.out)


def cmd_synth(args) -> None:
    sc = _scenario(args)
    net = sc.network()
    syn = synthesize(net)
    _emit(args, "synth", {
        "agents": len(sc.agents),
        "n": net.n,
        "m": net.m,
        "trace_K": float(np.trace(syn.K)),
        "closed_loop_spectral_radius": spectral_radius(net.A + net.B @ syn.L),
        "offset_norm": float(np.linalg.norm(syn.g)),
        "trace_sigma": float(np.trace(syn.Sigma)),
        "trace_sigma_bar": float(np.trace(syn.Sigma_bar)),
    }, sc)


def cmd_bounds(args) -> None:
    sc = _scenario(args)
    _emit(args, "bounds", bound_report(sc.network(), paper_literal=args.paper_literal).to_dict(), sc)


def cmd_calibrate(args) -> None:
    sc = _scenario(args)
    net = sc.network()
    if args.cost_cap is not None:
        syn = synthesize(net)
        eps = epsilon_for_cost(args.cost_cap, net, syn, args.delta, args.sensitivity)
        report = {"cost_cap": args.cost_cap, "epsilon_min": eps}
    else:
        if args.band is None:
            raise DplqgError("calibrate needs --band LOW HIGH or --cost-cap ALPHA")
        target = CalibrationTarget(delta=args.delta, sensitivity=args.sensitivity, band=tuple(args.band),
                                   quantity=args.quantity)
        if args.quantity == "apriori":
            rng = epsilon_range_apriori(target, net.A, net.W, net.C)
        else:
            rng = epsilon_range_aposteriori(target, net.n, net.W, net.C)
        report = rng.to_dict()
    _emit(args, "calibrate", report, sc)


def cmd_cost(args) -> None:
    sc = _scenario(args)
    net = sc.network()
    syn = synthesize(net)
    report = total_private_cost(net, syn).to_dict()
    report["expected_against_true_reference"] = expected_tracking_cost(net, syn)
    _emit(args, "cost", report, sc)


def cmd_simulate(args) -> None:
    sc = _scenario(args)
    traces = run_monte_carlo(sc, private=not args.nonprivate)
    bundle = ResultBundle(name="simulate", seed=sc.seed, scenario=sc)
    for t in traces:
        n = t.x.shape[1]
        cols = ([f"x{i}" for i in range(n)] + [f"xhat{i}" for i in range(n)] + [f"xprior{i}" for i in range(n)]
                + [f"y{i}" for i in range(t.y_tilde.shape[1])] + [f"u{i}" for i in range(t.u.shape[1])]
                + ["cost", "running_cost"])
        bundle.add_table(f"trace_run{t.run}", cols, np.column_stack(
            [t.x, t.x_hat, t.x_prior, t.y_tilde, t.u, t.cost, t.running_cost]))
    report = {"runs": len(traces), "final_average_cost": [t.final_average() for t in traces]}
    _emit(args, "simulate", report, sc, bundle)


def cmd_preset(args) -> None:
    bundle = run_preset(args.name, seed=args.seed)
    summary = {name: {"columns": t.columns, "rows": int(t.rows.shape[0])} for name, t in bundle.tables.items()}
    if args.out:
        write_results(bundle, args.out)
    print(json.dumps({"preset": args.name, "tables": summary}, indent=2, sort_keys=True))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", help="scenario JSON file (default: built-in case study)")
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("--out", help="directory for a result bundle")
    common.add_argument("--paper-literal", action="store_true",
                        help="use the printed channel sum sigma_i (not sigma_i^2) in the log-det lower bound")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="dplqg", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="verb", required=True)
    sub.add_parser("synth", parents=[common], help="controller and filter synthesis summary")
    sub.add_parser("bounds", parents=[common], help="leakage bounds with exact values")
    cal = sub.add_parser("calibrate", parents=[common], help="epsilon guidance for a target")
    cal.add_argument("--band", type=float, nargs=2, metavar=("LOW", "HIGH"))
    cal.add_argument("--quantity", choices=("apriori", "aposteriori"), default="apriori")
    cal.add_argument("--cost-cap", type=float)
    cal.add_argument("--delta", type=float, default=0.05)
    cal.add_argument("--sensitivity", type=float, default=1.0)
    sub.add_parser("cost", parents=[common], help="closed-form cost of privacy")
    sim = sub.add_parser("simulate", parents=[common], help="run the closed loop")
    sim.add_argument("--nonprivate", action="store_true", help="disable both privacy mechanisms")
    pre = sub.add_parser("preset", parents=[common], help="run a named experiment")
    pre.add_argument("name", choices=sorted(PRESETS))
    return parser


COMMANDS = {"synth": cmd_synth, "bounds": cmd_bounds, "calibrate": cmd_calibrate, "cost": cmd_cost,
            "simulate": cmd_simulate, "preset": cmd_preset}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.verb](args)
    except DplqgError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
