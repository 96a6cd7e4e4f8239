"""Command line interface.

Subcommands: validate-a, contract, sweep, dual-check, ot.  Each reads one
JSON config (where applicable), writes CSV plus a JSON summary with content
hashes into the output directory, and renders figures next to the delimited
output unless --no-plots is given.

Exit codes: 0 success / pass, 2 assertion or inequality failure (a witness is
printed), 1 usage or configuration error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import report
from .config import ConfigError, load_config
from .experiments import run_contract, run_dual_check, run_sweep, run_validate
from .measures import EmpiricalMeasure, Space
from .otsolver import CostFunction, transport_cost

USAGE_ERROR, FAILURE = 1, 2


def _out_dir(args) -> str:
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def _summary(path, cfg, outputs: dict, extra: dict):
    body = {
        "config_sha256": report.config_sha256(cfg),
        "outputs": {
            name: {"git_sha1": report.git_blob_sha1(payload), "bytes": len(payload)}
            for name, payload in outputs.items()
        },
    }
    body.update(extra)
    report.write_json(path, body)


def _load_with_overrides(args, seed_in_sim: bool = False) -> dict:
    cfg = load_config(args.config)
    if args.seed is not None:
        if seed_in_sim:
            cfg.setdefault("sim", {})["seed"] = args.seed
        else:
            cfg["seed"] = args.seed
    return cfg


def cmd_validate_a(args) -> int:
    cfg = load_config(args.config)
    model, level, rep = run_validate(cfg)
    out = _out_dir(args)
    payload = {}
    if rep is None:
        print(f"{model.name}: untruncated cost, nothing to validate")
        verdict = {"model": model.name, "truncation": level, "valid": True, "vacuous": True}
    else:
        print(f"{model.name}: truncation {level:g} -> {rep}")
        verdict = {
            "model": model.name,
            "truncation": level,
            "valid": rep.valid,
            "vacuous": rep.vacuous,
            "bound": rep.bound if np.isfinite(rep.bound) else None,
            "witness": None if rep.witness is None else [w.tolist() for w in rep.witness],
        }
    _summary(os.path.join(out, "validate_a_summary.json"), cfg, payload, verdict)
    if rep is not None and not rep.valid:
        return FAILURE
    return 0


def cmd_contract(args) -> int:
    cfg = _load_with_overrides(args, seed_in_sim=True)
    if args.replicas is not None:
        cfg.setdefault("sim", {})["replicas"] = args.replicas
    res = run_contract(cfg)
    out = _out_dir(args)
    header = [
        "time", "exact_ot", "mean_coupled_cost", "stderr",
        "ot_pairs_mean_cost", "n_pairs", "common_events", "solo_events",
    ]
    rows = [
        [t, eo, mc, se, om, res.n_pairs, ce, so]
        for t, eo, mc, se, om, ce, so in zip(
            res.times, res.exact_ot, res.mean_cost, res.stderr,
            res.ot_pairs_mean, res.common_events, res.solo_events,
        )
    ]
    csv_path = os.path.join(out, "contract.csv")
    payload = report.write_csv(csv_path, header, rows)
    extra = {
        "model": res.model_name,
        "truncation": res.truncation if np.isfinite(res.truncation) else None,
        "initial_transport_cost": res.initial_cost,
        "structural_ok": res.structural_ok,
        "monotone_ok": res.monotone_ok,
        "fraction_with_event": float(res.fraction_with_event[-1]),
        "pass": res.passed,
    }
    _summary(os.path.join(out, "contract_summary.json"), cfg, {"contract.csv": payload}, extra)
    if not args.no_plots:
        report.contract_figure(res, os.path.join(out, "contract.png"))
    status = "PASS" if res.passed else "FAIL"
    print(
        f"{res.model_name}: cost {res.mean_cost[0]:.6g} -> {res.mean_cost[-1]:.6g}, "
        f"structural {'ok' if res.structural_ok else 'VIOLATED'}, "
        f"monotone {'ok' if res.monotone_ok else 'VIOLATED'} [{status}]"
    )
    return 0 if res.passed else FAILURE


def cmd_sweep(args) -> int:
    cfg = _load_with_overrides(args)
    rows = run_sweep(cfg)
    out = _out_dir(args)
    header = ["model", "inequality", "samples", "worst_margin", "mean_margin", "exact_integrals", "truncation"]
    table = [
        [r.model_name, r.inequality, r.samples, r.worst_margin, r.mean_margin,
         r.exact_integrals, r.truncation]
        for r in rows
    ]
    payload = report.write_csv(os.path.join(out, "sweep.csv"), header, table)
    ok = all(r.passed for r in rows)
    extra = {
        "pass": ok,
        "worst": {r.model_name: r.worst_margin for r in rows},
        "witnesses": {r.model_name: r.witness for r in rows if r.witness is not None},
    }
    _summary(os.path.join(out, "sweep_summary.json"), cfg, {"sweep.csv": payload}, extra)
    if not args.no_plots:
        report.sweep_figure(rows, os.path.join(out, "sweep.png"))
    for r in rows:
        print(
            f"{r.model_name:22s} {r.inequality:28s} worst {r.worst_margin:+.3e} "
            f"[{'PASS' if r.passed else 'FAIL'}]"
        )
        if r.witness is not None:
            print(f"  witness: {r.witness}")
    return 0 if ok else FAILURE


def cmd_dual_check(args) -> int:
    cfg = _load_with_overrides(args)
    res = run_dual_check(cfg)
    out = _out_dir(args)
    trace = report.write_csv(
        os.path.join(out, "dual_psi0.csv"), ["time", "psi0"],
        list(zip(res.t_grid, res.psi0)),
    )
    cc = res.crosscheck
    summary_rows = [[cc.lhs, cc.rhs, cc.mc_stderr, cc.discretization_budget, cc.tolerance, cc.passed]]
    check = report.write_csv(
        os.path.join(out, "dual_check.csv"),
        ["lhs", "rhs", "mc_stderr", "disc_budget", "tolerance", "pass"],
        summary_rows,
    )
    extra = {
        "lhs": cc.lhs, "rhs": cc.rhs, "tolerance": cc.tolerance,
        "support_radius": res.support_radius, "sup_ratio": res.sup_ratio,
        "pass": cc.passed,
    }
    _summary(
        os.path.join(out, "dual_check_summary.json"), cfg,
        {"dual_psi0.csv": trace, "dual_check.csv": check}, extra,
    )
    if not args.no_plots:
        report.dual_figure(res, os.path.join(out, "dual_check.png"))
    print(
        f"duality cross-check: lhs {cc.lhs:.6g}, rhs {cc.rhs:.6g}, "
        f"tolerance {cc.tolerance:.3g} [{'PASS' if cc.passed else 'FAIL'}]"
    )
    return 0 if cc.passed else FAILURE


_OT_SPACES = {
    "trunc_abs": lambda cols: Space("age"),
    "trunc_abs_state": lambda cols: None,  # filled after reading states
    "trunc_sum": lambda cols: Space("age_size") if cols == 2 else Space("age_position", dim=cols - 1),
    "trunc_weighted": lambda cols: Space("time_pair"),
    "power": lambda cols: Space("trait", dim=cols),
}


def _read_measure_csv(path, variant):
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except OSError:
        raise ConfigError(f"measure file not found: {path}")
    except ValueError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}")
    if data.shape[1] < 2:
        raise ConfigError(f"{path}: need coordinate columns plus a weight column")
    coords, weights = data[:, :-1], data[:, -1]
    cols = coords.shape[1]
    if variant == "trunc_abs_state":
        space = Space("age_state", n_states=int(np.max(np.round(coords[:, 1]))))
    else:
        space = _OT_SPACES[variant](cols)
    try:
        return EmpiricalMeasure(space, coords, weights / weights.sum() if abs(weights.sum() - 1) > 1e-12 else weights)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}")


def cmd_ot(args) -> int:
    try:
        cost = CostFunction(args.variant, args.a if args.variant != "power" else np.inf, args.p)
    except ValueError as exc:
        raise ConfigError(str(exc))
    mu = _read_measure_csv(args.mu, args.variant)
    nu = _read_measure_csv(args.nu, args.variant)
    plan = transport_cost(mu, nu, cost)
    print(f"exact transport cost: {plan.cost!r}")
    if args.plan_out:
        report.write_csv(
            args.plan_out, ["src_index", "dst_index", "mass"],
            list(zip(plan.src_idx, plan.dst_idx, plan.mass)),
        )
        print(f"plan written to {args.plan_out} ({len(plan)} pairs)")
        if not args.no_plots:
            report.plan_figure(plan, str(args.plan_out) + ".png")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jumpflow",
        description="Jump-flow population models, exact truncated-cost transport, "
        "and coupling-based contraction experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="output directory (default: cwd)")
        p.add_argument("--no-plots", action="store_true", help="skip figure rendering")

    p = sub.add_parser("validate-a", help="run the truncation-level certificate")
    common(p)
    p.set_defaults(fn=cmd_validate_a)

    p = sub.add_parser("contract", help="end-to-end contraction experiment")
    common(p)
    p.add_argument("--replicas", type=int, default=None, help="override replica count")
    p.set_defaults(fn=cmd_contract)

    p = sub.add_parser("sweep", help="randomized inequality sweeps")
    common(p)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("dual-check", help="dual solver and duality cross-check")
    common(p)
    p.set_defaults(fn=cmd_dual_check)

    p = sub.add_parser("ot", help="exact transport cost between two atom-weight CSV files")
    p.add_argument("--mu", required=True, help="source measure CSV (coordinates..., weight)")
    p.add_argument("--nu", required=True, help="target measure CSV")
    p.add_argument("--variant", default="trunc_abs",
                   choices=["trunc_abs", "trunc_abs_state", "trunc_sum", "trunc_weighted", "power"])
    p.add_argument("--a", type=float, default=1.0, help="truncation level")
    p.add_argument("--p", type=float, default=1.0, help="power exponent (power variant)")
    p.add_argument("--plan-out", default=None, help="write the optimal plan CSV here")
    p.add_argument("--no-plots", action="store_true", help="skip figure rendering")
    p.set_defaults(fn=cmd_ot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE_ERROR if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except AssertionError as exc:
        print(f"verification failure: {exc}", file=sys.stderr)
        return FAILURE


if __name__ == "__main__":
    sys.exit(main())
