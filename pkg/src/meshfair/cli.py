"""Command line entry point.

Exit status: 0 success, 1 a tolerance check failed, 2 bad input, 3 the solver
failed.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__, report
from .exceptions import DomainError, ScenarioError, SolverError
from .oracle import GridSpec, grid_maxmin
from .scenario import load_scenario
from .sim import SimConfig, run_many
from .waterfill import METHODS, MODES, audit_theorem3, configure_network, waterfill

EXIT_OK, EXIT_TOLERANCE, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2, 3

log = logging.getLogger("meshfair")


def _write_manifest(out: Path, payload: dict) -> Path:
    path = out / "run_manifest.json"
    out.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({"meshfair_version": __version__, **payload}, indent=2, sort_keys=True) + "\n")
    return path


def _solve(sc, mode=None, method=None):
    mode = mode or sc.solver.mode
    method = method or sc.solver.method
    return waterfill(sc.topology, mode=mode, method=method, rtol=sc.solver.tolerance)


def _seeds(sc, count):
    return [sc.sim.seed + i for i in range(count)]


def _sim_config(sc, wlan_config, duration=None):
    cfg = SimConfig.from_options(sc.sim, wlan_config)
    if duration is not None:
        warm = min(cfg.warmup, duration / 2)
        cfg = replace(cfg, duration=float(duration), warmup=warm)
    return cfg


def cmd_solve(args) -> int:
    sc = load_scenario(args.scenario)
    res = _solve(sc, args.mode, args.method)
    audit = audit_theorem3(res, sc.topology)
    config = configure_network(res)
    out = Path(args.out)
    report.write_csv(out / "allocation.csv", report.ALLOCATION_COLUMNS, report.allocation_rows(res), sc.digest)
    report.write_csv(out / "wlan_config.csv", report.WLAN_CONFIG_COLUMNS, report.wlan_config_rows(config), sc.digest)
    _write_manifest(out, {"command": "solve", "scenario": sc.name, "scenario_hash": sc.digest,
                          "mode": res.mode, "method": res.method, "levels": res.levels,
                          "audit_passed": audit.passed, "audit_flags": audit.flags,
                          "audit_violations": audit.violations, "notes": res.notes})
    for f in res.rates:
        log.info("flow %s: %.6f Mbps, bottleneck %s, level %d", f, res.rates[f] / 1e6,
                 res.bottleneck[f], res.level_index[f])
    print(f"{sc.name}: {len(res.levels)} level(s) "
          + ", ".join(f"{v / 1e6:.6f}" for v in res.levels) + f" Mbps; audit {'passed' if audit.passed else 'FAILED'}")
    for msg in audit.flags:
        print(f"  flag: {msg}")
    for msg in audit.violations:
        print(f"  violation: {msg}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    sc = load_scenario(args.scenario)
    if args.wlan_config:
        config = report.read_wlan_config(args.wlan_config)
    else:
        config = configure_network(_solve(sc, args.mode))
    cfg = _sim_config(sc, config, args.duration)
    seeds = _seeds(sc, args.seeds)
    runs = run_many(sc.topology, config, cfg, seeds)
    out = Path(args.out)
    seed_label = seeds[0] if len(seeds) == 1 else f"{seeds[0]}..{seeds[-1]}"
    report.write_csv(out / "flows.csv", report.FLOWS_COLUMNS, report.flows_rows(runs), sc.digest, seed_label)
    report.write_csv(out / "wlan.csv", report.WLAN_COLUMNS, report.wlan_rows(runs), sc.digest, seed_label)
    _write_manifest(out, {
        "command": "simulate", "scenario": sc.name, "scenario_hash": sc.digest, "seeds": seeds,
        "duration": cfg.duration, "warmup": cfg.warmup, "window": cfg.window,
        "slots": {str(m.seed): dict(zip(m.channels, m.total_slots.astype(int).tolist())) for m in runs},
        "delivered": {str(m.seed): dict(zip(m.flow_ids, m.delivered.tolist())) for m in runs},
    })
    for m in runs:
        th = m.throughput()
        log.info("seed %d: %s", m.seed, ", ".join(f"{f}={v / 1e6:.4f}" for f, v in th.items()))
    print(f"{sc.name}: simulated {len(runs)} seed(s) for {cfg.duration:g} s")
    return EXIT_OK


def cmd_rate_region(args) -> int:
    ns = range(args.n_min, args.n_max + 1)
    out = Path(args.out)
    report.write_csv(out / "rate_region.csv", report.RATE_REGION_COLUMNS, report.rate_region_rows(ns, args.a))
    print(f"rate region for n={args.n_min}..{args.n_max}, a={args.a} written to {out / 'rate_region.csv'}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    sc = load_scenario(args.scenario)
    mode = args.mode or sc.solver.mode
    res = waterfill(sc.topology, mode=mode)
    orc = grid_maxmin(sc.topology, GridSpec(), mode=mode)
    worst = 0.0
    rows = []
    for f in sc.topology.flow_ids:
        err = orc.rates[f] / res.rates[f] - 1.0
        worst = max(worst, abs(err))
        rows.append((f, res.rates[f], orc.rates[f], err))
        print(f"  {f}: waterfill {res.rates[f]:.6g}  grid {orc.rates[f]:.6g}  rel err {err:+.2e}")
    if args.out:
        report.write_csv(Path(args.out) / "oracle.csv", ("flow", "waterfill", "grid", "rel_error"), rows, sc.digest)
    ok = worst <= args.tolerance
    print(f"worst relative difference {worst:.3e} ({'within' if ok else 'exceeds'} {args.tolerance:g})")
    return EXIT_OK if ok else EXIT_TOLERANCE


def cmd_compare(args) -> int:
    cmp = report.compare(args.allocation, args.flows, args.tolerance)
    for f, e in cmp.errors.items():
        print(f"  {f}: theory {cmp.theory[f]:.6f}  sim {cmp.measured[f]:.6f} Mbps  rel err {e:+.4f}")
    print(f"worst relative error {cmp.worst:.4f}: {'pass' if cmp.passed else 'FAIL'} at tolerance {cmp.tolerance:g}")
    return EXIT_OK if cmp.passed else EXIT_TOLERANCE


def cmd_figures(args) -> int:
    sc = load_scenario(args.scenario)
    res = _solve(sc, args.mode)
    config = configure_network(res)
    runs = run_many(sc.topology, config, _sim_config(sc, config, args.duration), _seeds(sc, args.seeds))
    thr = waterfill(sc.topology, "throughput")
    tim = waterfill(sc.topology, "time")
    paths = report.emit_figures(args.out, res, runs, sc.digest, sc.sim.seed, time_result=tim, throughput_result=thr)
    for p in paths:
        print(f"  wrote {p}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="meshfair", description="Max-min fair allocation and simulation for 802.11 mesh networks.")
    p.add_argument("--version", action="version", version=f"meshfair {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario=True):
        if scenario:
            sp.add_argument("--scenario", required=True, help="scenario JSON path or bundled name")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--verbose", "-v", action="store_true")

    sp = sub.add_parser("solve", help="compute the max-min fair allocation")
    common(sp)
    sp.add_argument("--mode", choices=MODES)
    sp.add_argument("--method", choices=METHODS)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("simulate", help="run the slot simulator")
    common(sp)
    sp.add_argument("--mode", choices=MODES)
    sp.add_argument("--wlan-config", help="wlan_config.csv from solve (solved afresh when omitted)")
    sp.add_argument("--seeds", type=int, default=1, help="number of seeds, counted up from the scenario seed")
    sp.add_argument("--duration", type=float, help="simulated seconds (overrides the scenario)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("rate-region", help="symmetric boundary points and efficiency ratios")
    common(sp, scenario=False)
    sp.add_argument("--a", type=float, default=0.01, help="idle slot over frame duration")
    sp.add_argument("--n-min", type=int, default=2)
    sp.add_argument("--n-max", type=int, default=32)
    sp.set_defaults(func=cmd_rate_region)

    sp = sub.add_parser("oracle", help="cross-check water-filling against a brute-force grid")
    common(sp)
    sp.add_argument("--mode", choices=MODES)
    sp.add_argument("--tolerance", type=float, default=0.01)
    sp.set_defaults(func=cmd_oracle, out=None)

    sp = sub.add_parser("compare", help="simulated against theoretical flow rates")
    sp.add_argument("--allocation", required=True)
    sp.add_argument("--flows", required=True)
    sp.add_argument("--tolerance", type=float, default=0.1)
    sp.add_argument("--verbose", "-v", action="store_true")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("figures", help="CSV data behind the standard figures")
    common(sp)
    sp.add_argument("--mode", choices=MODES)
    sp.add_argument("--seeds", type=int, default=1)
    sp.add_argument("--duration", type=float)
    sp.set_defaults(func=cmd_figures)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if getattr(args, "seeds", 1) < 1:
            raise ScenarioError("--seeds must be at least 1")
        if getattr(args, "duration", None) is not None and not args.duration > 0:
            raise ScenarioError("--duration must be positive")
        return args.func(args)
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ScenarioError, DomainError, ValueError, KeyError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
