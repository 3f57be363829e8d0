"""Command-line entry points.

Subcommands: ``simulate`` (trace CSV + convergence report), ``portrait``
(zero-dynamics phase-portrait CSV), ``verify`` (invariant suite, PASS/FAIL
per check) and ``baseline`` (computed-torque run on the same scenario).
Exit status: 0 success, 1 run fault or failed checks, 2 config error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .config import (
    build_scenario,
    config_hash,
    default_config,
    parse_config,
    serialize_config,
)
from .errors import ConfigError, PathsyncError
from .simulate import (
    AugmentedState,
    Scenario,
    convergence_metrics,
    integrate,
    verify_power_balance,
    write_portrait_csv,
    write_trace_csv,
    zero_dynamics_portrait,
)

# Offset used by the reference-invariance check: start exactly on the
# reference, time-shifted by this amount.
_INVARIANCE_OFFSET = 0.3


def _load_config(args):
    if args.config is None:
        raise ConfigError(["--config <file> is required"])
    try:
        with open(args.config) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([f"cannot read config: {exc}"]) from exc
    return parse_config(text)


def _prepare_out(args, cfg) -> str:
    out = args.out if args.out else cfg["output.dir"]
    os.makedirs(out, exist_ok=True)
    return out


def _write_report(out: str, name: str, payload: dict) -> None:
    with open(os.path.join(out, name), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _echo_config(out: str, cfg) -> None:
    with open(os.path.join(out, "config.echo.cfg"), "w") as fh:
        fh.write(serialize_config(cfg))


def _run_and_report(cfg, scenario: Scenario, out: str, stem: str) -> int:
    trace = integrate(scenario)
    write_trace_csv(trace, os.path.join(out, f"{stem}.csv"))
    report = {"config_hash": config_hash(cfg), "controller": scenario.controller}
    if trace.fault is not None:
        report["fault"] = trace.fault
        report["samples"] = len(trace)
        _write_report(out, f"{stem}_report.json", report)
        print(f"run fault after {len(trace)} samples: {trace.fault}", file=sys.stderr)
        return 1
    report["metrics"] = convergence_metrics(trace)
    _write_report(out, f"{stem}_report.json", report)
    print(f"wrote {stem}.csv and {stem}_report.json to {out}")
    return 0


def _cmd_simulate(args) -> int:
    if args.print_defaults:
        sys.stdout.write(serialize_config(default_config()))
        return 0
    cfg = _load_config(args)
    out = _prepare_out(args, cfg)
    _echo_config(out, cfg)
    return _run_and_report(cfg, build_scenario(cfg), out, "trace")


def _cmd_baseline(args) -> int:
    cfg = _load_config(args)
    out = _prepare_out(args, cfg)
    _echo_config(out, cfg)
    scenario = build_scenario(cfg)
    scenario = type(scenario)(
        **{**scenario.__dict__, "controller": "computed_torque"}
    )
    return _run_and_report(cfg, scenario, out, "baseline_trace")


def _read_seed_grid(filename) -> list[tuple[float, float]]:
    seeds = []
    with open(filename) as fh:
        for lineno, raw in enumerate(fh, start=1):
            body = raw.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.split(",")
            if len(parts) != 2:
                raise ConfigError([f"seed grid line {lineno}: expected 's0,sdot0'"])
            seeds.append((float(parts[0]), float(parts[1])))
    if not seeds:
        raise ConfigError([f"seed grid {filename}: no seeds"])
    return seeds


def _default_seed_grid(rm) -> list[tuple[float, float]]:
    lo, hi = rm.path.domain
    s_vals = np.linspace(lo, hi, 5, endpoint=False)
    sdot_vals = (-1.0, -0.5, 0.0, 0.5, 1.0, 1.5)
    return [(float(s), sd) for s in s_vals for sd in sdot_vals]


def _cmd_portrait(args) -> int:
    cfg = _load_config(args)
    out = _prepare_out(args, cfg)
    _echo_config(out, cfg)
    scenario = build_scenario(cfg)
    if args.seed_grid:
        seeds = _read_seed_grid(args.seed_grid)
    else:
        seeds = _default_seed_grid(scenario.rm)
    trajectories = zero_dynamics_portrait(
        scenario.rm, seeds, horizon=cfg["integrator.horizon"], step=cfg["integrator.step"]
    )
    write_portrait_csv(trajectories, os.path.join(out, "portrait.csv"))
    faults = [tr for tr in trajectories if tr.fault is not None]
    _write_report(
        out,
        "portrait_report.json",
        {
            "config_hash": config_hash(cfg),
            "seeds": len(trajectories),
            "faulted_seeds": [
                {"seed_id": tr.seed_id, "fault": tr.fault} for tr in faults
            ],
        },
    )
    print(f"wrote portrait.csv ({len(trajectories)} seeds, {len(faults)} faults) to {out}")
    return 0


def _cmd_verify(args) -> int:
    cfg = _load_config(args)
    scenario = build_scenario(cfg)
    rm = scenario.rm
    checks: list[tuple[str, bool, str]] = []

    # Reference-input identity: dW_r/ds + <q_r', tau_r> = 0 along the path.
    lo, hi = rm.path.domain
    interior = np.linspace(lo, hi, 1002)[1:-1]
    resid = max(
        abs(-rm.reference_input(float(s)) + float(rm.path.d1(float(s)) @ rm.reference_force(float(s))))
        for s in interior
    )
    tol = 1e-8 if rm.path.backing == "analytic" else 1e-4
    checks.append(
        ("reference-input identity", resid <= tol, f"max residual {resid:.3e} (tol {tol:.0e})")
    )

    # On-reference invariance: a run started exactly on the reference stays there.
    s0 = -_INVARIANCE_OFFSET
    inv_scn = type(scenario)(
        **{
            **scenario.__dict__,
            "controller": "theorem1",
            "horizon": 10.0,
            "initial": AugmentedState(
                q=rm.path.value(s0),
                qdot=rm.path.d1(s0),
                s=s0,
                sdot=1.0,
                sigma=s0,
            ),
        }
    )
    inv_trace = integrate(inv_scn)
    if inv_trace.fault is not None:
        checks.append(("on-reference invariance", False, f"fault: {inv_trace.fault}"))
        pb_trace = None
    else:
        err = max(
            float(np.max(np.abs(inv_trace.q[i] - rm.path.value(float(t - _INVARIANCE_OFFSET)))))
            for i, t in enumerate(inv_trace.t)
        )
        checks.append(
            ("on-reference invariance", err <= 1e-6, f"max |q - q_r(t - t0)| = {err:.3e}")
        )
        pb_trace = inv_trace

    # Closed-loop power identity on the configured initial condition.
    pb_scn = type(scenario)(**{**scenario.__dict__, "controller": "theorem1"})
    trace = integrate(pb_scn)
    if trace.fault is not None:
        checks.append(("closed-loop power balance", False, f"fault: {trace.fault}"))
    else:
        report = verify_power_balance(trace)
        checks.append(
            (
                "closed-loop power balance",
                report["passed"],
                f"max residual {report['max_residual']:.3e} "
                f"(threshold {report['threshold']:.3e})",
            )
        )

    all_pass = True
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        all_pass = all_pass and ok
    return 0 if all_pass else 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pathsync",
        description="Energy-based trajectory tracking: scenario simulator and checks.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="run configuration file")
        p.add_argument("--out", help="output directory (default: output.dir from config)")

    p_sim = sub.add_parser("simulate", help="run a closed-loop scenario")
    add_common(p_sim)
    p_sim.add_argument(
        "--print-defaults",
        action="store_true",
        help="print the default configuration and exit",
    )
    p_sim.set_defaults(func=_cmd_simulate)

    p_por = sub.add_parser("portrait", help="zero-dynamics phase portrait")
    add_common(p_por)
    p_por.add_argument("--seed-grid", help="CSV of s0,sdot0 seeds (one per line)")
    p_por.set_defaults(func=_cmd_portrait)

    p_ver = sub.add_parser("verify", help="run the invariant suite on a config")
    add_common(p_ver)
    p_ver.set_defaults(func=_cmd_verify)

    p_base = sub.add_parser("baseline", help="computed-torque baseline run")
    add_common(p_base)
    p_base.set_defaults(func=_cmd_baseline)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help/--version
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 2
    except PathsyncError as exc:
        print(f"run fault: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
