"""Command-line entry points.

Subcommands: check, discretize, sweep, bounds, couple, calibrate, plot.
Flags are long-form only.  When ``--config`` points at a JSON document, values
found there override command-line flags.  Exit codes: 0 on success, 1 on
configuration errors, 2 on assertion or bound violations.

Config schema (all sections optional except where a subcommand needs them)::

    {
      "seed": 42,
      "target":   {"family": "gaussian", "params": {"sigma": 0.5},
                   "support": [-1.0, 1.0], "mode": 0.0, "L": 1.1},
      "proposal": {"family": "uniform-ball", "epsilon": 0.1},
      "sweep":    {"target_families": ["uniform"], "eps_over_L": [0.25, 0.125],
                   "L": [1.0], "proposal_family": "uniform-ball", "n": 512},
      "thresholds":  {"mixing": 0.25, "restricted": 0.125},
      "calibration": {"C_mixing": 1.0, "C_gap": 1.0, "C_hit": 2.0, "T": 8},
      "coupling":    {"start": 0.5, "n_runs": 2000, "k_max": 6, "C_hit": 2.0},
      "drift":       {"gamma": 0.5, "K": 1.0, "tau": 10}
    }

Setting "calibration" to the string "calibrate" makes ``sweep`` run once at
unit constants, fit the constants on its own rows, and rerun with the fit.
"""

from __future__ import annotations

import argparse
import json
import sys


from . import bounds as bd
from . import coupling as cp
from . import harness as hn
from . import operator_lab as ol
from .kernel import MHKernel
from .model import (check_near_uniform, check_unimodal, proposal_from_config,
                    target_from_config, verify_envelope)


class ConfigError(ValueError):
    pass


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc


def _need(cfg, key):
    if key not in cfg:
        raise ConfigError(f"config is missing the {key!r} section")
    return cfg[key]


def _kernel_from_config(cfg) -> MHKernel:
    target = target_from_config(_need(cfg, "target"))
    proposal = proposal_from_config(_need(cfg, "proposal"))
    return MHKernel(target, proposal)


def cmd_check(args):
    cfg = _load_config(args.config)
    kernel = _kernel_from_config(cfg)
    target, proposal = kernel.target, kernel.proposal
    uni = check_unimodal(target, args.grid_size)
    near = check_near_uniform(target, proposal.epsilon)
    env = verify_envelope(proposal)
    out = {
        "unimodal": {"pass": uni.passed, "first_violation": uni.first_violation,
                     "plateau_halfwidth": uni.plateau_halfwidth},
        "plateau_wider_than_2eps": uni.plateau_halfwidth > 2 * proposal.epsilon,
        "near_uniform": {"pass": near.passed, "ratio": near.ratio},
        "envelope": {"pass": env.passed, "delta1": env.delta1, "c1": env.c1,
                     "c2": env.c2, "violations": list(env.violations)[:16]},
    }
    print(json.dumps(out, indent=2))
    return 0 if (uni.passed and near.passed and env.passed) else 2


def cmd_discretize(args):
    cfg = _load_config(args.config)
    kernel = _kernel_from_config(cfg)
    n = cfg.get("sweep", {}).get("n", args.n)
    chain = ol.build_matrix(kernel, n)
    chain.validate()
    if args.out:
        ol.export_text(chain, args.out)
    print(json.dumps({
        "n": chain.n,
        "spectral_gap": ol.spectral_gap(chain),
        "path_gap_bound": ol.discrete_path_gap_bound(chain),
        "detailed_balance_error": ol.detailed_balance_error(chain),
        "out": args.out,
    }))
    return 0


def cmd_sweep(args):
    cfg = _load_config(args.config)
    if args.seed is not None and "seed" not in cfg:
        cfg["seed"] = args.seed
    self_calibrate = cfg.get("calibration") == "calibrate"
    if self_calibrate:
        cfg = dict(cfg, calibration=None)
    config = hn.SweepConfig.from_dict(cfg)
    rows, tv_rows = hn.run_sweep(config)
    if self_calibrate:
        config.calibration = bd.calibrate_constants(rows)
        rows, tv_rows = hn.run_sweep(config)
    import os
    os.makedirs(args.out_dir, exist_ok=True)
    csv_path = os.path.join(args.out_dir, "sweep.csv")
    hn.write_sweep_csv(rows, csv_path)
    hn.write_tv_csv(tv_rows, os.path.join(args.out_dir, "tv_curves.csv"))
    print(json.dumps({"rows": len(rows), "csv": csv_path}))
    if not all(r["path_bound_valid"] for r in rows):
        return 2
    calibrated = self_calibrate or bool(cfg.get("calibration"))
    if calibrated and not all(
            r["mixing_bound_dominates"] and r["gap_bound_dominates"] for r in rows):
        return 2
    return 0


def cmd_bounds(args):
    cfg = _load_config(args.config)
    kernel = _kernel_from_config(cfg)
    drift_cfg = cfg.get("drift", {})
    cal = cfg.get("calibration", {})
    report = bd.BoundReport(
        eps=kernel.proposal.epsilon, delta1=kernel.proposal.delta1,
        c1=kernel.proposal.c1, c2=kernel.proposal.c2,
        L=kernel.target.L, d=1, p_m=kernel.target.p_theta_at_mode,
        gamma=drift_cfg.get("gamma", args.gamma),
        K=drift_cfg.get("K", args.K),
        tau=drift_cfg.get("tau", args.tau),
        C_mixing=cal.get("C_mixing", 1.0), C_gap=cal.get("C_gap", 1.0),
        C_hit=cal.get("C_hit", 2.0), T=cal.get("T", 8),
    ).evaluate()
    print(report.to_json())
    return 0


def cmd_couple(args):
    cfg = _load_config(args.config)
    kernel = _kernel_from_config(cfg)
    cc = cfg.get("coupling", {})
    seed = cfg.get("seed", args.seed)
    if seed is None:
        raise ConfigError("couple needs a seed (config 'seed' or --seed)")
    start = cc.get("start", args.start)
    if start is None:
        m, L = kernel.target.mode, kernel.target.L
        start = m + 0.5 * (kernel.domain[1] - m)
    tail = cp.hitting_tail(
        kernel, float(start), n_runs=cc.get("n_runs", args.runs), seed=seed,
        C_hit=cc.get("C_hit", 2.0), k_max=cc.get("k_max", args.k_max))
    import os
    os.makedirs(args.out_dir, exist_ok=True)
    hn.write_tails_csv({"run0": tail}, os.path.join(args.out_dir, "tails.csv"))
    if args.dump_trajectory:
        traj = cp.run_triple(kernel, float(start), tail.T0 * args.k_max,
                             seed=seed)
        traj.to_csv(args.dump_trajectory)
    print(json.dumps({
        "T0": tail.T0, "n_runs": tail.n_runs, "decay_rate": tail.decay_rate,
        "r2": tail.r2, "degenerate": tail.degenerate,
        "tail": [float(t) for t in tail.tail],
    }))
    return 0


def cmd_calibrate(args):
    frame = hn.read_sweep_csv(args.csv)
    rows = [
        {"eps": float(r.eps), "delta1": float(r.delta1), "L": float(r.L),
         "p_m": float(r.p_m), "d": 1, "exact_tau": float(r.exact_tau),
         "exact_gap": float(r.exact_gap)}
        for r in frame.itertuples()
    ]
    constants = bd.calibrate_constants(rows)
    payload = constants.to_json()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(payload + "\n")
    print(payload)
    return 0


def cmd_plot(args):
    written = hn.emit_plots(args.csv, args.out_dir, tv_csv=args.tv_csv,
                            tails_csv=args.tails_csv)
    print(json.dumps({"written": written}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mhlab", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="verify structural hypotheses of a target/proposal pair")
    c.add_argument("--config", required=True)
    c.add_argument("--grid-size", type=int, default=1001)
    c.set_defaults(func=cmd_check)

    c = sub.add_parser("discretize", help="build and export the exact matrix twin")
    c.add_argument("--config", required=True)
    c.add_argument("--n", type=int, default=1024)
    c.add_argument("--out", default=None)
    c.set_defaults(func=cmd_discretize)

    c = sub.add_parser("sweep", help="run a validation sweep and write CSV reports")
    c.add_argument("--config", required=True)
    c.add_argument("--out-dir", required=True)
    c.add_argument("--seed", type=int, default=None)
    c.set_defaults(func=cmd_sweep)

    c = sub.add_parser("bounds", help="evaluate every closed-form bound at one point")
    c.add_argument("--config", required=True)
    c.add_argument("--gamma", type=float, default=None)
    c.add_argument("--K", type=float, default=None)
    c.add_argument("--tau", type=int, default=None)
    c.set_defaults(func=cmd_bounds)

    c = sub.add_parser("couple", help="hitting-time tail experiment")
    c.add_argument("--config", required=True)
    c.add_argument("--out-dir", required=True)
    c.add_argument("--runs", type=int, default=1000)
    c.add_argument("--k-max", type=int, default=6)
    c.add_argument("--start", type=float, default=None)
    c.add_argument("--seed", type=int, default=None)
    c.add_argument("--dump-trajectory", default=None,
                   help="also write one full (X, Y, Z) trajectory CSV here")
    c.set_defaults(func=cmd_couple)

    c = sub.add_parser("calibrate", help="fit calibration constants from a training sweep")
    c.add_argument("--csv", required=True)
    c.add_argument("--out", default=None)
    c.set_defaults(func=cmd_calibrate)

    c = sub.add_parser("plot", help="emit SVG panels from sweep/TV/tail CSVs")
    c.add_argument("--csv", required=True)
    c.add_argument("--out-dir", required=True)
    c.add_argument("--tv-csv", default=None)
    c.add_argument("--tails-csv", default=None)
    c.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (AssertionError, cp.CouplingOrderError) as exc:
        print(f"assertion violation: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
