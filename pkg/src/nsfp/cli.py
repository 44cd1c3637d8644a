"""Command line entry point ``nsfp``.

Every configuration key is also a flag (``--ensemble-size 20000``); flags
override the config file or preset. Exit codes: 0 success, 2 validation
failure, 3 numerical failure, 4 replay mismatch.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import warnings

import numpy as np

from . import besov, config as cfgmod, counterexample, density, fokker_planck as fpk
from .config import ConfigError, RunConfig
from .pipeline import (NUMERICAL_ERRORS, PLOT_COLUMNS, StageError, ValidationError, common_grid, emit_plot_data,
                       estimate, load_report, output_root, replay, run_pipeline, simulate, validate)

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_REPLAY = 0, 2, 3, 4

CONFIG_COMMANDS = ("validate", "simulate", "density", "drift", "solve-fp", "report")


def _add_config_args(p):
    p.add_argument("config", nargs="?", help="flat key = value config file")
    p.add_argument("--preset", choices=sorted(cfgmod.PRESETS), help="start from a named preset")
    p.add_argument("--out", help=f"output directory (default ${'{'}NSFP_OUTPUT_ROOT{'}'}/<name>)")
    p.add_argument("--force", action="store_true", help="continue past failed assumption checks")
    group = p.add_argument_group("configuration keys")
    for key, f in cfgmod.SCHEMA.items():
        group.add_argument("--" + key.replace("_", "-"), dest=f"set_{key}", metavar=f.metadata["kind"].upper(),
                           help=f.metadata["doc"])


def build_parser():
    ap = argparse.ArgumentParser(prog="nsfp", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in CONFIG_COMMANDS:
        p = sub.add_parser(name)
        _add_config_args(p)
        if name == "validate":
            p.add_argument("--print-config", action="store_true", help="echo the resolved config")
        if name == "report":
            p.add_argument("--emit", action="append", default=[], choices=sorted(PLOT_COLUMNS),
                           help="also print the path of this table's CSV")
    p = sub.add_parser("besov", help="Besov and Hoelder norms of a saved density CSV")
    p.add_argument("density", help="CSV written by the density or solve-fp commands")
    p.add_argument("--alpha", type=float, action="append", help="Hoelder exponents (default 0.25, 0.5, 0.75)")
    p = sub.add_parser("bootstrap", help="exponent iteration reaching d/2")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--alpha0", type=float, required=True)
    p = sub.add_parser("counterexample", help="bounded planar density with unbounded marginal")
    p.add_argument("--K", type=int, action="append", help="lattice windows (default 2, 4, 8)")
    p.add_argument("--nodes-per-unit", type=int, default=64)
    p.add_argument("--out")
    p = sub.add_parser("replay", help="re-run a report's config and compare byte for byte")
    p.add_argument("report", help="report.json or its directory")
    p.add_argument("--out")
    sub.add_parser("keys", help="list configuration keys")
    return ap


def resolve_config(args) -> RunConfig:
    if args.config and args.preset:
        raise ConfigError("give either a config file or --preset, not both")
    if args.config:
        cfg = cfgmod.load(args.config)
    elif args.preset:
        cfg = cfgmod.preset(args.preset)
    else:
        cfg = RunConfig()
    over = {k: cfgmod.parse_value(k, getattr(args, f"set_{k}")) for k in cfgmod.SCHEMA
            if getattr(args, f"set_{k}") is not None}
    return cfg.with_values(**over).check() if over else cfg.check()


def _out_dir(args, cfg=None, default="run"):
    if getattr(args, "out", None):
        return args.out
    return os.path.join(output_root(), cfg.name if cfg is not None else default)


def write_snapshots(snaps, path):
    """Long-format CSV ``t, member, x_1..x_d, b_1..b_d, h, v`` plus a JSON sidecar."""
    d = snaps[0].d
    header = ["t", "member"] + [f"x_{j + 1}" for j in range(d)] + [f"b_{j + 1}" for j in range(d)] + ["h", "v"]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for s in snaps:
            block = np.column_stack([np.full(s.size, s.t), s.members.astype(np.float64), s.x, s.b, s.h, s.v])
            np.savetxt(fh, block, delimiter=",", fmt=["%.17g", "%d"] + ["%.17g"] * (2 * d + 2))
    side = {"times": [s.t for s in snaps], "members": int(snaps[0].size), "d": d, "nu": snaps[0].nu}
    with open(os.path.splitext(path)[0] + ".json", "w") as fh:
        json.dump(side, fh, indent=2, sort_keys=True)


def _cmd_validate(args, cfg):
    ok, rows = validate(cfg)
    if args.print_config:
        print(cfgmod.dumps(cfg), end="")
    for r in rows:
        print(f"{'PASS' if r['passed'] else 'FAIL'}  {r['name']:16s} {r['detail']}")
    return EXIT_OK if ok else EXIT_VALIDATION


def _require_valid(cfg, force):
    ok, rows = validate(cfg)
    if not ok:
        msg = "; ".join(f"{r['name']}: {r['detail']}" for r in rows if not r["passed"])
        if not force:
            raise ValidationError(msg)
        warnings.warn(f"ASSUMPTIONS VIOLATED, continuing because of --force: {msg}", RuntimeWarning, stacklevel=2)


def _stage_outputs(args, cfg):
    _require_valid(cfg, args.force)
    out = _out_dir(args, cfg)
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config.txt"), "w") as fh:
        fh.write(cfgmod.dumps(cfg))
    F = cfg.subspace()
    snaps = simulate(cfg, F)
    if args.command == "simulate":
        path = os.path.join(out, "snapshots.csv")
        write_snapshots(snaps, path)
        print(path)
        return EXIT_OK
    grid = common_grid(cfg, snaps)
    dens, drifts = estimate(cfg, snaps, grid, F)
    if args.command == "density":
        for f in dens:
            path = os.path.join(out, f"density_t{f.t:.6f}.csv")
            density.save_density(f, path)
            print(path)
    elif args.command == "drift":
        for g in drifts:
            path = os.path.join(out, f"drift_t{g.t:.6f}.csv")
            density.save_drift(g, path)
            print(path)
    else:
        hk = fpk.HeatKernelF(F.cov_F)
        states = fpk.solve_fp(snaps[0].x[0], [(g.t, g) for g in drifts], cfg.T, cfg.fp_dt, grid.axes(), hk,
                              out_times=[f.t for f in dens if f.t >= cfg.effective_t_min - 1e-12])
        path = os.path.join(out, "fp_trajectory.csv")
        fpk.save_trajectory(states, path, {"fp_dt": cfg.fp_dt, "T": cfg.T, "cov": F.cov_F.tolist()})
        print(path)
    return EXIT_OK


def _cmd_report(args, cfg):
    out = _out_dir(args, cfg)
    report = run_pipeline(cfg, out_dir=out, force=args.force)
    print(os.path.join(out, "report.json"))
    for name in args.emit:
        print(emit_plot_data(report, name, os.path.join(out, f"{name}.csv")))
    for k, v in sorted(report.scalars.items()):
        print(f"{k} = {json.dumps(v, sort_keys=True)}")
    return EXIT_OK


def _cmd_besov(args):
    dens = density.load_density(args.density)
    f = besov.GridFunction.of(dens)
    res = {"B1_1inf": besov.besov_seminorm(f, besov.BesovParams(1.0, 1.0, math.inf, 2)),
           "sup": float(np.max(f.values))}
    for a in args.alpha or (0.25, 0.5, 0.75):
        res[f"holder[{a!r}]"] = besov.holder_norm(f, a)
    print(json.dumps(res, indent=1, sort_keys=True))
    return EXIT_OK


def _cmd_bootstrap(args):
    seq = besov.bootstrap_exponents(args.d, args.p, args.alpha0)
    print(" ".join(repr(a) for a in seq))
    return EXIT_OK


def _cmd_counterexample(args):
    out = args.out or os.path.join(output_root(), "counterexample")
    os.makedirs(out, exist_ok=True)
    for K in args.K or (2, 4, 8):
        joint, marg = counterexample.counterexample_density(K, counterexample.default_grid(K, args.nodes_per_unit))
        np.savetxt(os.path.join(out, f"marginal_K{K}.csv"), np.column_stack([marg.axes[0], marg.values]),
                   delimiter=",", header="x1,marginal", comments="", fmt="%.17g")
        print(f"K={K} joint_sup={float(joint.values.max())!r} marginal_sup={float(marg.values.max())!r}")
    return EXIT_OK


def _cmd_replay(args):
    old = load_report(args.report)
    same, where, _ = replay(args.report, out_dir=args.out)
    if same:
        print(f"replay identical ({old.provenance.get('config_sha256', '?')})")
        return EXIT_OK
    print(f"replay mismatch at {where}", file=sys.stderr)
    return EXIT_REPLAY


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "keys":
            print(cfgmod.describe(), end="")
            return EXIT_OK
        if args.command == "bootstrap":
            return _cmd_bootstrap(args)
        if args.command == "counterexample":
            return _cmd_counterexample(args)
        if args.command == "besov":
            return _cmd_besov(args)
        if args.command == "replay":
            return _cmd_replay(args)
        cfg = resolve_config(args)
        if args.command == "validate":
            return _cmd_validate(args, cfg)
        if args.command == "report":
            return _cmd_report(args, cfg)
        return _stage_outputs(args, cfg)
    except (ConfigError, ValidationError, besov.BesovParamError, fpk.FPDomainError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except NUMERICAL_ERRORS as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
